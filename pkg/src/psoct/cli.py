"""Command line driver: ``psoct {forward,extract,invert,roundtrip,selftest}``.

Every command reads one JSON config; flags override scalar knobs only.
Outputs land in ``--out`` together with ``manifest.json`` (all parameters,
deterministic) and ``timings.json`` (wall-clock, not deterministic).

Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

log = logging.getLogger("psoct")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")
MANIFEST = "manifest.json"


class DataError(ValueError):
    """Input directory missing, incomplete or inconsistent."""


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _peek_threads(args) -> int:
    """Thread count before numpy is imported (flag, else config, else 1)."""
    if args.threads is not None:
        return args.threads
    try:
        return int(json.loads(Path(args.config).read_text()).get("threads", 1))
    except (OSError, ValueError, TypeError, AttributeError):
        return 1


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _read_manifest(directory: Path, expect: str) -> dict:
    path = directory / MANIFEST
    if not path.is_file():
        raise FileNotFoundError(f"no {MANIFEST} in {directory}")
    try:
        man = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupted manifest {path}: {exc}") from exc
    if not isinstance(man, dict) or "stage" not in man:
        raise DataError(f"corrupted manifest {path}: no 'stage' entry")
    if expect not in man.get("stages", [man["stage"]]):
        raise DataError(f"{path} holds '{man['stage']}' output, need '{expect}'")
    return man


def _ig_name(k: int, d: int) -> str:
    return f"k{k + 1}_d{d:04d}.csv"


def _load_config(args):
    from .config import RunConfig
    cfg = RunConfig.load(args.config)
    cfg.override(seed=args.seed, threads=args.threads, reg_lambda=getattr(args, "reg_lambda", None))
    return cfg


def _base_manifest(cfg, stage: str) -> dict:
    from . import __version__
    return {"stage": stage, "version": __version__, "seed": cfg.raw["seed"],
            "config": cfg.to_dict(), "measurement_grid": cfg.measurement_grid.to_dict()}


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def run_forward(cfg, out: Path, timings: dict) -> dict:
    import numpy as np
    from .arrayio import save_array
    from .phantom import rasterize
    from .simulate import simulate_measurements

    t0 = time.perf_counter()
    sus = rasterize(cfg.phantom)
    mg, pulse, thetas = cfg.measurement_grid, cfg.pulse, cfg.thetas
    m = cfg.raw["measurement"]
    rng = np.random.default_rng(cfg.raw["seed"])
    igs, igs0 = simulate_measurements(sus, cfg.setups, mg, pulse, thetas, cfg.rho,
                                      int(m["born_order"]), float(m["noise"]), rng, cfg.c)
    timings["forward"] = time.perf_counter() - t0
    for sub, group in (("measured", igs), ("background", igs0)):
        d = out / "interferograms" / sub
        d.mkdir(parents=True, exist_ok=True)
        for k, row in enumerate(group):
            for i, ig in enumerate(row):
                ig.save(d / _ig_name(k, i))
    save_array(out / "thetas.bin", thetas, "float64")
    man = _base_manifest(cfg, "forward")
    man.update({"n_directions": int(thetas.shape[0]), "n_setups": len(igs),
                "interferograms": {"measured": "interferograms/measured",
                                   "background": "interferograms/background",
                                   "pattern": "k{setup}_d{direction:04d}.csv"},
                "arrays": {"thetas": "thetas.bin"}})
    return man


def _load_interferograms(data: Path, man: dict):
    from .measurement import Interferogram
    n_dir, n_set = int(man["n_directions"]), int(man["n_setups"])
    out = []
    for sub in ("measured", "background"):
        d = data / man["interferograms"][sub]
        group = []
        for k in range(n_set):
            row = []
            for i in range(n_dir):
                p = d / _ig_name(k, i)
                if not p.is_file():
                    raise DataError(f"missing interferogram {p}")
                try:
                    row.append(Interferogram.load(p))
                except (KeyError, TypeError) as exc:
                    raise DataError(f"{p}: malformed sidecar ({exc})") from exc
            group.append(row)
        out.append(group)
    return out


def run_extract(cfg, data: Path, out: Path, timings: dict) -> dict:
    import numpy as np
    from .arrayio import save_array
    from .simulate import extract_kspace

    man_in = _read_manifest(data, "forward")
    t0 = time.perf_counter()
    igs, igs0 = _load_interferograms(data, man_in)
    eps = cfg.phantom.eps
    if eps == 0:
        raise ValueError("phantom eps = 0: M = (I - I0)/eps is undefined (data equal I0)")
    omegas = cfg.frequencies.omegas
    ks = extract_kspace(igs, igs0, eps, omegas, cfg.c)
    timings["extract"] = time.perf_counter() - t0
    save_array(out / "m_tilde.bin", ks.m, "complex64")
    save_array(out / "sample_omegas.bin", ks.omegas, "float64")
    save_array(out / "sample_thetas.bin", ks.thetas, "float64")
    man = _base_manifest(cfg, "extract")
    man.update({"source": os.path.relpath(data, out), "eps": eps, "rho": ks.rho,
                "n_samples": int(len(ks.omegas)), "omegas": [float(w) for w in omegas],
                "arrays": {"m_tilde": "m_tilde.bin", "omegas": "sample_omegas.bin",
                           "thetas": "sample_thetas.bin"}})
    return man


def run_invert(cfg, data: Path, out: Path, timings: dict) -> dict:
    import numpy as np
    from .arrayio import load_array, save_array
    from .inverse.gridding import grid_and_invert
    from .inverse.pipeline import reconstruct

    man_in = _read_manifest(data, "extract")
    arr = man_in.get("arrays", {})
    try:
        m = load_array(data / arr["m_tilde"]).astype(complex)
        om = load_array(data / arr["omegas"])
        th = load_array(data / arr["thetas"])
    except KeyError as exc:
        raise DataError(f"manifest in {data} lacks array entry {exc}") from exc
    if m.shape[1:] != (2, 2) or om.shape != (m.shape[0],) or th.shape != (m.shape[0], 3):
        raise DataError("inconsistent k-space array shapes")
    ph = cfg.phantom
    opt = cfg.inverse_options
    t0 = time.perf_counter()
    rec = reconstruct(ph.grid, om, th, m, ph.chi0, opt, cfg.c, setups=cfg.setups)
    timings["invert"] = time.perf_counter() - t0
    timings["blocks"] = [{k: b[k] for k in b if k.startswith("t_")} for b in rec.report["blocks"]]
    v = rec.v
    save_array(out / "psi_tilde.bin", rec.values, "complex64")
    save_array(out / "v.bin", v, "float64")
    arrays = {"psi_tilde": "psi_tilde.bin", "v": "v.bin"}
    report = {k: val for k, val in rec.report.items() if k != "blocks"}
    report["blocks"] = [{k: b[k] for k in b if not k.startswith("t_")} for b in rec.report["blocks"]]
    gcfg = cfg.raw["gridding"]
    coverage = None
    if gcfg["enabled"]:
        t1 = time.perf_counter()
        comps = rec.values.T
        if ph.chi0 == 0.0:
            comps = comps[:3]
        g = grid_and_invert(v, comps, ph.grid, int(gcfg["pad"]),
                            min_coverage=float(gcfg["min_coverage"]))
        timings["gridding"] = time.perf_counter() - t1
        save_array(out / "psi.bin", g.psi, "complex64")
        arrays["psi"] = "psi.bin"
        coverage = {"fraction": g.coverage, "k_radius": g.k_radius}
    man = _base_manifest(cfg, "invert")
    man.update({"source": os.path.relpath(data, out), "arrays": arrays, "report": _jsonable(report),
                "coverage": coverage, "components": ["11", "12", "22", "33"],
                "closed_form": bool(rec.report["closed_form"]),
                "voxel_grid": ph.grid.to_dict()})
    return man


def _jsonable(obj):
    import numpy as np
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return None if not np.isfinite(obj) else float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def recovery_errors(phantom, v, values) -> dict:
    """Relative l2 error of each recovered component against the analytic transform."""
    import numpy as np
    ref = phantom.analytic_ft(v)
    out = {}
    for i, name in enumerate(("11", "12", "22", "33")):
        got = values[:, i]
        if not np.all(np.isfinite(got)):
            continue
        out[name] = float(np.linalg.norm(got - ref[i]) / np.linalg.norm(ref[i]))
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _finish(out: Path, man: dict, timings: dict) -> None:
    _write_json(out / MANIFEST, _jsonable(man))
    _write_json(out / "timings.json", _jsonable(timings))


def cmd_forward(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    _finish(out, run_forward(cfg, out, timings), timings)
    return EXIT_OK


def cmd_extract(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    _finish(out, run_extract(cfg, Path(args.data), out, timings), timings)
    return EXIT_OK


def cmd_invert(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    man = run_invert(cfg, Path(args.data), out, timings)
    _finish(out, man, timings)
    return EXIT_OK


def cmd_roundtrip(args) -> int:
    from .arrayio import load_array
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    t0 = time.perf_counter()
    mans = [run_forward(cfg, out, timings)]
    _write_json(out / MANIFEST, _jsonable(mans[0]))
    mans.append(run_extract(cfg, out, out, timings))
    _write_json(out / MANIFEST, _jsonable(mans[1]))
    man = run_invert(cfg, out, out, timings)
    timings["total"] = time.perf_counter() - t0
    for m in mans:
        man["arrays"] = {**m.get("arrays", {}), **man["arrays"]}
    man.update({"stage": "roundtrip", "stages": ["forward", "extract", "invert", "roundtrip"],
                "interferograms": mans[0]["interferograms"],
                "n_directions": mans[0]["n_directions"], "n_setups": mans[0]["n_setups"],
                "eps": mans[1]["eps"], "n_samples": mans[1]["n_samples"]})
    errs = recovery_errors(cfg.phantom, load_array(out / "v.bin"), load_array(out / "psi_tilde.bin"))
    man["recovery_rel_l2"] = errs
    _finish(out, man, timings)
    for name, e in errs.items():
        print(f"psi~{name}: rel l2 error {e:.3%}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    from . import selftest
    ok = selftest.run(mutate=args.mutate, seed=args.seed or 0)
    print("selftest:", "PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_NUMERICAL


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="psoct", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_config=True, needs_data=False):
        sp.add_argument("--config", required=needs_config, help="run configuration (JSON)")
        if needs_config:
            sp.add_argument("--out", required=True, help="output directory")
        if needs_data:
            sp.add_argument("--data", required=True, help="directory written by the previous stage")
        sp.add_argument("--seed", type=int, default=None, help="RNG seed (overrides config)")
        sp.add_argument("--threads", type=int, default=None, help="BLAS/FFT worker count")
        sp.add_argument("--lambda", dest="reg_lambda", type=float, default=None,
                        help="Tikhonov parameter for psi~33 (overrides config)")

    common(sub.add_parser("forward", help="simulate interferograms from a phantom"))
    common(sub.add_parser("extract", help="interferograms -> k-space data"), needs_data=True)
    common(sub.add_parser("invert", help="k-space data -> psi~ samples and spatial psi"),
           needs_data=True)
    common(sub.add_parser("roundtrip", help="forward, extract and invert in one go"))
    st = sub.add_parser("selftest", help="identity checks with tolerances")
    common(st, needs_config=False)
    st.add_argument("--mutate", default=None, help=argparse.SUPPRESS)
    return p


COMMANDS = {"forward": cmd_forward, "extract": cmd_extract, "invert": cmd_invert,
            "roundtrip": cmd_roundtrip, "selftest": cmd_selftest}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=os.environ.get("PSOCT_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_VALIDATION
    if args.command != "selftest" or args.threads:
        n = str(_peek_threads(args)) if args.command != "selftest" else str(args.threads)
        for var in THREAD_VARS:
            os.environ.setdefault(var, n)

    import numpy as np
    from .arrayio import ArrayFileError
    from .inverse.gridding import CoverageError
    from .core import SingularityError
    from .inverse.reduced import ExcludedSampleError
    from .inverse.solve import RegularizationError, ResidualError
    from .measurement import ConditioningError

    numerical = (ResidualError, RegularizationError, ConditioningError, CoverageError,
                 SingularityError, np.linalg.LinAlgError, FloatingPointError)
    try:
        return COMMANDS[args.command](args)
    except numerical as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, FileNotFoundError, KeyError, ArrayFileError, ExcludedSampleError,
            DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
