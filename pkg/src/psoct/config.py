"""Run configuration: one JSON file drives every CLI command."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import FrequencySpec, PulseEnvelope, fibonacci_cap
from .inverse.pipeline import InverseOptions
from .jones import DEFAULT_PHI1, DEFAULT_PHI2, standard_setups
from .measurement import MIN_PERIODS, MeasurementGrid
from .phantom import PhantomSpec


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "phantom": None,
    "frequencies": {"center_nu": 0.45, "omegas": [0.3, 0.45, 0.6], "c": 1.0},
    "pulse": {"kind": "gaussian", "width": 0.05, "amplitude": 1.0, "n_sigma": 3.4},
    "detector": {"n_directions": 200, "min_cos": 0.3, "rho": 10.0},
    "polarization": {"phi1": DEFAULT_PHI1, "phi2": DEFAULT_PHI2},
    "measurement": {"periods": MIN_PERIODS, "noise": 0.0, "born_order": 2},
    "inverse": {"closure": "gram", "psi33_closure": "quadrature", "gram_alpha": 1e-6,
                "mode": "stacked", "lambda": None, "noise_level": None,
                "residual_tol": 1e-8, "max_excluded_fraction": 0.05, "delta_tie": 1e-3},
    "gridding": {"enabled": True, "pad": 2, "min_coverage": 0.0},
    "threads": 1,
    "seed": 0,
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in out:
            raise ConfigError(f"unknown configuration key {k!r}")
        if isinstance(out[k], dict) and isinstance(v, dict):
            for kk in v:
                if kk not in out[k]:
                    raise ConfigError(f"unknown configuration key {k}.{kk}")
            out[k].update(v)
        else:
            out[k] = v
    return out


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path = field(default_factory=Path.cwd)
    phantom: Optional[PhantomSpec] = None

    # -- construction -----------------------------------------------------
    @classmethod
    def from_dict(cls, d: dict, base_dir=None, load_phantom: bool = True) -> "RunConfig":
        cfg = cls(_merge(DEFAULTS, d), Path(base_dir or Path.cwd()))
        if load_phantom:
            cfg.phantom = cfg._load_phantom()
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path, load_phantom: bool = True) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            d = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(d, path.parent, load_phantom)

    def _load_phantom(self) -> PhantomSpec:
        ph = self.raw["phantom"]
        if ph is None:
            raise ConfigError("config has no 'phantom' entry")
        if isinstance(ph, dict):
            return PhantomSpec.from_dict(ph)
        p = Path(ph)
        if not p.is_absolute():
            p = self.base_dir / p
        return PhantomSpec.load(p)

    def override(self, seed=None, threads=None, reg_lambda=None) -> None:
        if seed is not None:
            self.raw["seed"] = int(seed)
        if threads is not None:
            self.raw["threads"] = int(threads)
        if reg_lambda is not None:
            self.raw["inverse"]["lambda"] = float(reg_lambda)
        self.validate()

    # -- derived objects ---------------------------------------------------
    @property
    def c(self) -> float:
        return float(self.raw["frequencies"]["c"])

    @property
    def frequencies(self) -> FrequencySpec:
        f = self.raw["frequencies"]
        return FrequencySpec(float(f["center_nu"]), float(f["c"]), [float(w) for w in f["omegas"]])

    @property
    def pulse(self) -> PulseEnvelope:
        p = self.raw["pulse"]
        return PulseEnvelope(self.frequencies.center_nu, float(p["width"]),
                             float(p["amplitude"]), p["kind"])

    @property
    def measurement_grid(self) -> MeasurementGrid:
        f = self.frequencies
        m = self.raw["measurement"]
        return MeasurementGrid.for_pulse(self.pulse, min(f.omegas), f.c, extra=f.omegas,
                                         periods=int(m["periods"]),
                                         n_sigma=float(self.raw["pulse"]["n_sigma"]))

    @property
    def thetas(self) -> np.ndarray:
        d = self.raw["detector"]
        return fibonacci_cap(int(d["n_directions"]), float(d["min_cos"]))

    @property
    def rho(self) -> float:
        return float(self.raw["detector"]["rho"])

    @property
    def setups(self):
        p = self.raw["polarization"]
        return standard_setups(float(p["phi1"]), float(p["phi2"]))

    @property
    def inverse_options(self) -> InverseOptions:
        i = self.raw["inverse"]
        return InverseOptions(closure=i["closure"], psi33_closure=i["psi33_closure"],
                              gram_alpha=float(i["gram_alpha"]), mode=i["mode"],
                              residual_tol=float(i["residual_tol"]),
                              reg_lambda=None if i["lambda"] is None else float(i["lambda"]),
                              noise_level=None if i["noise_level"] is None else float(i["noise_level"]),
                              max_excluded_fraction=float(i["max_excluded_fraction"]),
                              delta_tie=float(i["delta_tie"]),
                              min_cos=float(self.raw["detector"]["min_cos"]))

    # -- validation ----------------------------------------------------------
    def validate(self) -> None:
        try:
            f = self.frequencies
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not f.omegas:
            raise ConfigError("frequencies.omegas must list at least one frequency")
        d = self.raw["detector"]
        if not 0.0 <= float(d["min_cos"]) < 1.0:
            raise ConfigError("detector.min_cos must lie in [0, 1)")
        if int(d["n_directions"]) < 1:
            raise ConfigError("detector.n_directions must be positive")
        if float(d["rho"]) <= 0:
            raise ConfigError("detector.rho must be positive")
        if int(self.raw["measurement"]["born_order"]) not in (1, 2):
            raise ConfigError("measurement.born_order must be 1 or 2")
        if float(self.raw["measurement"]["noise"]) < 0:
            raise ConfigError("measurement.noise must be non-negative")
        if int(self.raw["threads"]) < 1:
            raise ConfigError("threads must be >= 1")
        lam = self.raw["inverse"]["lambda"]
        if lam is not None and not float(lam) > 0:
            raise ConfigError("inverse.lambda must be positive")
        try:
            pulse = self.pulse
            self.inverse_options
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if pulse.is_delta and (len(f.omegas) != 1 or not np.isclose(f.omegas[0], f.center_nu)):
            raise ConfigError("a delta pulse probes only its centre frequency")
        mg = self.measurement_grid
        try:
            mg.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        lo, hi = mg.omegas[0], mg.omegas[-1]
        for w in f.omegas:
            if not lo - 1e-12 <= w <= hi + 1e-12:
                raise ConfigError(f"inversion frequency {w:g} lies outside the pulse band "
                                  f"[{lo:g}, {hi:g}]")
        omega_max = mg.omega_max
        if self.phantom is not None:
            try:
                self.phantom.grid.check_resolution(omega_max, f.c)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        for p in (self.raw["polarization"]["phi1"], self.raw["polarization"]["phi2"]):
            if not np.isfinite(float(p)):
                raise ConfigError("plate angles must be finite")

    def to_dict(self) -> dict:
        d = copy.deepcopy(self.raw)
        if self.phantom is not None:
            d["phantom_resolved"] = self.phantom.to_dict()
        return d
