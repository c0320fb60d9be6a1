"""From k-space data ``m~`` to reconstructed ``psi~`` samples."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..core import double_cross, kspace_point
from ..forward import BACKGROUND_PATTERN, DEFAULT_SELF_CELL, VoxelGrid
from ..jones import DEFAULT_PHI1, DEFAULT_PHI2, PolarizationSetup
from . import kernels, reduced, solve

log = logging.getLogger(__name__)

CLOSURES = ("gram", "quadrature")
MODES = ("stacked", "per_frequency")


class TableMismatchError(KeyError):
    pass


@dataclass
class InverseOptions:
    closure: str = "gram"                 # second-kind system
    psi33_closure: str = "quadrature"     # first-kind psi33 equation
    gram_alpha: float = 1e-6
    mode: str = "stacked"
    residual_tol: float = solve.DEFAULT_RESIDUAL_TOL
    reg_lambda: Optional[float] = None
    noise_norm: Optional[float] = None     # absolute noise in the psi33 data
    noise_level: Optional[float] = None    # or relative to its norm
    delta_tie: float = reduced.DELTA_TIE
    delta_pole: float = reduced.DELTA_POLE
    max_excluded_fraction: float = 0.05
    min_cos: float = 0.3

    def __post_init__(self):
        if self.closure not in CLOSURES or self.psi33_closure not in CLOSURES:
            raise ValueError(f"closure must be one of {CLOSURES}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.reg_lambda is not None and not self.reg_lambda > 0:
            raise solve.RegularizationError("lambda must be positive")

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class ReconstructedPsi:
    """``psi~`` at the retained samples; ``values`` is ``(n, 4)`` in (11, 12, 22, 33) order."""

    omegas: np.ndarray
    thetas: np.ndarray
    values: np.ndarray
    c: float = 1.0
    report: dict = field(default_factory=dict)

    @property
    def v(self) -> np.ndarray:
        return kspace_point(self.omegas, self.thetas, self.c)


def quadrature_weights(grid: VoxelGrid, omegas, thetas, closure: str, alpha: float,
                       min_cos: float = 0.3, sweep=None, c: float = 1.0):
    if closure == "gram":
        return kernels.gram_weights(grid, kspace_point(omegas, thetas, c), alpha)
    return kernels.shell_weights(omegas, thetas, c, min_cos, sweep)


def _solve_block(grid, omegas, thetas, m, chi0, opt: InverseOptions, sweep, self_rule, c):
    v = kspace_point(omegas, thetas, c)
    b = reduced.data_to_b(m)
    t0 = time.perf_counter()
    if chi0 == 0.0:
        n = len(omegas)
        zeros = np.zeros((n, n, 3, 3), complex)
        system = reduced.reduce_system(thetas, zeros, zeros, 0.0, b)
        sol = solve.solve_second_kind(system, opt.residual_tol)
        vals = np.concatenate([sol.y, np.full((n, 1), np.nan + 0j)], axis=1)
        return vals, {"residual": sol.residual, "closed_form": True, "y4_leak": 0.0,
                      "t_table": 0.0, "t_solve": time.perf_counter() - t0}
    w = quadrature_weights(grid, omegas, thetas, opt.closure, opt.gram_alpha, opt.min_cos, sweep, c)
    table = kernels.KernelTable.build(grid, omegas, thetas, v, w, c, self_rule)
    tz, ty = table.effective()
    t1 = time.perf_counter()
    system = reduced.reduce_system(thetas, tz, ty, chi0, b)
    sol = solve.solve_second_kind(system, opt.residual_tol)
    t2 = time.perf_counter()
    g = solve.psi33_data(system, sol.y)
    if opt.psi33_closure != opt.closure:
        table.weights = quadrature_weights(grid, omegas, thetas, opt.psi33_closure,
                                           opt.gram_alpha, opt.min_cos, sweep, c)
        _, ty = table.effective()
    m3 = reduced.m_operators(ty)[..., 2]
    noise = opt.noise_norm
    if noise is None and opt.noise_level is not None:
        noise = opt.noise_level * float(np.linalg.norm(g))
    tk = solve.solve_psi33(m3, g, opt.reg_lambda, noise)
    t3 = time.perf_counter()
    vals = np.concatenate([sol.y, tk.y[:, None]], axis=1)
    return vals, {"residual": sol.residual, "closed_form": False, "y4_leak": system.y4_leak,
                  "lambda": tk.lam, "lambda_rule": tk.rule, "psi33_residual": tk.residual_norm,
                  "t_table": t1 - t0, "t_solve": t2 - t1, "t_psi33": t3 - t2}


def reconstruct(grid: VoxelGrid, omegas, thetas, m_tilde, chi0: float,
                options: Optional[InverseOptions] = None, c: float = 1.0,
                self_rule=DEFAULT_SELF_CELL, setups=None) -> ReconstructedPsi:
    """Recover ``psi~`` at every admissible sample.

    ``m_tilde`` is ``(n, 2, 2)`` indexed ``[sample, setup k, component j]``.
    With ``chi0 = 0`` only ``psi~11, psi~12, psi~22`` are determined and
    ``psi~33`` is reported as NaN.
    """
    opt = options or InverseOptions()
    if setups is not None and not all(s.uses_default_plates for s in setups):
        raise ValueError("the reduced system assumes plate angles pi/8 and pi/4")
    omegas = np.asarray(omegas, dtype=float)
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    m_tilde = np.asarray(m_tilde)
    keep = reduced.admissible_mask(thetas, opt.delta_tie, opt.delta_pole)
    excluded = int((~keep).sum())
    frac = excluded / max(len(keep), 1)
    if excluded:
        log.info("dropping %d samples inside the exclusion bands", excluded)
    if frac > opt.max_excluded_fraction:
        raise reduced.ExcludedSampleError(
            f"{excluded} of {len(keep)} samples excluded ({frac:.1%} > {opt.max_excluded_fraction:.0%})")
    omegas, thetas, m_tilde = omegas[keep], thetas[keep], m_tilde[keep]
    sweep = np.unique(omegas)
    report = {"n_samples": int(keep.sum()), "n_excluded": excluded, "chi0": chi0,
              "options": opt.to_dict(), "blocks": []}
    if opt.mode == "stacked":
        blocks = [np.arange(len(omegas))]
    else:
        blocks = [np.flatnonzero(omegas == w) for w in sweep]
    values = np.empty((len(omegas), 4), dtype=complex)
    for idx in blocks:
        vals, info = _solve_block(grid, omegas[idx], thetas[idx], m_tilde[idx], chi0, opt,
                                  sweep, self_rule, c)
        values[idx] = vals
        info["omegas"] = sorted(set(omegas[idx].tolist()))
        report["blocks"].append(info)
    report["closed_form"] = chi0 == 0.0
    report["max_residual"] = max(b["residual"] for b in report["blocks"])
    return ReconstructedPsi(omegas, thetas, values, c, report)


# ---------------------------------------------------------------------------
# Forward-side checks on the same tables
# ---------------------------------------------------------------------------

def orthotropic_from_vector(y) -> np.ndarray:
    y = np.asarray(y)
    z = np.zeros(y.shape[:-1], dtype=complex)
    return np.stack([np.stack([y[..., 0], y[..., 1], z], -1),
                     np.stack([y[..., 1], y[..., 2], z], -1),
                     np.stack([z, z, y[..., 3]], -1)], -2)


def assemble_Y_action(table: kernels.KernelTable, psi_nodes, chi0: float, v,
                      psi_at_v=None) -> np.ndarray:
    """``Y(v) = psi~(v) + chi0 B K[psi~](v) + chi0 K+[psi~](v) B`` by k-node quadrature.

    ``psi_nodes`` is ``(m, 4)`` at the table's k-nodes.  ``psi_at_v`` defaults
    to the node value at ``v`` when ``v`` is one of the nodes.
    """
    try:
        i = table.row(v)
    except kernels.TableLookupError as exc:
        raise TableMismatchError(str(exc)) from exc
    psi_nodes = np.asarray(psi_nodes)
    if psi_at_v is None:
        d = np.linalg.norm(table.k_nodes - np.asarray(v, float), axis=1)
        j = int(np.argmin(d))
        if d[j] > 1e-9 * max(1.0, np.linalg.norm(v)):
            raise TableMismatchError("psi~(v) is not a table node; pass psi_at_v")
        psi_at_v = psi_nodes[j]
    local = orthotropic_from_vector(np.asarray(psi_at_v))
    if chi0 == 0.0:
        return local
    tz, ty = table.effective()
    mats = orthotropic_from_vector(psi_nodes)                        # (m, 3, 3)
    kz = np.einsum("mab,mbc->ac", tz[i], mats)
    ky = np.einsum("mab,mbc->ac", mats, ty[i])
    return local + chi0 * (BACKGROUND_PATTERN @ kz + ky @ BACKGROUND_PATTERN)


def predicted_m_tilde(y_matrix, theta, setups=None) -> np.ndarray:
    """``m~^(k)_j = eta^(k)_j [theta x (theta x (Y p^(k)))]_j``, shape ``(2, 2)``."""
    from ..jones import standard_setups
    setups = setups or standard_setups()
    out = np.empty((2, 2), dtype=complex)
    for k, s in enumerate(setups):
        out[k] = s.eta[:2] * double_cross(theta, y_matrix @ s.p)[:2]
    return out


def polarization_span_check(c1: float, c2: float, m_tilde, y_matrix=None, theta=None,
                            phi1: float = DEFAULT_PHI1, phi2: float = DEFAULT_PHI2):
    """Data for ``q = c1 e1 + c2 e2`` from the two basis measurements.

    Returns ``((c1^2 + c1 c2) m~(1)_1 + (c2^2 + c1 c2) m~(2)_1,
    (c1^2 - c1 c2) m~(1)_2 + (c2^2 - c1 c2) m~(2)_2)``.  When ``y_matrix`` and
    ``theta`` are given the pair is also simulated directly and both are
    returned together with their difference.
    """
    m = np.asarray(m_tilde)
    comb = np.array([(c1**2 + c1 * c2) * m[..., 0, 0] + (c2**2 + c1 * c2) * m[..., 1, 0],
                     (c1**2 - c1 * c2) * m[..., 0, 1] + (c2**2 - c1 * c2) * m[..., 1, 1]])
    comb = np.moveaxis(comb, 0, -1)
    if y_matrix is None:
        return comb
    setup = PolarizationSetup(np.array([c1, c2, 0.0]), phi1, phi2)
    direct = setup.eta[:2] * double_cross(theta, np.asarray(y_matrix) @ setup.p)[:2]
    return comb, direct, float(np.max(np.abs(comb - direct)))
