"""Dense solvers for the reduced second-kind system and the ``psi~33`` equation."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.optimize import brentq

from .reduced import ReducedSystem, standard_p

log = logging.getLogger(__name__)

DEFAULT_RESIDUAL_TOL = 1e-8
# relative default: lambda = LAMBDA_REL * ||M3||_2^2
LAMBDA_REL = 1e-4
DISCREPANCY_TAU = 1.1


class ResidualError(RuntimeError):
    def __init__(self, residual: float, tol: float):
        super().__init__(f"relative residual {residual:.3e} exceeds tolerance {tol:.1e}")
        self.residual = residual
        self.tol = tol


class RegularizationError(ValueError):
    pass


@dataclass
class SecondKindSolution:
    y: np.ndarray            # (n, 3): psi~11, psi~12, psi~22
    residual: float          # relative residual of the dense solve
    closed_form: bool


def solve_second_kind(system: ReducedSystem, tol: float = DEFAULT_RESIDUAL_TOL) -> SecondKindSolution:
    """Solve ``(1 + I~^-1 N) y~ = I~^-1 b~`` by LU.

    With ``chi0 = 0`` the operator vanishes and each sample is solved on its own.
    """
    rhs = system.rhs_second_kind()
    n = system.n_samples
    if system.chi0 == 0.0:
        y = rhs.reshape(n, 3)
        lhs = np.einsum("irs,is->ir", system.i_tilde, y)
        res = _rel(lhs - system.b_tilde, system.b_tilde)
        return SecondKindSolution(y, res, True)
    a = system.matrix()
    y = lu_solve(lu_factor(a), rhs)
    res = _rel(a @ y - rhs, rhs)
    if not res <= tol:
        raise ResidualError(res, tol)
    return SecondKindSolution(y.reshape(n, 3), res, False)


def _rel(r, ref) -> float:
    nr = np.linalg.norm(ref)
    return float(np.linalg.norm(r) / nr) if nr > 0 else float(np.linalg.norm(r))


# ---------------------------------------------------------------------------
# psi~33
# ---------------------------------------------------------------------------

def m3_coefficients(thetas, chi0: float) -> np.ndarray:
    """Factor in front of ``M3[y4](v)`` in each of the four equations, ``(n, 4)``."""
    t = np.atleast_2d(thetas)
    ps = standard_p()
    out = np.empty((t.shape[0], 4), dtype=complex)
    for k in range(2):
        s = ps[k][0] + ps[k][1]
        for j in range(2):
            out[:, 2 * k + j] = -chi0 * s * t[:, j] * t[:, 2]
    return out


def psi33_data(system: ReducedSystem, y123) -> np.ndarray:
    """Least-squares value of ``M3[y4](v_i)`` from the four residual equations."""
    y = np.asarray(y123).reshape(-1, 3)
    known = np.einsum("iema,ma->ie", system.full[..., :3], y)
    r = system.rhs - known
    c = m3_coefficients(system.thetas, system.chi0)
    den = np.sum(np.abs(c) ** 2, axis=1)
    if np.any(den == 0):
        raise RegularizationError("psi33 is invisible for chi0 = 0 or theta on the pole")
    return np.sum(c.conj() * r, axis=1) / den


def default_lambda(m3) -> float:
    return LAMBDA_REL * np.linalg.norm(m3, 2) ** 2


@dataclass
class TikhonovResult:
    y: np.ndarray
    lam: float
    residual_norm: float
    rule: str


def tikhonov(m3, g, lam: float) -> TikhonovResult:
    """``argmin ||M3 y - g||^2 + lam ||y||^2`` through the SVD of ``M3``."""
    if not lam > 0:
        raise RegularizationError(f"lambda must be positive, got {lam}")
    u, s, vh = np.linalg.svd(m3, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        raise RegularizationError("M3 is identically zero")
    beta = u.conj().T @ g
    y = vh.conj().T @ (s / (s**2 + lam) * beta)
    return TikhonovResult(y, lam, float(np.linalg.norm(m3 @ y - g)), "fixed")


def discrepancy_lambda(m3, g, noise_norm: float, tau: float = DISCREPANCY_TAU):
    """``lam`` with ``||M3 y_lam - g|| = tau * noise_norm`` (Morozov).

    Returns ``None`` when even the smallest ``lam`` leaves a larger residual,
    i.e. the data are inconsistent with ``M3`` beyond the declared noise.
    """
    u, s, _ = np.linalg.svd(m3, full_matrices=False)
    beta = u.conj().T @ g
    out2 = max(float(np.linalg.norm(g) ** 2 - np.linalg.norm(beta) ** 2), 0.0)
    target = tau * noise_norm

    def gap(log_lam):
        lam = np.exp(log_lam)
        r2 = np.sum((lam / (s**2 + lam)) ** 2 * np.abs(beta) ** 2) + out2
        return np.sqrt(r2) - target

    lo, hi = np.log(s[0] ** 2 * 1e-16 + 1e-300), np.log(s[0] ** 2 * 1e8)
    if gap(hi) < 0:
        raise RegularizationError("declared noise exceeds the data norm; nothing to fit")
    if gap(lo) > 0:
        return None
    return float(np.exp(brentq(gap, lo, hi, xtol=1e-10)))


def solve_psi33(m3, g, lam=None, noise_norm=None, tau: float = DISCREPANCY_TAU) -> TikhonovResult:
    """Regularised first-kind solve for ``psi~33``.

    ``lam`` wins if given; else the discrepancy principle is used when
    ``noise_norm`` is declared; else ``LAMBDA_REL * ||M3||^2``.
    """
    m3 = np.asarray(m3)
    g = np.asarray(g)
    if lam is not None:
        return tikhonov(m3, g, float(lam))
    if noise_norm is not None:
        if np.linalg.norm(g) == 0:
            return TikhonovResult(np.zeros(m3.shape[1], complex), default_lambda(m3), 0.0, "discrepancy")
        lam = discrepancy_lambda(m3, g, noise_norm, tau)
        if lam is not None:
            res = tikhonov(m3, g, lam)
            res.rule = "discrepancy"
            return res
        log.warning("discrepancy level not reachable; falling back to the default lambda")
        res = tikhonov(m3, g, default_lambda(m3))
        res.rule = "default (discrepancy unreachable)"
        return res
    res = tikhonov(m3, g, default_lambda(m3))
    res.rule = "default"
    return res
