"""Per-sample algebra of the polarization-resolved k-space equations.

For each data point ``v`` and each of the two standard setups ``k`` the
first two components of ``P_theta Y p^(k)`` are measured, where::

    Y = psi~(v) + chi0 B K[psi~](v) + chi0 K+[psi~](v) B

and ``B`` is the background pattern.  Unknowns per k-node are
``y = (psi~11, psi~12, psi~22, psi~33)``.  The four scalar equations per
sample are combined into three in which ``psi~33`` cancels, plus a
remainder that only sees ``psi~33`` through ``M3 = K+31 + K+32``.

Equation order used throughout: ``(k, j) = (1, 1), (1, 2), (2, 1), (2, 2)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..jones import DEFAULT_PHI1, DEFAULT_PHI2, standard_setups

SQRT2 = np.sqrt(2.0)
# right-hand side sign of each equation: the (2, 2) row carries a minus
EQUATION_SIGNS = np.array([1.0, 1.0, 1.0, -1.0])
# |theta1 - theta2| and theta3 thresholds for dropping a sample
DELTA_TIE = 1e-3
DELTA_POLE = 1e-6


class ExcludedSampleError(ValueError):
    pass


def standard_p():
    """``p^(1)``, ``p^(2)`` for the default plate angles, shape ``(2, 3)``."""
    return np.array([s.p for s in standard_setups(DEFAULT_PHI1, DEFAULT_PHI2)])


def standard_eta():
    return np.array([s.eta for s in standard_setups(DEFAULT_PHI1, DEFAULT_PHI2)])


def data_to_b(m_tilde):
    """``b^(k)_j = -sqrt2 m~^(k)_j``; ``m_tilde`` is ``(..., 2, 2)`` indexed ``[k, j]``."""
    return -SQRT2 * np.asarray(m_tilde)


def check_sample(theta, delta_tie: float = DELTA_TIE, delta_pole: float = DELTA_POLE):
    t = np.asarray(theta, dtype=float)
    if abs(t[0] - t[1]) < delta_tie:
        raise ExcludedSampleError(f"|theta1 - theta2| = {abs(t[0] - t[1]):.3g} < {delta_tie:g}")
    if t[2] < delta_pole:
        raise ExcludedSampleError(f"theta3 = {t[2]:.3g} below {delta_pole:g}")


def admissible_mask(thetas, delta_tie: float = DELTA_TIE, delta_pole: float = DELTA_POLE):
    t = np.atleast_2d(thetas)
    return (np.abs(t[:, 0] - t[:, 1]) >= delta_tie) & (t[:, 2] >= delta_pole)


# ---------------------------------------------------------------------------
# Local (multiplication) part
# ---------------------------------------------------------------------------

def i_matrix(theta, p) -> np.ndarray:
    """Rows 1-2 of the local coefficient matrix ``I(p)``, shape ``(..., 2, 4)``."""
    theta = np.asarray(theta, dtype=float)
    p = np.asarray(p)
    t1, t2 = theta[..., 0], theta[..., 1]
    p1, p2 = p[..., 0], p[..., 1]
    zero = np.zeros(np.broadcast(t1, p1).shape, dtype=complex)
    r1 = [p1 * (1 - t1**2), -p1 * t1 * t2 + p2 * (1 - t1**2), -p2 * t1 * t2, zero]
    r2 = [-p1 * t1 * t2, -p2 * t1 * t2 + p1 * (1 - t2**2), p2 * (1 - t2**2), zero]
    return np.stack([np.stack(np.broadcast_arrays(*r1), -1),
                     np.stack(np.broadcast_arrays(*r2), -1)], -2)


def i_tilde(theta) -> np.ndarray:
    """Closed-form reduced local matrix for the default plates, ``(..., 3, 3)``."""
    theta = np.asarray(theta, dtype=float)
    t1, t2 = theta[..., 0], theta[..., 1]
    rows = [[2 * (t1**2 - 1), 2 * (1 + t1 * t2 - t1**2), -2 * t1 * t2],
            [2 * t1 * t2, 2 * (t2**2 - t1 * t2 - 1), 2 * (1 - t2**2)],
            [-t2 * (1 + 1j), t1 * (1j + 1) + t2 * (1 - 1j), -t1 * (1 - 1j)]]
    m = np.stack([np.stack(np.broadcast_arrays(*r), -1) for r in rows], -2)
    return 0.5j * m


def det_i_tilde(theta):
    """Determinant of :func:`i_tilde`: ``(theta2 - theta1)(theta1^2 + theta2^2 - 1)``."""
    theta = np.asarray(theta, dtype=float)
    t1, t2 = theta[..., 0], theta[..., 1]
    return (t2 - t1) * (t1**2 + t2**2 - 1) + 0j


def det_i_tilde_scaled(theta, scale: complex = -0.125j):
    """``scale * (theta2 - theta1)(theta1^2 + theta2^2 - 1)``.

    With ``scale = 1`` this is :func:`det_i_tilde`; any other constant (the
    default ``-i/8`` included) differs from the numeric determinant of
    :func:`i_tilde` by exactly that factor.
    """
    return scale * det_i_tilde(theta)


def reduction_matrix(theta) -> np.ndarray:
    """``(..., 3, 4)`` combinations of the four equations that cancel ``psi~33``.

    Rows: eq1 - eq3, eq2 - eq4, theta2 eq1 - theta1 eq2.
    """
    theta = np.asarray(theta, dtype=float)
    t1, t2 = theta[..., 0], theta[..., 1]
    one = np.ones_like(t1)
    zero = np.zeros_like(t1)
    rows = [[one, zero, -one, zero], [zero, one, zero, -one], [t2, -t1, zero, zero]]
    return np.stack([np.stack(r, -1) for r in rows], -2)


def reduce_rhs(theta, b) -> np.ndarray:
    """``b~ = (b11 - b21, b12 + b22, theta2 b11 - theta1 b12)`` from ``b`` ``(..., 2, 2)``."""
    b = np.asarray(b)
    sb = b.reshape(b.shape[:-2] + (4,)) * EQUATION_SIGNS
    return np.einsum("...re,...e->...r", reduction_matrix(theta), sb)


# ---------------------------------------------------------------------------
# Coupling part
# ---------------------------------------------------------------------------

def l_operators(thetas, tz) -> np.ndarray:
    """``L_kj(i, m)`` for k, j in {1, 2}; ``tz`` is the weighted ``(n, m, 3, 3)`` table."""
    t = np.atleast_2d(thetas)
    t1, t2, t3 = t[:, 0], t[:, 1], t[:, 2]
    s = tz[:, :, 0, :2] + tz[:, :, 1, :2]                     # K_1j + K_2j
    out = np.empty(tz.shape[:2] + (2, 2), dtype=complex)
    for k, tk in enumerate((t1, t2)):
        a = (1 - tk**2 - t1 * t2)[:, None, None]
        out[:, :, k, :] = a * s - (tk * t3)[:, None, None] * tz[:, :, 2, :2]
    return out


def m_operators(ty) -> np.ndarray:
    """``M_j(i, m) = K+_j1 + K+_j2`` for j = 1, 2, 3, shape ``(n, m, 3)``."""
    return ty[:, :, :, 0] + ty[:, :, :, 1]


def coupling_rows(thetas, p, tz, ty) -> np.ndarray:
    """``L(p) + (p1 + p2) M`` rows 1-2, shape ``(n, 2, m, 4)`` (without ``chi0``)."""
    t = np.atleast_2d(thetas)
    t1, t2, t3 = (t[:, a][:, None] for a in range(3))
    p1, p2 = p[0], p[1]
    lo = l_operators(t, tz)
    mo = m_operators(ty)
    m1, m2, m3 = mo[..., 0], mo[..., 1], mo[..., 2]
    n, m = lo.shape[:2]
    out = np.zeros((n, 2, m, 4), dtype=complex)
    for k in range(2):
        out[:, k, :, 0] = p1 * lo[:, :, k, 0]
        out[:, k, :, 1] = p1 * lo[:, :, k, 1] + p2 * lo[:, :, k, 0]
        out[:, k, :, 2] = p2 * lo[:, :, k, 1]
    ps = p1 + p2
    out[:, 0, :, 0] += ps * (1 - t1**2) * m1
    out[:, 0, :, 1] += ps * (-t1 * t2 * m1 + (1 - t1**2) * m2)
    out[:, 0, :, 2] += ps * (-t1 * t2 * m2)
    out[:, 0, :, 3] += ps * (-t1 * t3 * m3)
    out[:, 1, :, 0] += ps * (-t1 * t2 * m1)
    out[:, 1, :, 1] += ps * ((1 - t2**2) * m1 - t1 * t2 * m2)
    out[:, 1, :, 2] += ps * ((1 - t2**2) * m2)
    out[:, 1, :, 3] += ps * (-t2 * t3 * m3)
    return out


def full_equations(thetas, tz, ty, chi0: float):
    """The four equations per sample as ``(n, 4, m, 4)`` operator blocks.

    Equation ``e`` of sample ``i`` reads
    ``sum_m sum_a op[i, e, m, a] y_a(m) = sign_e b_e(i)``.
    """
    t = np.atleast_2d(thetas)
    n, m = tz.shape[:2]
    if n != m:
        raise ValueError("equations need one k-node per sample (square table)")
    ps = standard_p()
    op = np.zeros((n, 4, m, 4), dtype=complex)
    diag = np.arange(n)
    for k in range(2):
        if chi0 != 0.0:
            op[:, 2 * k:2 * k + 2] = chi0 * coupling_rows(t, ps[k], tz, ty)
        op[diag, 2 * k:2 * k + 2, diag, :] += i_matrix(t, ps[k])
    return op


@dataclass
class ReducedSystem:
    """Reduced equations ``(I~ + N) y~ = b~`` on a set of samples.

    ``i_tilde``: ``(n, 3, 3)``; ``n_op``: ``(n, 3, m, 3)``;
    ``b_tilde``: ``(n, 3)``; ``y4_leak``: largest coefficient left on
    ``psi~33`` after the reduction (zero up to rounding).  ``full`` and
    ``rhs`` keep the four unreduced equations for the ``psi~33`` step.
    """

    thetas: np.ndarray
    chi0: float
    i_tilde: np.ndarray
    n_op: np.ndarray
    b_tilde: np.ndarray
    y4_leak: float
    full: np.ndarray
    rhs: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.i_tilde.shape[0]

    def matrix(self) -> np.ndarray:
        """Dense ``(3n, 3n)`` matrix of ``1 + I~^-1 N``."""
        n = self.n_samples
        inv = np.linalg.inv(self.i_tilde)
        c = np.einsum("irs,isma->irma", inv, self.n_op).reshape(3 * n, 3 * n)
        return np.eye(3 * n) + c

    def rhs_second_kind(self) -> np.ndarray:
        return np.linalg.solve(self.i_tilde, self.b_tilde[..., None])[..., 0].reshape(-1)


def reduce_system(thetas, tz, ty, chi0: float, b) -> ReducedSystem:
    """Build the reduced system from weighted tables and data ``b`` ``(n, 2, 2)``."""
    t = np.atleast_2d(np.asarray(thetas, dtype=float))
    bad = ~admissible_mask(t)
    if np.any(bad):
        raise ExcludedSampleError(f"{int(bad.sum())} samples violate the admissibility bands")
    full = full_equations(t, tz, ty, chi0)
    rm = reduction_matrix(t)                                   # (n, 3, 4)
    red = np.einsum("ire,iema->irma", rm, full)
    n = t.shape[0]
    diag = np.arange(n)
    it = red[diag, :, diag, :3].copy()                        # (n, 3, 3)
    n_op = red[..., :3].copy()
    n_op[diag, :, diag, :] -= it
    leak = float(np.max(np.abs(red[..., 3]))) if red.size else 0.0
    rhs = np.asarray(b).reshape(n, 4) * EQUATION_SIGNS
    return ReducedSystem(t, chi0, it, n_op, reduce_rhs(t, b), leak, full, rhs)


def n_rows_by_composition(thetas, tz, ty, chi0: float) -> np.ndarray:
    """``N`` assembled entry by entry from ``L_kj`` and ``M_j``, ``(n, 3, m, 3)``.

    Rows 1-2: ``i chi0 (-L_k1, L_k1 - L_k2, L_k2)``.  Row 3 is the
    combination ``theta2 (row 1 of setup 1) - theta1 (row 2 of setup 1)``.
    """
    t = np.atleast_2d(thetas)
    t1, t2 = t[:, 0][:, None], t[:, 1][:, None]
    lo = l_operators(t, tz)
    mo = m_operators(ty)
    p1, p2 = standard_p()[0][:2]
    out = np.empty(lo.shape[:2] + (3, 3), dtype=complex)
    for k in range(2):
        out[:, :, k] = 1j * chi0 * np.stack(
            [-lo[:, :, k, 0], lo[:, :, k, 0] - lo[:, :, k, 1], lo[:, :, k, 1]], -1)
    a1 = t2 * lo[:, :, 0, 0] - t1 * lo[:, :, 1, 0]
    a2 = t2 * lo[:, :, 0, 1] - t1 * lo[:, :, 1, 1]
    out[:, :, 2, 0] = chi0 * (p1 * a1 + t2 * mo[..., 0])
    out[:, :, 2, 1] = chi0 * (p2 * a1 + p1 * a2 + t2 * mo[..., 1] - t1 * mo[..., 0])
    out[:, :, 2, 2] = chi0 * (p2 * a2 - t1 * mo[..., 1])
    return out.transpose(0, 2, 1, 3)
