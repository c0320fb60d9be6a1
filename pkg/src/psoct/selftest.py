"""Identity checks run by ``psoct selftest``.

Each check returns its worst error; the table compares it with the tolerance.
``mutations`` perturb a constant so the harness itself can be tested.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import double_cross, ft1d, ift1d, project_transverse
from .inverse import reduced
from .inverse.pipeline import polarization_span_check, predicted_m_tilde
from .jones import qwp_matrix

MUTATIONS = ("det-constant",)


@dataclass
class Check:
    name: str
    tol: float
    fn: Callable


def random_upper_directions(n: int, rng) -> np.ndarray:
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    d[:, 2] = np.abs(d[:, 2])
    return d


def random_orthotropic(n: int, rng) -> np.ndarray:
    y = rng.standard_normal((n, 4)) + 1j * rng.standard_normal((n, 4))
    z = np.zeros(n, dtype=complex)
    return np.stack([np.stack([y[:, 0], y[:, 1], z], -1),
                     np.stack([y[:, 1], y[:, 2], z], -1),
                     np.stack([z, z, y[:, 3]], -1)], -2)


def assembled_i_tilde(thetas) -> np.ndarray:
    """``I~`` obtained by applying the three combinations to the local rows."""
    ps = reduced.standard_p()
    rows = np.concatenate([reduced.i_matrix(thetas, ps[0]), reduced.i_matrix(thetas, ps[1])], -2)
    return np.einsum("...re,...ea->...ra", reduced.reduction_matrix(thetas), rows)[..., :3]


def check_jones(rng=None) -> float:
    h = np.sqrt(2) / 2
    e1, e2 = np.array([1.0, 0, 0]), np.array([0, 1.0, 0])
    j4, j8 = qwp_matrix(np.pi / 4), qwp_matrix(np.pi / 8)
    pairs = [(j4 @ e1, [(1 - 1j) / 2, (1 + 1j) / 2, 0]), (j4 @ e2, [(1 + 1j) / 2, (1 - 1j) / 2, 0]),
             (j8 @ j8 @ e1, [h, h, 0]), (j8 @ j8 @ e2, [h, -h, 0])]
    return max(float(np.max(np.abs(a - np.asarray(b)))) for a, b in pairs)


def check_determinant(rng, n: int = 10_000, constant: complex = 1.0) -> float:
    th = random_upper_directions(n, rng)
    num = np.linalg.det(assembled_i_tilde(th))
    return float(np.max(np.abs(num - constant * reduced.det_i_tilde(th))))


def check_i_tilde_display(rng, n: int = 1000) -> float:
    th = random_upper_directions(n, rng)
    return float(np.max(np.abs(assembled_i_tilde(th) - reduced.i_tilde(th))))


def check_projection(rng, n: int = 1000) -> float:
    th = random_upper_directions(n, rng)
    u = rng.standard_normal((n, 3)) + 1j * rng.standard_normal((n, 3))
    return float(np.max(np.abs(double_cross(th, u) + project_transverse(th, u))))


def check_sign_pattern(rng, n: int = 1000) -> float:
    """``eta_j [theta x (theta x Y p)]_j`` against ``-(sign/sqrt2) [P Y p]_j``."""
    th = random_upper_directions(n, rng)
    ys = random_orthotropic(n, rng)
    ps = reduced.standard_p()
    err = 0.0
    for t, y in zip(th, ys):
        m = predicted_m_tilde(y, t)
        b = reduced.data_to_b(m).reshape(4) * reduced.EQUATION_SIGNS
        proj = np.concatenate([project_transverse(t, y @ ps[k])[:2] for k in range(2)])
        err = max(err, float(np.max(np.abs(proj - b))))
    return err


def check_polarization_span(rng, n: int = 100) -> float:
    err = 0.0
    for _ in range(n):
        c1, c2 = rng.standard_normal(2)
        t = random_upper_directions(1, rng)[0]
        y = random_orthotropic(1, rng)[0]
        m = predicted_m_tilde(y, t)
        err = max(err, polarization_span_check(c1, c2, m, y, t)[2])
    return err


def check_fourier_pair(rng, n: int = 256) -> float:
    t = np.linspace(-20, 20, n, endpoint=False)
    f = np.exp(-0.5 * t**2) * np.cos(1.3 * t)
    w, fh = ft1d(f, t[1] - t[0], t[0])
    back = ift1d(fh, t[1] - t[0], t[0])
    return float(np.max(np.abs(back - f)))


def check_y4_elimination(rng, n: int = 50) -> float:
    th = random_upper_directions(n, rng)
    th = th[reduced.admissible_mask(th)]
    m = th.shape[0]
    tz = rng.standard_normal((m, m, 3, 3)) + 1j * rng.standard_normal((m, m, 3, 3))
    ty = rng.standard_normal((m, m, 3, 3)) + 1j * rng.standard_normal((m, m, 3, 3))
    b = np.zeros((m, 2, 2), complex)
    return reduced.reduce_system(th, tz, ty, 0.05, b).y4_leak


def checks(mutate=None):
    det_const = 1.0 + (1e-3 if mutate == "det-constant" else 0.0)
    return [
        Check("jones vectors", 1e-14, lambda rng: check_jones(rng)),
        Check("reduced matrix vs closed form", 1e-14, check_i_tilde_display),
        Check("determinant closed form", 1e-13,
              lambda rng: check_determinant(rng, constant=det_const)),
        Check("projection identity", 1e-13, check_projection),
        Check("measurement sign pattern", 1e-13, check_sign_pattern),
        Check("polarization span", 1e-10, check_polarization_span),
        Check("fourier round trip", 1e-10, check_fourier_pair),
        Check("psi33 elimination", 1e-12, check_y4_elimination),
    ]


def run(mutate=None, seed: int = 0, out=print) -> bool:
    if mutate is not None and mutate not in MUTATIONS:
        raise ValueError(f"unknown mutation {mutate!r}; choose from {MUTATIONS}")
    ok = True
    out(f"{'check':34s} {'max error':>11s} {'tolerance':>10s}  result")
    for c in checks(mutate):
        rng = np.random.default_rng(seed)
        err = c.fn(rng)
        good = bool(err <= c.tol)
        ok &= good
        out(f"{c.name:34s} {err:11.3e} {c.tol:10.1e}  {'PASS' if good else 'FAIL'}")
    return ok
