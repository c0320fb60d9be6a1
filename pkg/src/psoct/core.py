"""Fourier conventions, vector helpers, Green functions and the incident pulse.

Sign conventions used everywhere in the package:

* time:  ``f_hat(omega) = int f(t) exp(+i omega t) dt``,
  ``f(t) = 1/(2 pi) int f_hat(omega) exp(-i omega t) d omega``
* space: ``f_tilde(k) = int f(x) exp(-i <k, x>) dx``

Other modules import :data:`TIME_SIGN` / :data:`SPACE_SIGN` (or the helper
functions) instead of hard-coding exponents.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

TIME_SIGN = +1
SPACE_SIGN = -1

UNIT_TOL = 1e-12


class SingularityError(ValueError):
    """Raised when a Green function is evaluated at its singular point."""


# ---------------------------------------------------------------------------
# Frequency / direction containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrequencySpec:
    center_nu: float
    c: float = 1.0
    omegas: tuple = ()

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("wave speed c must be positive")
        if self.center_nu <= 0:
            raise ValueError("center frequency must be positive")
        om = tuple(float(w) for w in self.omegas)
        if any(w <= 0 for w in om):
            raise ValueError("all angular frequencies must be positive")
        object.__setattr__(self, "omegas", om)

    def wavenumbers(self):
        return np.asarray(self.omegas) / self.c


@dataclass(frozen=True)
class Direction:
    """Unit observation direction."""

    theta: np.ndarray

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=float).reshape(3)
        if abs(np.linalg.norm(th) - 1.0) > UNIT_TOL:
            raise ValueError(f"direction {th} is not a unit vector")
        object.__setattr__(self, "theta", th)

    @classmethod
    def normalized(cls, v):
        v = np.asarray(v, dtype=float)
        return cls(v / np.linalg.norm(v))

    @property
    def in_upper(self) -> bool:
        return self.theta[2] > 0

    @property
    def in_admissible(self) -> bool:
        """Upper cap with the tie set theta_1 == theta_2 removed."""
        return self.theta[2] > 0 and self.theta[0] != self.theta[1]


def fibonacci_cap(n: int, min_cos: float = 0.3) -> np.ndarray:
    """``n`` quasi-uniform unit vectors on the cap ``theta_3 >= min_cos``.

    Returns an ``(n, 3)`` array. Points are equal-area in ``theta_3``.
    """
    if n < 1:
        raise ValueError("need at least one direction")
    if not -1.0 <= min_cos < 1.0:
        raise ValueError("min_cos must lie in [-1, 1)")
    golden = np.pi * (3.0 - np.sqrt(5.0))
    i = np.arange(n)
    z = 1.0 - (i + 0.5) / n * (1.0 - min_cos)
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = golden * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def cap_solid_angle(min_cos: float) -> float:
    return 2.0 * np.pi * (1.0 - min_cos)


# ---------------------------------------------------------------------------
# 1-D Fourier transform pair
# ---------------------------------------------------------------------------

def ft1d(samples, dt: float, t0: float = 0.0):
    """Rectangle-rule approximation of ``int f(t) exp(i omega t) dt``.

    The samples are ``f(t0 + n dt)``, ``n = 0..N-1``.  The frequency grid is
    ``omega_m = 2 pi fftfreq(N, dt)`` (FFT ordering).

    Returns
    -------
    omegas, f_hat : ndarray
    """
    f = np.asarray(samples)
    if f.ndim != 1 or f.size == 0:
        raise ValueError("ft1d needs a non-empty 1-D sample array")
    if f.size < 2:
        raise ValueError("ft1d needs at least two samples")
    n = f.size
    omegas = 2.0 * np.pi * np.fft.fftfreq(n, d=dt)
    # sum_n f_n exp(+i w_m (t0 + n dt)) = N * ifft(f)_m * exp(i w_m t0)
    f_hat = dt * n * np.fft.ifft(f) * np.exp(1j * omegas * t0)
    return omegas, f_hat


def ift1d(f_hat, dt: float, t0: float = 0.0):
    """Inverse of :func:`ft1d` on the same grids (exact up to round-off)."""
    fh = np.asarray(f_hat)
    if fh.ndim != 1 or fh.size == 0:
        raise ValueError("ift1d needs a non-empty 1-D array")
    n = fh.size
    omegas = 2.0 * np.pi * np.fft.fftfreq(n, d=dt)
    # 1/(2 pi) sum_m f_hat_m exp(-i w_m t_n) d_omega, d_omega = 2 pi / (N dt)
    return np.fft.fft(fh * np.exp(-1j * omegas * t0)) / (n * dt)


# ---------------------------------------------------------------------------
# Pulse envelope
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PulseEnvelope:
    """Spectrum ``f_hat`` of the real source pulse.

    ``kind="gaussian"``: ``f_hat(w) = A [g(w - nu) + g(w + nu)]`` with
    ``g(x) = exp(-x^2 / (2 width^2))``, so ``f_hat(-w) = conj(f_hat(w))``.

    ``kind="delta"``: the narrowband idealisation ``f_hat = delta(w - nu)``
    on ``w > 0``.  Only ``center_nu`` is meaningful; callers take the
    single-frequency fast paths.
    """

    center_nu: float
    width: float = 0.0
    amplitude: float = 1.0
    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind not in ("gaussian", "delta"):
            raise ValueError(f"unknown pulse kind {self.kind!r}")
        if self.center_nu <= 0:
            raise ValueError("center frequency must be positive")
        if self.kind == "gaussian" and self.width <= 0:
            raise ValueError("gaussian pulse needs a positive spectral width")

    @property
    def is_delta(self) -> bool:
        return self.kind == "delta"

    def __call__(self, omega):
        if self.is_delta:
            raise ValueError("delta pulse has no pointwise spectrum")
        w = np.asarray(omega, dtype=float)
        g = np.exp(-0.5 * ((w - self.center_nu) / self.width) ** 2)
        g = g + np.exp(-0.5 * ((w + self.center_nu) / self.width) ** 2)
        return self.amplitude * g + 0j

    def support(self, n_sigma: float = 8.0):
        """Positive-frequency interval outside which ``|f_hat|`` is negligible."""
        if self.is_delta:
            return self.center_nu, self.center_nu
        lo = max(self.center_nu - n_sigma * self.width, 0.0)
        return lo, self.center_nu + n_sigma * self.width

    def time_signal(self, t):
        """``f(t)`` from the closed-form inverse transform (gaussian only)."""
        if self.is_delta:
            raise ValueError("delta pulse has no time signal")
        t = np.asarray(t, dtype=float)
        s = self.width
        return (self.amplitude * s / np.sqrt(2 * np.pi)
                * np.exp(-0.5 * (s * t) ** 2) * 2 * np.cos(self.center_nu * t))

    def to_dict(self):
        return {"kind": self.kind, "center_nu": self.center_nu,
                "width": self.width, "amplitude": self.amplitude}

    @classmethod
    def from_dict(cls, d):
        return cls(center_nu=float(d["center_nu"]), width=float(d.get("width", 0.0)),
                   amplitude=float(d.get("amplitude", 1.0)),
                   kind=d.get("kind", "gaussian"))


def plane_pulse(q, f: Callable, t, x, c: float = 1.0):
    """Incident plane pulse ``E0(t, x) = q f(t + x_3 / c)``.

    ``q`` must be transverse (``q_3 = 0``) so that the field is divergence
    free. ``t`` is scalar or array; ``x`` has shape ``(..., 3)``.
    """
    q = np.asarray(q, dtype=float).reshape(3)
    if q[2] != 0.0:
        raise ValueError("polarization must satisfy q_3 = 0")
    x = np.asarray(x, dtype=float)
    s = np.asarray(t) + x[..., 2] / c
    return np.asarray(f(s))[..., None] * q


# ---------------------------------------------------------------------------
# Vector algebra
# ---------------------------------------------------------------------------

def project_transverse(theta, u):
    """``P_theta u = u - <theta, u> theta`` (broadcasts over leading axes)."""
    theta = np.asarray(theta, dtype=float)
    u = np.asarray(u)
    return u - np.sum(theta * u, axis=-1, keepdims=True) * theta


def double_cross(theta, u):
    """``theta x (theta x u)``, equal to ``-P_theta u`` for unit theta."""
    theta = np.asarray(theta, dtype=float)
    u = np.asarray(u)
    if np.iscomplexobj(u):
        return (np.cross(theta, np.cross(theta, u.real))
                + 1j * np.cross(theta, np.cross(theta, u.imag)))
    return np.cross(theta, np.cross(theta, u))


def kspace_point(omega, theta, c: float = 1.0):
    """``v = (omega / c) (theta + e_3)``."""
    theta = np.asarray(theta, dtype=float)
    e3 = np.zeros_like(theta)
    e3[..., 2] = 1.0
    return (np.asarray(omega, dtype=float)[..., None] / c) * (theta + e3)


# ---------------------------------------------------------------------------
# Green functions
# ---------------------------------------------------------------------------

def scalar_green(omega, x, c: float = 1.0):
    """``exp(i (omega/c) |x|) / (4 pi |x|)``; ``x`` has shape ``(..., 3)``."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0):
        raise SingularityError("scalar Green function is singular at x = 0")
    k = omega / c
    return np.exp(1j * k * r) / (4 * np.pi * r)


def dyadic_green(omega, x, c: float = 1.0):
    """Closed-form Green tensor ``G 1 + (c/omega)^2 grad div (G 1)``.

    With ``k = omega/c``, ``r = |x|`` and ``xh = x / r``::

        G = e^{ikr}/(4 pi r) [ (1 + i/(kr) - 1/(kr)^2) 1
                              + (-1 - 3i/(kr) + 3/(kr)^2) xh xh^T ]

    ``x`` has shape ``(..., 3)``; the result has shape ``(..., 3, 3)``.
    """
    if omega == 0:
        raise SingularityError("dyadic Green tensor needs omega != 0")
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0):
        raise SingularityError("dyadic Green tensor is singular at x = 0")
    k = omega / c
    kr = k * r
    g = np.exp(1j * kr) / (4 * np.pi * r)
    a = g * (1 + 1j / kr - 1 / kr**2)
    b = g * (-1 - 3j / kr + 3 / kr**2)
    xh = x / r[..., None]
    return (a[..., None, None] * np.eye(3)
            + b[..., None, None] * xh[..., :, None] * xh[..., None, :])


def hessian_fd(fun: Callable, x, step: float):
    """Central-difference Hessian of a scalar function at a point."""
    x = np.asarray(x, dtype=float)
    e = np.eye(3) * step
    h = np.empty((3, 3), dtype=complex)
    f0 = fun(x)
    for i in range(3):
        h[i, i] = (fun(x + e[i]) - 2 * f0 + fun(x - e[i])) / step**2
        for j in range(i + 1, 3):
            v = (fun(x + e[i] + e[j]) - fun(x + e[i] - e[j])
                 - fun(x - e[i] + e[j]) + fun(x - e[i] - e[j])) / (4 * step**2)
            h[i, j] = h[j, i] = v
    return h


def laplacian_fd(fun: Callable, x, step: float):
    x = np.asarray(x, dtype=float)
    f0 = fun(x)
    out = -6 * f0
    for i in range(3):
        e = np.zeros(3)
        e[i] = step
        out = out + fun(x + e) + fun(x - e)
    return out / step**2


def as_vectors(a: Sequence) -> np.ndarray:
    arr = np.asarray(a)
    if arr.shape[-1] != 3:
        raise ValueError("expected trailing dimension of size 3")
    return arr
