"""Interferogram synthesis and the inversion of its mirror-position dependence.

Detector intensity at ``xi = rho theta`` for mirror position ``l``::

    I_j(l) = (eta_j / pi) Re int_0^inf S_j(omega) f^(-omega) e^{i (omega/c)(2 l - xi_3)} d omega

with ``S`` the scattered spectrum.  The frequency integral is a rectangle
sum on ``omega_n = n d_omega``.  Over a mirror window of length
``L = pi c / d_omega`` the exponentials ``e^{2 i omega_n l / c}`` are
orthogonal, so the window is the exact inverse of the synthesis: ::

    S_j(omega) = 2 / (eta_j c f^(-omega)) int I_j(l) e^{-i (omega/c)(2 l - xi_3)} dl

(trapezoid rule, both window ends included).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import PulseEnvelope, kspace_point
from .forward import far_field_prefactor
from .jones import PolarizationSetup

MIN_PERIODS = 32
# extraction refuses frequencies where |f^| falls below this fraction of its peak
FHAT_REL_THRESHOLD = 1e-6


class AliasingError(ValueError):
    pass


class ConditioningError(ValueError):
    pass


@dataclass(frozen=True)
class MeasurementGrid:
    """Frequency quadrature ``omega_n = n d_omega`` and a mirror window.

    The window holds ``n_l`` points with spacing ``dl`` starting at
    ``l_start``; a window of length exactly ``pi c / d_omega`` makes
    synthesis and extraction an exact transform pair.
    """

    d_omega: float
    n_min: int
    n_max: int
    dl: float
    n_l: int
    c: float = 1.0

    def __post_init__(self):
        if self.d_omega <= 0 or self.dl <= 0:
            raise ValueError("grid spacings must be positive")
        if not 0 < self.n_min <= self.n_max:
            raise ValueError("frequency indices must satisfy 0 < n_min <= n_max")
        if self.n_l < 2:
            raise ValueError("mirror window needs at least two points")

    @property
    def omegas(self) -> np.ndarray:
        return np.arange(self.n_min, self.n_max + 1) * self.d_omega

    @property
    def omega_max(self) -> float:
        return self.n_max * self.d_omega

    @property
    def length(self) -> float:
        return (self.n_l - 1) * self.dl

    def l_grid(self, l_center: float = 0.0) -> np.ndarray:
        return l_center - 0.5 * self.length + np.arange(self.n_l) * self.dl

    def validate(self):
        nyq = np.pi * self.c / (2 * self.omega_max)
        if self.dl > nyq * (1 + 1e-12):
            raise AliasingError(f"dl={self.dl:g} violates the Nyquist bound pi c/(2 omega_max)={nyq:g}")
        if self.d_omega * self.length / self.c > np.pi * (1 + 1e-9):
            raise AliasingError(
                f"omega step {self.d_omega:g} too coarse for a mirror window of {self.length:g}: "
                f"d_omega * L / c = {self.d_omega * self.length / self.c:.4g} > pi")
        periods = self.length * self.n_min * self.d_omega / (np.pi * self.c)
        if periods < MIN_PERIODS * (1 - 1e-9):
            raise AliasingError(f"mirror window covers {periods:.1f} < {MIN_PERIODS} carrier periods")

    @classmethod
    def for_pulse(cls, pulse: PulseEnvelope, omega_min: float, c: float = 1.0,
                  extra=(), periods: int = MIN_PERIODS, n_sigma: float = 8.0) -> "MeasurementGrid":
        """Reference grids: ``d_omega`` divides every frequency in ``extra``,
        ``omega_n`` spans the pulse support and the window is ``pi c / d_omega``."""
        lo, hi = pulse.support(n_sigma)
        targets = [float(w) for w in extra]
        d = min([omega_min, lo if lo > 0 else omega_min] + targets) / periods
        if targets:
            # largest step <= d that puts every target on the grid
            base = targets[0]
            for w in targets[1:]:
                base = _real_gcd(base, w)
            d = base / np.ceil(base / d - 1e-9)
        n_min = max(1, int(np.floor(max(lo, d) / d + 1e-9)))
        n_max = max(n_min, int(np.ceil(hi / d - 1e-9)))
        length = np.pi * c / d
        nyq = np.pi * c / (2 * n_max * d)
        # one point beyond the Nyquist count keeps the 2 omega_max alias off the grid
        n_l = int(np.ceil(length / nyq - 1e-9)) + 2
        return cls(d, n_min, n_max, length / (n_l - 1), n_l, c)

    def to_dict(self):
        return {"d_omega": self.d_omega, "n_min": self.n_min, "n_max": self.n_max,
                "dl": self.dl, "n_l": self.n_l, "c": self.c}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["d_omega"]), int(d["n_min"]), int(d["n_max"]), float(d["dl"]),
                   int(d["n_l"]), float(d.get("c", 1.0)))


def _real_gcd(a: float, b: float, tol: float = 1e-9) -> float:
    while b > tol * max(a, 1.0):
        a, b = b, a % b
        if abs(b - a) < tol * a:
            break
    return a


def l_center_for(theta, rho: float) -> float:
    """Mirror position of the zero-delay echo, ``rho (theta_3 - 1) / 2``."""
    return 0.5 * rho * (float(np.asarray(theta)[2]) - 1.0)


@dataclass
class Interferogram:
    l_grid: np.ndarray
    intensities: np.ndarray          # (2, n_l): I_1, I_2
    theta: np.ndarray
    rho: float
    setup: PolarizationSetup
    pulse: PulseEnvelope
    grid: Optional[MeasurementGrid] = None
    meta: dict = field(default_factory=dict)

    @property
    def xi(self) -> np.ndarray:
        return self.rho * np.asarray(self.theta)

    def sidecar(self) -> dict:
        return {"theta": list(map(float, self.theta)), "rho": self.rho,
                "setup": self.setup.to_dict(), "pulse": self.pulse.to_dict(),
                "grid": self.grid.to_dict() if self.grid else None,
                "omegas": self.grid.omegas.tolist() if self.grid else [self.pulse.center_nu],
                "n_l": int(self.l_grid.size), "meta": self.meta}

    def save(self, path) -> None:
        """CSV with columns ``l, I1, I2`` and a ``.json`` sidecar next to it."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["l", "I1", "I2"])
            for l, a, b in zip(self.l_grid, self.intensities[0], self.intensities[1]):
                w.writerow([repr(float(l)), repr(float(a)), repr(float(b))])
        path.with_suffix(".json").write_text(json.dumps(self.sidecar(), indent=2))

    @classmethod
    def load(cls, path) -> "Interferogram":
        path = Path(path)
        side = json.loads(path.with_suffix(".json").read_text())
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != ["l", "I1", "I2"]:
            raise ValueError(f"{path}: expected header l,I1,I2")
        data = np.array([[float(x) for x in r] for r in rows[1:]])
        if data.shape != (int(side["n_l"]), 3):
            raise ValueError(f"{path}: row count does not match sidecar n_l={side['n_l']}")
        grid = MeasurementGrid.from_dict(side["grid"]) if side.get("grid") else None
        return cls(data[:, 0].copy(), data[:, 1:].T.copy(), np.asarray(side["theta"]),
                   float(side["rho"]), PolarizationSetup.from_dict(side["setup"]),
                   PulseEnvelope.from_dict(side["pulse"]), grid, side.get("meta", {}))


def synthesize_intensities(spectra, omegas, d_omega: float, eta, xi3, l_grid, pulse,
                           c: float = 1.0) -> np.ndarray:
    """``I_j(l)`` for ``spectra`` ``(n_omega, 3)`` (already containing ``f^(omega)``).

    Rectangle rule in omega; for a delta pulse the single line
    ``(eta_j/pi) Re{S_j e^{i nu (2l - xi3)/c}}`` is returned instead.
    """
    spectra = np.asarray(spectra)
    l_grid = np.asarray(l_grid, dtype=float)
    eta = np.real_if_close(np.asarray(eta))
    if pulse.is_delta:
        ph = np.exp(1j * pulse.center_nu / c * (2 * l_grid - xi3))
        return np.real(eta[:2, None] / np.pi * spectra.reshape(-1, 3)[0, :2, None] * ph[None])
    omegas = np.asarray(omegas, dtype=float)
    w = spectra[:, :2] * np.conj(pulse(omegas))[:, None] * d_omega          # f^(-w) = conj f^(w)
    ph = np.exp(1j * np.outer(2 * l_grid - xi3, omegas) / c)                   # (n_l, n_omega)
    return np.real(eta[:2, None] / np.pi * (ph @ w).T)


def synthesize_interferogram(records, setup: PolarizationSetup, l_grid, pulse: PulseEnvelope,
                             grid: Optional[MeasurementGrid] = None, c: float = 1.0) -> Interferogram:
    """Interferogram from far-field records at one detector point (one record per omega)."""
    if not records:
        raise ValueError("need at least one far-field record")
    theta, rho = records[0].theta, records[0].rho
    omegas = np.array([r.omega for r in records])
    spectra = np.array([r.e_scat for r in records])
    if pulse.is_delta:
        if omegas.size != 1:
            raise ValueError("a delta pulse takes exactly one record")
        d_omega = 0.0
    else:
        if grid is None:
            raise ValueError("finite pulses need a MeasurementGrid")
        grid.validate()
        if omegas.size != grid.omegas.size or not np.allclose(omegas, grid.omegas, rtol=1e-12):
            raise AliasingError("records must sit on the measurement omega grid")
        d_omega = grid.d_omega
    if np.any(np.abs(setup.eta[:2]) == 0):
        raise ValueError("eta_j must be nonzero")
    inten = synthesize_intensities(spectra, omegas, d_omega, setup.eta, rho * theta[2],
                                   l_grid, pulse, c)
    return Interferogram(np.asarray(l_grid, dtype=float), inten, np.asarray(theta), rho,
                         setup, pulse, grid)


def _window_transform(values, l_grid, omega: float, xi3: float, c: float):
    """``int values(l) e^{-i (omega/c)(2 l - xi3)} dl`` (trapezoid), ``values`` ``(..., n_l)``."""
    ph = np.exp(-1j * omega / c * (2 * np.asarray(l_grid) - xi3))
    return np.trapezoid(np.asarray(values) * ph, x=l_grid, axis=-1)


def _pulse_gain(pulse: PulseEnvelope, omega: float, rel: float = FHAT_REL_THRESHOLD):
    if pulse.is_delta:
        return 1.0
    f = pulse(np.array([omega]))[0]
    peak = abs(pulse(np.array([pulse.center_nu]))[0])
    if abs(f) <= rel * peak:
        raise ConditioningError(f"|f^({omega:g})| = {abs(f):.3g} is below {rel:g} of its peak")
    return f


def extract_from_values(values, l_grid, omega: float, eta, xi3: float, pulse: PulseEnvelope,
                        c: float = 1.0) -> np.ndarray:
    """Invert the mirror dependence of ``values`` ``(2, n_l)`` at one frequency."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    eta = np.asarray(eta)[:2]
    if np.any(eta == 0):
        raise ValueError("eta_j must be nonzero")
    integral = _window_transform(values, l_grid, omega, xi3, c)
    if pulse.is_delta:
        length = float(l_grid[-1] - l_grid[0])
        return 2 * np.pi * integral / (eta * length)
    f = _pulse_gain(pulse, omega)
    return 2 * integral / (eta * c * np.conj(f))


def extract_scattered_field(ig: Interferogram, omega: float, c: float = 1.0) -> np.ndarray:
    """Scattered spectrum components ``j = 1, 2`` at ``(omega, xi)``."""
    return extract_from_values(ig.intensities, ig.l_grid, omega, ig.setup.eta, ig.xi[2], ig.pulse, c)


@dataclass
class KSpaceSample:
    omega: float
    theta: np.ndarray
    m: np.ndarray               # (2, 2): m~^(k)_j
    c: float = 1.0

    @property
    def v(self) -> np.ndarray:
        return kspace_point(self.omega, self.theta, self.c)


def m_tilde_from_values(m_values, l_grid, omega: float, theta, rho: float,
                        pulse: PulseEnvelope, c: float = 1.0) -> np.ndarray:
    """``m~_j = -(8 pi rho c / (omega^2 |f^|^2)) int M_j e^{-i(omega/c)(2l - rho(theta3 - 1))} dl``.

    The delta path divides by the window length instead of ``|f^|^2 c / 2``.
    """
    k = omega / c
    integral = _window_transform(m_values, l_grid, omega, rho * (theta[2] - 1.0), c)
    scale = -4 * np.pi * rho * c**2 / omega**2
    if pulse.is_delta:
        length = float(l_grid[-1] - l_grid[0])
        return scale * 2 * np.pi * integral / length
    f = _pulse_gain(pulse, omega)
    return scale * 2 * integral / (c * abs(f) ** 2)


def compute_m_tilde(igs, igs0, eps: float, omega: float, c: float = 1.0) -> KSpaceSample:
    """``m~^(k)_j`` from the two setups' interferograms and their background versions.

    ``M = (I - I0) / eps`` with ``I0`` the ``eps = 0`` data.
    """
    if eps == 0:
        raise ValueError("eps must be nonzero to form M = (I - I0)/eps")
    if len(igs) != 2 or len(igs0) != 2:
        raise ValueError("need interferograms for both polarization setups")
    theta, rho = igs[0].theta, igs[0].rho
    m = np.empty((2, 2), dtype=complex)
    for k, (ig, ig0) in enumerate(zip(igs, igs0)):
        if not np.array_equal(ig.l_grid, ig0.l_grid):
            raise ValueError("measurement and background share one mirror grid")
        mvals = (ig.intensities - ig0.intensities) / eps
        m[k] = m_tilde_from_values(mvals, ig.l_grid, omega, theta, rho, ig.pulse, c)
    return KSpaceSample(omega, np.asarray(theta), m, c)


def m_tilde_from_fields(fields, etas, omega: float, rho: float, c: float = 1.0) -> np.ndarray:
    """``m~^(k)_j = eta^(k)_j E^(k)_j / prefactor`` from linearised far fields per unit pulse.

    ``fields`` is ``(2, n, 3)`` (setup, direction, component); returns ``(n, 2, 2)``.
    """
    pref = far_field_prefactor(omega, rho, c)
    fields = np.asarray(fields)
    return np.stack([np.asarray(etas[k])[:2] * fields[k][:, :2] / pref for k in range(2)], axis=1)


def add_noise(ig: Interferogram, level: float, rng: np.random.Generator,
              reference=None) -> Interferogram:
    """Additive white Gaussian noise with std ``level * rms(reference)`` (default: the signal)."""
    if level < 0:
        raise ValueError("noise level must be non-negative")
    if level == 0:
        return ig
    ref = ig.intensities if reference is None else reference
    sigma = level * np.sqrt(np.mean(np.square(ref)))
    noisy = ig.intensities + sigma * rng.standard_normal(ig.intensities.shape)
    return Interferogram(ig.l_grid, noisy, ig.theta, ig.rho, ig.setup, ig.pulse, ig.grid,
                         dict(ig.meta, noise_level=level))
