"""Volume-integral quadrature for the Born far fields of an orthotropic sample.

The sample occupies an axis-aligned box discretised into cubic voxels of side
``h``.  Volume integrals use the voxel midpoint rule.  The strongly singular
self-cell of the Lippmann-Schwinger operator is replaced by a pluggable
:class:`SelfCellRule`.

Orthotropic matrices are stored as the four components ``(11, 12, 22, 33)``;
the background ``chi0`` enters every one of them (pattern
``[[1, 1, 0], [1, 1, 0], [0, 0, 1]]``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .core import dyadic_green, double_cross

COMPONENTS = ("11", "12", "22", "33")
BACKGROUND_PATTERN = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])

# h must not exceed this fraction of the shortest wavelength
MAX_H_PER_WAVELENGTH = 0.1


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class VoxelGrid:
    shape: tuple
    h: float
    center: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        if len(shape) != 3 or min(shape) < 1:
            raise ValueError("grid shape must be three positive integers")
        if self.h <= 0:
            raise ValueError("voxel size must be positive")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def weight(self) -> float:
        return self.h ** 3

    @property
    def extent(self) -> np.ndarray:
        """Half side lengths of the box."""
        return 0.5 * self.h * np.asarray(self.shape, dtype=float)

    def axes(self):
        return [self.center[a] + (np.arange(n) - 0.5 * (n - 1)) * self.h
                for a, n in enumerate(self.shape)]

    def centers(self) -> np.ndarray:
        """Voxel centres, shape ``(N1, N2, N3, 3)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def flat_centers(self) -> np.ndarray:
        return self.centers().reshape(-1, 3)

    def contains_box(self, lo, hi) -> bool:
        c = np.asarray(self.center)
        e = self.extent
        return bool(np.all(np.asarray(lo) >= c - e - 1e-12)
                    and np.all(np.asarray(hi) <= c + e + 1e-12))

    def check_resolution(self, omega_max: float, c: float = 1.0):
        lam = 2 * np.pi * c / omega_max
        if self.h > MAX_H_PER_WAVELENGTH * lam * (1 + 1e-12):
            raise ValueError(
                f"voxel size h={self.h:g} exceeds lambda/10={lam / 10:g} at omega={omega_max:g}; "
                "refine the grid or lower the frequency")

    def to_dict(self):
        return {"shape": list(self.shape), "h": self.h, "center": list(self.center)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["shape"]), float(d["h"]), tuple(d.get("center", (0.0, 0.0, 0.0))))


@dataclass
class OrthotropicSusceptibility:
    """``chi(x) = chi0 * pattern + eps * psi(x)`` on a voxel grid.

    ``psi`` has shape ``(4, N1, N2, N3)`` holding ``psi11, psi12, psi22, psi33``.
    The background fills the whole box.
    """

    grid: VoxelGrid
    chi0: float
    eps: float
    psi: np.ndarray

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=complex)
        if psi.shape != (4,) + self.grid.shape:
            raise GridMismatchError(f"psi has shape {psi.shape}, expected {(4,) + self.grid.shape}")
        self.psi = psi

    def components(self) -> np.ndarray:
        """Orthotropic components of the full susceptibility, ``(4, N1, N2, N3)``."""
        return self.chi0 + self.eps * self.psi

    def with_eps(self, eps: float) -> "OrthotropicSusceptibility":
        return OrthotropicSusceptibility(self.grid, self.chi0, eps, self.psi)

    def scaled(self, s: float) -> "OrthotropicSusceptibility":
        return OrthotropicSusceptibility(self.grid, s * self.chi0, s * self.eps, self.psi)

    def matrix(self, index) -> np.ndarray:
        c = self.components()[(slice(None),) + tuple(index)]
        return orthotropic_matrix(c)


def orthotropic_matrix(comp) -> np.ndarray:
    c11, c12, c22, c33 = comp
    return np.array([[c11, c12, 0], [c12, c22, 0], [0, 0, c33]], dtype=complex)


def orthotropic_apply(comp, u):
    """Apply orthotropic matrices ``comp`` ``(4, ...)`` to vector fields ``u`` ``(3, ...)``."""
    c11, c12, c22, c33 = comp
    return np.stack([c11 * u[0] + c12 * u[1], c12 * u[0] + c22 * u[1], c33 * u[2]])


def matrix_field_apply(chi, u):
    """Apply ``chi`` (either ``(4, ...)`` orthotropic or ``(3, 3, ...)``) to ``u`` ``(3, ...)``."""
    chi = np.asarray(chi)
    if chi.shape[0] == 4:
        return orthotropic_apply(chi, u)
    if chi.shape[:2] == (3, 3):
        return np.einsum("ij...,j...->i...", chi, u)
    raise ValueError(f"unsupported susceptibility field shape {chi.shape}")


# ---------------------------------------------------------------------------
# Self cell
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SelfCellRule:
    """Replacement for the singular ``y = z`` term of the volume integral.

    ``"sphere"``: the cell is an equal-volume ball of radius
    ``R = (3 h^3 / 4 pi)^(1/3)``.  The smooth part contributes
    ``k^2 R^2 / 2`` (static scalar kernel integrated over the ball) and the
    ``grad div`` part the depolarisation ``-1/3``.  ``"none"`` drops the
    cell.  The result multiplies ``chi(y) e(y)`` after the ``k^2`` factor.
    """

    kind: str = "sphere"

    def __post_init__(self):
        if self.kind not in ("sphere", "none"):
            raise ValueError(f"unknown self-cell rule {self.kind!r}")

    def __call__(self, k: float, h: float) -> complex:
        if self.kind == "none":
            return 0.0
        radius = (3.0 * h**3 / (4.0 * np.pi)) ** (1.0 / 3.0)
        return k**2 * radius**2 / 2.0 - 1.0 / 3.0


DEFAULT_SELF_CELL = SelfCellRule()

_SYM_INDEX = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


@lru_cache(maxsize=16)
def _kernel_spectrum(shape, h, k, self_value):
    """FFT of the zero-padded ``k^2 G(d) h^3`` on all grid offsets ``d``."""
    m = tuple(2 * n for n in shape)
    offs = [np.fft.fftfreq(mi, d=1.0 / mi) * h for mi in m]   # integer offsets times h
    d = np.stack(np.meshgrid(*offs, indexing="ij"), axis=-1)
    flat = d.reshape(-1, 3)
    r = np.linalg.norm(flat, axis=1)
    nz = r > 0
    g = np.zeros((flat.shape[0], 3, 3), dtype=complex)
    g[nz] = dyadic_green(k, flat[nz], c=1.0) * (k**2 * h**3)
    g[~nz] = self_value * np.eye(3)
    # offsets of exactly +-N along an axis never pair two voxels
    g = g.reshape(m + (3, 3))
    for ax, n in enumerate(shape):
        idx = [slice(None)] * 3
        idx[ax] = n
        g[tuple(idx)] = 0.0
    return m, np.stack([np.fft.fftn(g[..., i, j]) for i, j in _SYM_INDEX])


class GreenOperator:
    """``u -> k^2 sum_z G(y - z) u(z) h^3`` plus self cell, via zero-padded FFT.

    The sum is a discrete convolution, so the output does not depend on the
    order in which voxels are visited.
    """

    def __init__(self, grid: VoxelGrid, omega: float, c: float = 1.0,
                 self_rule: Callable = DEFAULT_SELF_CELL):
        if omega <= 0:
            raise ValueError("omega must be positive")
        self.grid = grid
        self.omega = omega
        self.c = c
        self.k = omega / c
        self.self_value = complex(self_rule(self.k, grid.h))
        self._m, self._spec = _kernel_spectrum(grid.shape, grid.h, self.k, self.self_value)

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=complex)
        lead = u.shape[:-4]
        if u.shape[-4:] != (3,) + self.grid.shape:
            raise GridMismatchError(f"field shape {u.shape} does not match grid {self.grid.shape}")
        n = self.grid.shape
        axes = (-3, -2, -1)
        uh = np.fft.fftn(u, s=self._m, axes=axes)
        s = self._spec
        full = ((s[0], s[1], s[2]), (s[1], s[3], s[4]), (s[2], s[4], s[5]))
        out = np.empty(lead + (3,) + n, dtype=complex)
        for i in range(3):
            acc = full[i][0] * uh[..., 0, :, :, :]
            acc = acc + full[i][1] * uh[..., 1, :, :, :]
            acc = acc + full[i][2] * uh[..., 2, :, :, :]
            out[..., i, :, :, :] = np.fft.ifftn(acc, axes=axes)[..., :n[0], :n[1], :n[2]]
        return out

    def tensor_response(self, phi) -> np.ndarray:
        """``k^2 sum_z G(y - z) phi(z) h^3`` for scalar fields ``phi`` ``(..., N1, N2, N3)``.

        Returns the full tensor, shape ``(..., 3, 3, N1, N2, N3)``.
        """
        phi = np.asarray(phi, dtype=complex)
        if phi.shape[-3:] != self.grid.shape:
            raise GridMismatchError("scalar field does not match grid")
        n = self.grid.shape
        axes = (-3, -2, -1)
        ph = np.fft.fftn(phi, s=self._m, axes=axes)
        out = np.empty(phi.shape[:-3] + (3, 3) + n, dtype=complex)
        for s, (i, j) in zip(self._spec, _SYM_INDEX):
            blk = np.fft.ifftn(s * ph, axes=axes)[..., :n[0], :n[1], :n[2]]
            out[..., i, j, :, :, :] = blk
            if i != j:
                out[..., j, i, :, :, :] = blk
        return out


def ls_apply(chi_field, e_in, omega: float, grid: VoxelGrid, c: float = 1.0,
             self_rule: Callable = DEFAULT_SELF_CELL) -> np.ndarray:
    """Discrete Lippmann-Schwinger operator ``G[chi e_in]`` on the voxel grid.

    ``chi_field`` is ``(4, N1, N2, N3)`` (orthotropic) or ``(3, 3, N1, N2, N3)``;
    ``e_in`` is ``(3, N1, N2, N3)``.
    """
    chi_field = np.asarray(chi_field)
    e_in = np.asarray(e_in)
    if chi_field.shape[-3:] != grid.shape or e_in.shape != (3,) + grid.shape:
        raise GridMismatchError("susceptibility, field and grid must share one shape")
    return GreenOperator(grid, omega, c, self_rule)(matrix_field_apply(chi_field, e_in))


# ---------------------------------------------------------------------------
# Far field
# ---------------------------------------------------------------------------

def far_field_prefactor(omega: float, rho: float, c: float = 1.0) -> complex:
    return -omega**2 * np.exp(1j * omega / c * rho) / (4 * np.pi * rho * c**2)


def far_field_op(f, omega: float, theta, rho: float, grid: VoxelGrid, c: float = 1.0):
    """Far-field operator applied to a voxelised vector field ``f`` ``(3, N1, N2, N3)``.

    ``-(omega^2 e^{i k rho}) / (4 pi rho c^2) sum_y theta x (theta x f(y)) e^{-i k <theta, y>} h^3``

    ``theta`` is ``(3,)`` or ``(n, 3)``; the output matches (``(3,)`` or ``(n, 3)``).
    """
    if rho <= 0:
        raise ValueError("detector radius rho must be positive")
    if omega <= 0:
        raise ValueError("omega must be positive")
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    th = np.atleast_2d(theta)
    f = np.asarray(f).reshape(3, -1)
    k = omega / c
    y = grid.flat_centers()
    phase = np.exp(-1j * k * (th @ y.T))                      # (n, V)
    moment = (phase @ f.T) * grid.weight                      # (n, 3)
    out = far_field_prefactor(omega, rho, c) * double_cross(th, moment)
    return out[0] if single else out


def incident_field(grid: VoxelGrid, p, omega: float, c: float = 1.0) -> np.ndarray:
    """``p exp(-i (omega/c) y_3)`` on the grid (unit pulse amplitude)."""
    z3 = grid.centers()[..., 2]
    return np.asarray(p, dtype=complex)[:, None, None, None] * np.exp(-1j * omega / c * z3)


@dataclass
class FarFieldRecord:
    omega: float
    theta: np.ndarray
    rho: float
    e_scat: np.ndarray

    def to_dict(self):
        return {"omega": self.omega, "theta": list(map(float, self.theta)), "rho": self.rho,
                "e_scat": [[float(z.real), float(z.imag)] for z in self.e_scat]}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["omega"]), np.asarray(d["theta"], dtype=float), float(d["rho"]),
                   np.array([complex(a, b) for a, b in d["e_scat"]]))


def born_far_fields(sus: OrthotropicSusceptibility, p, omega: float, thetas, rho: float,
                    order: int = 2, c: float = 1.0, self_rule: Callable = DEFAULT_SELF_CELL):
    """Scattered far field ``E^order - E^{0,inc}`` per unit pulse amplitude.

    Returns an array of shape ``(n, 3)`` for ``thetas`` of shape ``(n, 3)``.
    """
    if order not in (1, 2):
        raise ValueError("Born order must be 1 or 2")
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if np.any(thetas[:, 2] <= 0):
        raise ValueError("observation directions must satisfy theta_3 > 0")
    chi = sus.components()
    e_inc = incident_field(sus.grid, p, omega, c)
    source = e_inc
    if order == 2:
        source = e_inc + ls_apply(chi, e_inc, omega, sus.grid, c, self_rule)
    return far_field_op(orthotropic_apply(chi, source), omega, thetas, rho, sus.grid, c)


def born_far_field(sus: OrthotropicSusceptibility, setup, omega: float, theta, rho: float,
                   order: int = 2, pulse=None, c: float = 1.0,
                   self_rule: Callable = DEFAULT_SELF_CELL) -> FarFieldRecord:
    """Far-field record for one direction; ``pulse=None`` means unit amplitude."""
    theta = np.asarray(theta, dtype=float)
    if theta[2] <= 0:
        raise ValueError("observation direction must satisfy theta_3 > 0")
    e = born_far_fields(sus, setup.p, omega, theta[None], rho, order, c, self_rule)[0]
    if pulse is not None and not pulse.is_delta:
        e = e * pulse(omega)
    return FarFieldRecord(omega, theta, rho, e)


def linearized_far_fields(sus: OrthotropicSusceptibility, p, omega: float, thetas, rho: float,
                          c: float = 1.0, self_rule: Callable = DEFAULT_SELF_CELL):
    """Derivative in ``eps`` (at ``eps = 0``) of the second-order far field.

    Source: ``psi (e_inc + G[chi0 e_inc]) + chi0 G[psi e_inc]``.
    """
    grid = sus.grid
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    op = GreenOperator(grid, omega, c, self_rule)
    e_inc = incident_field(grid, p, omega, c)
    bg = np.full((4,) + grid.shape, sus.chi0, dtype=complex)
    src = (orthotropic_apply(sus.psi, e_inc + op(orthotropic_apply(bg, e_inc)))
           + orthotropic_apply(bg, op(orthotropic_apply(sus.psi, e_inc))))
    return far_field_op(src, omega, thetas, rho, grid, c)
