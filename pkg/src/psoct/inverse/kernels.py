"""Kernel tables of the background-coupling operators ``K`` and ``K^dagger``.

For a data point ``v = (omega/c)(theta + e3)`` the two operators act on a
matrix field ``psi`` through its spatial transform.  On the voxel grid they
are finite sums::

    K[psi](v)  = sum_y sum_z k^2 G(y - z) e^{-ik(z3 + <theta, y>)} psi(z) h^6
    K+[psi](v) = sum_y sum_z psi(y) k^2 G(y - z) e^{-ik(z3 + <theta, y>)} h^6

(``G`` the dyadic Green tensor with the forward module's self-cell rule), so
forward simulation and inversion share one discretisation.  Writing
``psi(z) = (2 pi)^-3 int psi~(k) e^{i<k,z>} dk`` and replacing the k-integral
by a rule over nodes ``k_m`` gives the tables ``K^z(v; k_m)``, ``K^y(v; k_m)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..core import cap_solid_angle, kspace_point
from ..forward import DEFAULT_SELF_CELL, GreenOperator, VoxelGrid


class TableLookupError(KeyError):
    pass


def plane_wave_responses(grid: VoxelGrid, omega: float, thetas, c: float = 1.0,
                         self_rule: Callable = DEFAULT_SELF_CELL, chunk: int = 32):
    """Spatial weight of ``K`` for each direction, ``(n, 3, 3, V)``.

    ``A_n(z) = e^{-ik z3} k^2 sum_y G(z - y) e^{-ik<theta_n, y>} h^3``.
    """
    op = GreenOperator(grid, omega, c, self_rule)
    x = grid.centers()
    k = omega / c
    thetas = np.atleast_2d(thetas)
    out = np.empty((thetas.shape[0], 3, 3, grid.size), dtype=complex)
    down = np.exp(-1j * k * x[..., 2])
    for s in range(0, thetas.shape[0], chunk):
        th = thetas[s:s + chunk]
        phi = np.exp(-1j * k * np.einsum("na,...a->n...", th, x))
        resp = op.tensor_response(phi) * down
        out[s:s + chunk] = resp.reshape(th.shape[0], 3, 3, -1)
    return out


def background_response(grid: VoxelGrid, omega: float, c: float = 1.0,
                        self_rule: Callable = DEFAULT_SELF_CELL):
    """``W(y) = k^2 sum_z G(y - z) e^{-ik z3} h^3``, shape ``(3, 3, V)``."""
    op = GreenOperator(grid, omega, c, self_rule)
    z3 = grid.centers()[..., 2]
    return op.tensor_response(np.exp(-1j * omega / c * z3)).reshape(3, 3, -1)


def dagger_responses(grid: VoxelGrid, omega: float, thetas, c: float = 1.0,
                     self_rule: Callable = DEFAULT_SELF_CELL):
    """Spatial weight of ``K^dagger``: ``B_n(y) = e^{-ik<theta_n, y>} W(y)``, ``(n, 3, 3, V)``."""
    w = background_response(grid, omega, c, self_rule)
    y = grid.flat_centers()
    ph = np.exp(-1j * omega / c * (np.atleast_2d(thetas) @ y.T))
    return ph[:, None, None, :] * w[None]


def fourier_matrix(grid: VoxelGrid, k_nodes) -> np.ndarray:
    """``F[m, z] = e^{-i<k_m, z>} h^3``: voxel field -> transform at the nodes."""
    return np.exp(-1j * (np.atleast_2d(k_nodes) @ grid.flat_centers().T)) * grid.weight


def shell_weights(omegas, thetas, c: float = 1.0, min_cos: float = 0.3, sweep=None):
    """Volume elements of ``v = (omega/c)(theta + e3)`` for a tensor sweep.

    ``d^3 v = kappa^2 (1 + theta_3) dOmega dkappa`` with equal-area
    directions on the cap and the mean ``kappa`` spacing of ``sweep``
    (default: the distinct frequencies present).
    """
    omegas = np.asarray(omegas, dtype=float)
    thetas = np.atleast_2d(thetas)
    sweep = np.unique(omegas) if sweep is None else np.unique(np.asarray(sweep, dtype=float))
    if sweep.size < 2:
        raise ValueError("a volume rule needs at least two frequencies")
    dk = np.mean(np.diff(sweep)) / c
    uniq, inv, counts = np.unique(omegas, return_inverse=True, return_counts=True)
    d_omega = cap_solid_angle(min_cos) / counts[inv]
    kappa = omegas / c
    return kappa**2 * (1 + thetas[:, 2]) * d_omega * dk


def gram_weights(grid: VoxelGrid, k_nodes, alpha: float = 1e-8) -> np.ndarray:
    """Minimum-norm reconstruction weights ``(2 pi)^3 h^3 (F F^H + a ||F F^H|| 1)^-1``.

    With these weights the node values are turned back into the smallest
    voxel field supported in the box that reproduces them.
    """
    f = fourier_matrix(grid, k_nodes)
    g = f @ f.conj().T
    reg = alpha * np.linalg.norm(g, 2)
    g[np.diag_indices_from(g)] += reg
    return (2 * np.pi) ** 3 * grid.weight * np.linalg.inv(g)


@dataclass
class KernelTable:
    """``K^z(v_i; k_m)``, ``K^y(v_i; k_m)`` (each ``(nv, nk, 3, 3)``) with k-weights.

    ``weights`` is either a vector (diagonal rule) or a full ``(nk, nk)``
    matrix; ``effective()`` folds it into the tables.
    """

    grid: VoxelGrid
    omegas: np.ndarray
    thetas: np.ndarray
    k_nodes: np.ndarray
    weights: np.ndarray
    kz: np.ndarray
    ky: np.ndarray
    c: float = 1.0

    @property
    def v(self) -> np.ndarray:
        return kspace_point(self.omegas, self.thetas, self.c)

    @property
    def n_samples(self) -> int:
        return self.kz.shape[0]

    @classmethod
    def build(cls, grid: VoxelGrid, omegas, thetas, k_nodes, weights, c: float = 1.0,
              self_rule: Callable = DEFAULT_SELF_CELL) -> "KernelTable":
        omegas = np.asarray(omegas, dtype=float)
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        k_nodes = np.atleast_2d(np.asarray(k_nodes, dtype=float))
        nv, nk = omegas.size, k_nodes.shape[0]
        if not np.all(np.isfinite(k_nodes)):
            raise ValueError("k-nodes must be finite")
        # (2 pi)^-3 sum_z R(z) e^{i<k_m, z>} h^3
        back = np.exp(1j * (grid.flat_centers() @ k_nodes.T)) * grid.weight / (2 * np.pi) ** 3
        kz = np.empty((nv, nk, 3, 3), dtype=complex)
        ky = np.empty((nv, nk, 3, 3), dtype=complex)
        for w in np.unique(omegas):
            idx = np.flatnonzero(omegas == w)
            a = plane_wave_responses(grid, w, thetas[idx], c, self_rule)
            kz[idx] = np.einsum("nabz,zm->nmab", a, back, optimize=True)
            del a
            b = dagger_responses(grid, w, thetas[idx], c, self_rule)
            ky[idx] = np.einsum("nabz,zm->nmab", b, back, optimize=True)
            del b
        return cls(grid, omegas, thetas, k_nodes, np.asarray(weights), kz, ky, c)

    def effective(self):
        """Tables contracted with the k-weights: ``T(i, m) = sum_n K(i, n) W(n, m)``."""
        w = self.weights
        if w.ndim == 1:
            return self.kz * w[None, :, None, None], self.ky * w[None, :, None, None]
        return (np.einsum("inab,nm->imab", self.kz, w, optimize=True),
                np.einsum("inab,nm->imab", self.ky, w, optimize=True))

    def row(self, v, tol: float = 1e-9) -> int:
        d = np.linalg.norm(self.v - np.asarray(v, dtype=float), axis=1)
        i = int(np.argmin(d))
        if d[i] > tol * max(1.0, np.linalg.norm(v)):
            raise TableLookupError(f"v={v} is not a row of the kernel table")
        return i
