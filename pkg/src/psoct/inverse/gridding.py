"""Scattered ``psi~`` samples -> Cartesian k-grid -> voxel-space ``psi``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..forward import VoxelGrid


class CoverageError(RuntimeError):
    pass


@dataclass
class GriddedPsi:
    psi: np.ndarray            # (n_comp, N1, N2, N3) complex
    coverage: float
    k_radius: float
    spectrum: np.ndarray       # gridded psi~ on the (padded) DFT grid
    filled: np.ndarray         # bool mask of nodes that received data


def dft_kgrid(shape, h: float):
    """Angular wave numbers of the DFT grid, one array per axis (FFT order)."""
    return [2 * np.pi * np.fft.fftfreq(n, d=h) for n in shape]


def trilinear_grid(v, values, shape, h: float):
    """Normalised trilinear gridding of samples ``values`` ``(n_comp, n)`` at ``v`` ``(n, 3)``.

    Node value = sum(w s) / sum(w) over the samples touching it.
    """
    v = np.atleast_2d(v)
    values = np.atleast_2d(values)
    shape = tuple(shape)
    dk = np.array([2 * np.pi / (n * h) for n in shape])
    pos = v / dk                                    # fractional node index (unwrapped)
    base = np.floor(pos).astype(int)
    frac = pos - base
    acc = np.zeros((values.shape[0],) + shape, dtype=complex)
    wsum = np.zeros(shape)
    for corner in range(8):
        off = np.array([(corner >> a) & 1 for a in range(3)])
        w = np.prod(np.where(off, frac, 1 - frac), axis=1)
        idx = tuple(np.mod(base[:, a] + off[a], shape[a]) for a in range(3))
        np.add.at(wsum, idx, w)
        for c in range(values.shape[0]):
            np.add.at(acc[c], idx, w * values[c])
    filled = wsum > 1e-12
    out = np.zeros_like(acc)
    out[:, filled] = acc[:, filled] / wsum[filled]
    return out, filled


def grid_and_invert(v, values, grid: VoxelGrid, pad: int = 2, hermitian: bool = True,
                    k_radius=None, min_coverage: float = 0.0) -> GriddedPsi:
    """Spatial fields from ``psi~`` samples.

    ``values`` is ``(n_comp, n)``; samples are gridded on the DFT grid of
    the voxel grid padded ``pad`` times, zero-filled elsewhere and inverse
    transformed with ``psi(z) = (2 pi)^-3 int psi~(k) e^{i<k,z>} dk``.
    ``hermitian`` adds the mirrored samples ``psi~(-v) = conj psi~(v)``
    (real ``psi``).  Coverage is the fraction of nodes with
    ``|k| <= k_radius`` (default: largest ``|v|``) that received data.
    """
    v = np.atleast_2d(np.asarray(v, dtype=float))
    values = np.atleast_2d(np.asarray(values, dtype=complex))
    if pad < 1:
        raise ValueError("pad must be >= 1")
    shape = tuple(pad * n for n in grid.shape)
    ks = dft_kgrid(shape, grid.h)
    kk = np.stack(np.meshgrid(*ks, indexing="ij"), -1)
    kn = np.linalg.norm(kk, axis=-1)
    if v.shape[0] == 0:
        zero = np.zeros((values.shape[0],) + grid.shape, dtype=complex)
        if min_coverage > 0:
            raise CoverageError("no samples to grid")
        return GriddedPsi(zero, 0.0, 0.0, np.zeros((values.shape[0],) + shape, complex),
                          np.zeros(shape, bool))
    if hermitian:
        v = np.concatenate([v, -v])
        values = np.concatenate([values, values.conj()], axis=1)
    ok = np.all(np.isfinite(values), axis=0)
    spec, filled = trilinear_grid(v[ok], values[:, ok], shape, grid.h)
    radius = float(np.max(np.linalg.norm(v, axis=1))) if k_radius is None else float(k_radius)
    ball = kn <= radius
    coverage = float(np.count_nonzero(filled & ball) / max(np.count_nonzero(ball), 1))
    if coverage < min_coverage:
        raise CoverageError(f"k-space coverage {coverage:.1%} below the required {min_coverage:.1%}")
    # voxel z_n = z0 + n h for n < N; padded cells extend past the box
    z0 = np.array([ax[0] for ax in grid.axes()])
    shift = np.exp(1j * np.einsum("...a,a->...", kk, z0))
    field = np.fft.ifftn(spec * shift, axes=(1, 2, 3)) / grid.weight
    n = grid.shape
    return GriddedPsi(field[:, :n[0], :n[1], :n[2]], coverage, radius, spec, filled)
