"""Phantom description, rasterisation and closed-form spatial transforms."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .forward import OrthotropicSusceptibility, VoxelGrid

SHAPE_KINDS = ("gaussian", "sphere", "box")
# a gaussian must fit inside the box out to this many standard deviations
GAUSSIAN_EXTENT = 3.0


class PhantomError(ValueError):
    pass


def _complex(v):
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise PhantomError(f"complex values are [re, im] pairs, got {v!r}")
        return complex(float(v[0]), float(v[1]))
    return complex(v)


@dataclass
class Shape:
    kind: str
    center: np.ndarray
    size: np.ndarray          # sigma (gaussian), radius (sphere), half widths (box)
    psi: np.ndarray           # (psi11, psi12, psi22, psi33)

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise PhantomError(f"unknown shape kind {self.kind!r}")
        self.center = np.asarray(self.center, dtype=float).reshape(3)
        size = np.atleast_1d(np.asarray(self.size, dtype=float))
        if self.kind == "box":
            size = np.broadcast_to(size, (3,)).copy()
        elif size.size != 1:
            raise PhantomError(f"{self.kind} takes a scalar size")
        if np.any(size <= 0):
            raise PhantomError("shape sizes must be positive")
        self.size = size
        psi = np.asarray([_complex(v) for v in self.psi], dtype=complex)
        if psi.shape != (4,):
            raise PhantomError("psi needs the four components (11, 12, 22, 33)")
        self.psi = psi

    def bounds(self):
        if self.kind == "gaussian":
            half = GAUSSIAN_EXTENT * self.size[0]
        elif self.kind == "sphere":
            half = self.size[0]
        else:
            half = self.size
        return self.center - half, self.center + half

    def profile(self, x):
        """Scalar profile at points ``x`` ``(..., 3)``."""
        d = np.asarray(x) - self.center
        if self.kind == "gaussian":
            return np.exp(-0.5 * np.sum(d**2, axis=-1) / self.size[0] ** 2)
        if self.kind == "sphere":
            return (np.sum(d**2, axis=-1) <= self.size[0] ** 2).astype(float)
        return np.all(np.abs(d) <= self.size, axis=-1).astype(float)

    def profile_ft(self, k):
        """Continuous spatial transform ``int profile(x) e^{-i<k,x>} dx``."""
        k = np.asarray(k, dtype=float)
        shift = np.exp(-1j * k @ self.center)
        if self.kind == "gaussian":
            s = self.size[0]
            return (2 * np.pi * s**2) ** 1.5 * np.exp(-0.5 * s**2 * np.sum(k**2, axis=-1)) * shift
        if self.kind == "sphere":
            r = self.size[0]
            kr = np.linalg.norm(k, axis=-1) * r
            small = kr < 1e-4
            safe = np.where(small, 1.0, kr)
            val = 4 * np.pi * r**3 * (np.sin(safe) - safe * np.cos(safe)) / safe**3
            val = np.where(small, 4 * np.pi * r**3 / 3 * (1 - kr**2 / 10), val)
            return val * shift
        a = self.size
        return np.prod(2 * a * np.sinc(k * a / np.pi), axis=-1) * shift

    def to_dict(self):
        return {"kind": self.kind, "center": self.center.tolist(),
                "size": self.size.tolist() if self.kind == "box" else float(self.size[0]),
                "psi": [[z.real, z.imag] for z in self.psi]}


@dataclass
class PhantomSpec:
    grid: VoxelGrid
    chi0: float = 0.0
    eps: float = 1e-3
    shapes: list = field(default_factory=list)

    @classmethod
    def from_dict(cls, d):
        g = d["grid"]
        shape = g["shape"] if "shape" in g else [g["n"]] * 3
        grid = VoxelGrid(tuple(shape), float(g["h"]), tuple(g.get("center", (0.0, 0.0, 0.0))))
        shapes = [Shape(s["kind"], s["center"], s["size"], s["psi"]) for s in d.get("shapes", [])]
        return cls(grid, float(d.get("chi0", 0.0)), float(d.get("eps", 1e-3)), shapes)

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"phantom file not found: {path}")
        return cls.from_dict(json.loads(path.read_text()))

    def to_dict(self):
        return {"grid": self.grid.to_dict(), "chi0": self.chi0, "eps": self.eps,
                "shapes": [s.to_dict() for s in self.shapes]}

    def analytic_ft(self, k) -> np.ndarray:
        """Closed-form transform of each psi component at ``k`` ``(n, 3)`` -> ``(4, n)``."""
        k = np.atleast_2d(np.asarray(k, dtype=float))
        out = np.zeros((4, k.shape[0]), dtype=complex)
        for s in self.shapes:
            out += s.psi[:, None] * s.profile_ft(k)[None, :]
        return out


def rasterize(spec: PhantomSpec) -> OrthotropicSusceptibility:
    """Voxelise a phantom: gaussians sampled at centres, sphere/box by centre inclusion."""
    grid = spec.grid
    x = grid.centers()
    psi = np.zeros((4,) + grid.shape, dtype=complex)
    for s in spec.shapes:
        lo, hi = s.bounds()
        if not grid.contains_box(lo, hi):
            raise PhantomError(f"{s.kind} at {s.center.tolist()} extends outside the sample box")
        psi += s.psi[:, None, None, None] * s.profile(x)[None]
    return OrthotropicSusceptibility(grid, spec.chi0, spec.eps, psi)


def gaussian_phantom(n: int = 12, h: float = 1.0, sigma: float = 1.2, chi0: float = 0.0,
                     eps: float = 1e-3, psi=(1.0, 0.4, 0.7, 0.5), center=(0.0, 0.0, 0.0)):
    """Single centred gaussian blob on an ``n^3`` grid."""
    grid = VoxelGrid((n, n, n), h)
    return PhantomSpec(grid, chi0, eps, [Shape("gaussian", center, sigma, psi)])
