"""Raw little-endian array files with a JSON manifest, plus small JSON helpers."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

SUPPORTED = {"complex64": "<c8", "complex128": "<c16", "float64": "<f8", "float32": "<f4"}


class ArrayFileError(ValueError):
    pass


def save_array(path, array, dtype: str = "complex64") -> dict:
    """Write ``array`` to ``path`` (raw, row-major, little-endian) and ``path.json``.

    Returns the manifest entry.
    """
    arr = np.asarray(array)
    if arr.size == 0:
        raise ArrayFileError("refusing to write an empty array")
    if dtype not in SUPPORTED:
        raise ArrayFileError(f"unsupported dtype {dtype!r}")
    path = Path(path)
    data = np.ascontiguousarray(arr, dtype=np.dtype(SUPPORTED[dtype]))
    path.write_bytes(data.tobytes(order="C"))
    manifest = {"file": path.name, "dtype": dtype, "byteorder": "little",
                "shape": list(arr.shape), "order": "C"}
    Path(str(path) + ".json").write_text(json.dumps(manifest, indent=2))
    return manifest


def load_array(path, shape=None) -> np.ndarray:
    path = Path(path)
    mpath = Path(str(path) + ".json")
    try:
        manifest = json.loads(mpath.read_text())
        dtype = np.dtype(SUPPORTED[manifest["dtype"]])
        mshape = tuple(int(n) for n in manifest["shape"])
    except FileNotFoundError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ArrayFileError(f"corrupted manifest {mpath}: {exc}") from exc
    if shape is not None and tuple(shape) != mshape:
        raise ArrayFileError(f"shape mismatch: manifest {mshape}, requested {tuple(shape)}")
    raw = path.read_bytes()
    expected = int(np.prod(mshape)) * dtype.itemsize
    if len(raw) != expected:
        raise ArrayFileError(f"{path} holds {len(raw)} bytes, manifest implies {expected}")
    return np.frombuffer(raw, dtype=dtype).reshape(mshape).copy()


def complex_to_json(z):
    z = np.asarray(z)
    return np.stack([z.real, z.imag], axis=-1).tolist()


def complex_from_json(a):
    a = np.asarray(a, dtype=float)
    return a[..., 0] + 1j * a[..., 1]
