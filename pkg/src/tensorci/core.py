"""Dense order-3 tensor algebra.

Tensors are plain float64 numpy arrays of shape (p1, p2, p3). The canonical
vectorization is column-major (Fortran order), i.e.
Vec(T)[k1 + p1*(k2-1) + p1*p2*(k3-1)] = T[k1,k2,k3] in 1-based indexing,
and the mode-j unfolding follows
    [Mat_j(T)]_{k_j, k_{j+1} + p_{j+1}(k_{j+2}-1)} = T[k1,k2,k3]
with mode arithmetic wrapping modulo 3 into {1,2,3}. All functions are pure;
modes are 1-based to match the documented index rules.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

__all__ = [
    "matricize",
    "unmatricize",
    "mode_product",
    "multi_mode_product",
    "kron",
    "inner",
    "frob_norm",
    "vectorize",
    "unvectorize",
    "read_tnsr",
    "write_tnsr",
]


def _check_tensor3(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 3:
        raise ShapeError(f"expected an order-3 tensor, got ndim={t.ndim}")
    return t


def _mode_axes(mode: int) -> tuple[int, int, int]:
    if mode not in (1, 2, 3):
        raise ShapeError(f"mode must be 1, 2 or 3, got {mode}")
    j = mode - 1
    return j, (j + 1) % 3, (j + 2) % 3


def matricize(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-j unfolding: p_j x (p_{j+1} * p_{j+2}), column index k_{j+1} fastest."""
    t = _check_tensor3(t)
    a, b, c = _mode_axes(mode)
    return np.transpose(t, (a, b, c)).reshape(t.shape[a], -1, order="F")


def unmatricize(m: np.ndarray, mode: int, dims: tuple[int, int, int]) -> np.ndarray:
    """Inverse of :func:`matricize` for the given target dims."""
    m = np.asarray(m, dtype=np.float64)
    a, b, c = _mode_axes(mode)
    p = tuple(int(d) for d in dims)
    if m.shape != (p[a], p[b] * p[c]):
        raise ShapeError(f"matrix shape {m.shape} does not match mode {mode} of dims {p}")
    t = m.reshape(p[a], p[b], p[c], order="F")
    return np.transpose(t, np.argsort((a, b, c)))


def mode_product(t: np.ndarray, m: np.ndarray, mode: int) -> np.ndarray:
    """Mode-j product t x_j m, defined by Mat_j(result) = m @ Mat_j(t)."""
    t = _check_tensor3(t)
    m = np.asarray(m, dtype=np.float64)
    a, _, _ = _mode_axes(mode)
    if m.ndim != 2 or m.shape[1] != t.shape[a]:
        raise ShapeError(
            f"mode-{mode} product needs a matrix with {t.shape[a]} columns, got {m.shape}"
        )
    moved = np.moveaxis(t, a, 0)
    out = np.tensordot(m, moved, axes=([1], [0]))
    return np.moveaxis(out, 0, a)


def multi_mode_product(t: np.ndarray, matrices, modes=(1, 2, 3)) -> np.ndarray:
    """Apply several mode products in sequence (distinct modes commute)."""
    out = t
    for m, mode in zip(matrices, modes):
        if m is not None:
            out = mode_product(out, m, mode)
    return out


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))


def inner(a: np.ndarray, b: np.ndarray) -> float:
    a = _check_tensor3(a)
    b = _check_tensor3(b)
    if a.shape != b.shape:
        raise ShapeError(f"inner product dims differ: {a.shape} vs {b.shape}")
    return float(np.tensordot(a, b, axes=3))


def frob_norm(t: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(t, dtype=np.float64)))


def vectorize(t: np.ndarray) -> np.ndarray:
    """Canonical (column-major) vectorization; equals column-stacked Mat_1."""
    return _check_tensor3(t).reshape(-1, order="F")


def unvectorize(v: np.ndarray, dims: tuple[int, int, int]) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    p1, p2, p3 = (int(d) for d in dims)
    if v.size != p1 * p2 * p3:
        raise ShapeError(f"vector length {v.size} does not match dims {dims}")
    return v.reshape(p1, p2, p3, order="F")


# ---------------------------------------------------------------------------
# TNSR v1 text format

def write_tnsr(t: np.ndarray, path) -> None:
    """Write the `TNSR 1` text format: dims line, then values in canonical order."""
    t = _check_tensor3(t)
    p1, p2, p3 = t.shape
    with open(path, "w") as fh:
        fh.write("TNSR 1\n")
        fh.write(f"dims {p1} {p2} {p3}\n")
        fh.write("\n".join(format(v, ".17g") for v in vectorize(t)))
        fh.write("\n")


def read_tnsr(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().split()
        if header != ["TNSR", "1"]:
            raise ShapeError(f"{path}: not a TNSR v1 file")
        dims_line = fh.readline().split()
        if len(dims_line) != 4 or dims_line[0] != "dims":
            raise ShapeError(f"{path}: malformed dims line")
        dims = tuple(int(d) for d in dims_line[1:])
        if any(d <= 0 for d in dims):
            raise ShapeError(f"{path}: non-positive dims {dims}")
        values = np.array(fh.read().split(), dtype=np.float64)
    if values.size != dims[0] * dims[1] * dims[2]:
        raise ShapeError(
            f"{path}: expected {dims[0] * dims[1] * dims[2]} values, found {values.size}"
        )
    return unvectorize(values, dims)
