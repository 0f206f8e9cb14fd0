"""Dense tensor algebra: unfoldings, mode products, inner and outer products.

Tensors are plain :class:`numpy.ndarray` objects. Modes are 1-based in the
public API to match the usual Tucker notation (mode 1 is axis 0).

The mode-k unfolding places the mode-k fibres in the columns, ordered with
the *first* remaining index varying fastest, i.e. entry ``(i_1, ..., i_d)``
lands in column ``j = sum_{s != k} i_s * J_s`` with
``J_s = prod_{l < s, l != k} p_l`` (0-based indices).  This is numpy's
Fortran-order reshape of the tensor with mode k moved to the front.
"""

from functools import reduce

import numpy as np

__all__ = [
    "as_tensor",
    "matricize",
    "dematricize",
    "mode_product",
    "multi_mode_product",
    "inner",
    "inner_generalized",
    "outer",
    "kronecker",
    "frobenius_norm",
    "batched_mode_product",
]


def as_tensor(x, name="tensor"):
    """Convert ``x`` to a float64 array and reject empty, NaN or Inf input."""
    arr = np.asarray(x, dtype=float)
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _check_mode(ndim, k):
    if not 1 <= k <= ndim:
        raise ValueError(f"mode {k} out of range for order-{ndim} tensor")


def matricize(t, k):
    """Mode-k unfolding of ``t``.

    Parameters
    ----------
    t : ndarray
        Tensor of order d >= 1.
    k : int
        Mode, ``1 <= k <= d``.

    Returns
    -------
    ndarray of shape ``(p_k, prod_{l != k} p_l)``
    """
    t = np.asarray(t)
    _check_mode(t.ndim, k)
    moved = np.moveaxis(t, k - 1, 0)
    return moved.reshape(t.shape[k - 1], -1, order="F")


def dematricize(m, k, shape):
    """Inverse of :func:`matricize` for a target tensor ``shape``."""
    m = np.asarray(m)
    shape = tuple(int(s) for s in shape)
    _check_mode(len(shape), k)
    rest = shape[: k - 1] + shape[k:]
    expected = (shape[k - 1], int(np.prod(rest, dtype=int)))
    if m.ndim != 2 or m.shape != expected:
        raise ValueError(f"matrix shape {m.shape} inconsistent with mode {k} of {shape}")
    moved = m.reshape((shape[k - 1],) + rest, order="F")
    return np.moveaxis(moved, 0, k - 1)


def mode_product(t, m, k):
    """Mode-k product ``t x_k m``: contracts mode k of ``t`` with the columns of ``m``."""
    t = np.asarray(t)
    m = np.asarray(m)
    _check_mode(t.ndim, k)
    if m.ndim != 2 or m.shape[1] != t.shape[k - 1]:
        raise ValueError(
            f"matrix with {m.shape[-1]} columns cannot act on mode {k} of size {t.shape[k - 1]}"
        )
    return np.moveaxis(np.tensordot(m, t, axes=([1], [k - 1])), 0, k - 1)


def multi_mode_product(t, matrices, modes=None, transpose=False):
    """Apply ``t x_{k} M_k`` for every (matrix, mode) pair.

    ``matrices`` entries may be ``None`` to skip a mode. With ``transpose=True``
    each matrix is transposed first, which is the projection ``t x_k M_k^T``.
    """
    if modes is None:
        modes = range(1, len(matrices) + 1)
    out = np.asarray(t)
    for mat, k in zip(matrices, modes):
        if mat is None:
            continue
        out = mode_product(out, mat.T if transpose else mat, k)
    return out


def inner(a, b):
    """Frobenius inner product of two tensors of equal shape."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    # np.sum reduces pairwise; BLAS dot does not guarantee an order.
    return float(np.sum(a * b))


def inner_generalized(a, b):
    """Contract the leading ``b.ndim`` modes of ``a`` against ``b``.

    Returns a tensor of order ``a.ndim - b.ndim``; when the orders agree the
    result is the 0-d array holding the Frobenius inner product.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if b.ndim > a.ndim or a.shape[: b.ndim] != b.shape:
        raise ValueError(f"leading shape of {a.shape} does not match {b.shape}")
    flat = a.reshape(b.size, -1)
    out = np.sum(flat * b.reshape(-1, 1), axis=0)
    return out.reshape(a.shape[b.ndim:])


def outer(a, b):
    """Tensor outer product; order is ``a.ndim + b.ndim``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.multiply.outer(a, b)


def kronecker(ms):
    """Kronecker product of a non-empty list of matrices, folded left to right."""
    ms = list(ms)
    if not ms:
        raise ValueError("kronecker needs at least one matrix")
    return reduce(np.kron, (np.atleast_2d(np.asarray(m, dtype=float)) for m in ms))


def frobenius_norm(t):
    return float(np.sqrt(np.sum(np.square(np.asarray(t, dtype=float)))))


def batched_mode_product(x, m, axis):
    """Contract ``axis`` of a C-contiguous batch array with ``m`` (shape ``(p, r)``).

    Computes ``x x_axis m^T`` without transposing ``x`` in memory: the array is
    viewed as ``(prefix, p, suffix)`` and multiplied block-wise. The contracted
    axis is replaced by one of size ``r``.
    """
    x = np.ascontiguousarray(x)
    p = x.shape[axis]
    if m.shape[0] != p:
        raise ValueError(f"factor with {m.shape[0]} rows cannot act on axis of size {p}")
    prefix = int(np.prod(x.shape[:axis], dtype=int))
    suffix = int(np.prod(x.shape[axis + 1:], dtype=int))
    r = m.shape[1]
    if suffix == 1:
        out = x.reshape(prefix, p) @ m
    else:
        out = np.matmul(m.T, x.reshape(prefix, p, suffix))
    return out.reshape(x.shape[:axis] + (r,) + x.shape[axis + 1:])
