"""Hermitian operator bases and coefficient-space transforms.

Every operator on a labeled space is equivalently represented by the real
coefficient tensor of its expansion in a product basis of Hermitian matrices.
Per subsystem of dimension ``d`` we use the generalized Gell-Mann basis
scaled so that ``Tr[sigma_mu sigma_nu] = d delta_{mu,nu}`` with
``sigma_0 = identity``; for ``d == 2`` this is exactly the Pauli basis in the
order I, X, Y, Z.  The orthonormal variant ``tau_mu = sigma_mu / sqrt(d)``
makes the coefficient vector an isometric image of the operator
(``norm(coeffs) == hs_norm(operator)``), which is the convention used by all
internal numerics.
"""

from __future__ import annotations

from functools import lru_cache
from math import prod, sqrt

import numpy as np

__all__ = [
    "hermitian_basis",
    "basis_transform",
    "to_coeffs",
    "from_coeffs",
    "to_coeffs_batch",
    "from_coeffs_batch",
]

#: Letters for the qubit basis, used in string-diagnostic output.
PAULI_NAMES = "IXYZ"


@lru_cache(maxsize=None)
def hermitian_basis(d: int) -> np.ndarray:
    """The ``d*d`` Hermitian basis matrices for one subsystem, shape ``(d*d, d, d)``.

    Ordering: identity first, then for each index pair ``j < k`` the symmetric
    and antisymmetric off-diagonal matrices, then the diagonal matrices.  All
    elements satisfy ``Tr[sigma_mu sigma_nu] = d delta_{mu,nu}``.
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    out = np.zeros((d * d, d, d), dtype=complex)
    out[0] = np.eye(d)
    scale = sqrt(d / 2.0)
    idx = 1
    for j in range(d):
        for k in range(j + 1, d):
            sym = np.zeros((d, d), dtype=complex)
            sym[j, k] = sym[k, j] = 1.0
            out[idx] = scale * sym
            idx += 1
            anti = np.zeros((d, d), dtype=complex)
            anti[j, k] = -1.0j
            anti[k, j] = 1.0j
            out[idx] = scale * anti
            idx += 1
    for l in range(1, d):
        diag = np.zeros((d, d), dtype=complex)
        diag[:l, :l] = np.eye(l)
        diag[l, l] = -l
        out[idx] = scale * sqrt(2.0 / (l * (l + 1))) * diag
        idx += 1
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def basis_transform(d: int) -> np.ndarray:
    """Unitary ``(d*d, d*d)`` matrix mapping vectorized operators to coefficients.

    Row ``mu`` is the row-major flattening of ``tau_mu.T`` with
    ``tau_mu = sigma_mu / sqrt(d)``, so that for a single subsystem
    ``coeffs = M @ vec(W)`` gives ``coeffs[mu] = Tr[tau_mu W]``.
    """
    sigma = hermitian_basis(d)
    m = np.transpose(sigma, (0, 2, 1)).reshape(d * d, d * d) / sqrt(d)
    m.setflags(write=False)
    return m


def _interleave(mat: np.ndarray, dims: tuple[int, ...], nbatch: int) -> np.ndarray:
    """Reshape ``(..., D, D)`` into ``(..., d_1^2, ..., d_n^2)`` combined row/col axes."""
    n = len(dims)
    t = mat.reshape(mat.shape[:nbatch] + dims + dims)
    perm = list(range(nbatch)) + [nbatch + x for s in range(n) for x in (s, n + s)]
    t = np.transpose(t, perm)
    shape = mat.shape[:nbatch] + tuple(d * d for d in dims)
    return t.reshape(shape)


def _deinterleave(t: np.ndarray, dims: tuple[int, ...], nbatch: int) -> np.ndarray:
    """Inverse of :func:`_interleave`."""
    n = len(dims)
    paired = t.reshape(t.shape[:nbatch] + tuple(x for d in dims for x in (d, d)))
    perm = (
        list(range(nbatch))
        + [nbatch + 2 * s for s in range(n)]
        + [nbatch + 2 * s + 1 for s in range(n)]
    )
    big = prod(dims)
    return np.transpose(paired, perm).reshape(t.shape[:nbatch] + (big, big))


def _apply_axis(t: np.ndarray, m: np.ndarray, axis: int) -> np.ndarray:
    t = np.moveaxis(t, axis, -1)
    t = t @ m.T
    return np.moveaxis(t, -1, axis)


def to_coeffs_batch(mats: np.ndarray, dims: tuple[int, ...]) -> np.ndarray:
    """Coefficient tensors of a batch of operators, shape ``(..., d_1^2, ..., d_n^2)``.

    The result is complex; it is real (up to roundoff) iff the inputs are
    Hermitian.
    """
    nbatch = mats.ndim - 2
    t = _interleave(np.asarray(mats, dtype=complex), tuple(dims), nbatch)
    for s, d in enumerate(dims):
        t = _apply_axis(t, basis_transform(d), nbatch + s)
    return t


def from_coeffs_batch(coeffs: np.ndarray, dims: tuple[int, ...]) -> np.ndarray:
    """Operators from a batch of coefficient tensors (inverse of :func:`to_coeffs_batch`)."""
    dims = tuple(dims)
    nbatch = coeffs.ndim - len(dims)
    t = np.asarray(coeffs, dtype=complex)
    for s, d in enumerate(dims):
        t = _apply_axis(t, basis_transform(d).conj().T, nbatch + s)
    return _deinterleave(t, dims, nbatch)


def to_coeffs(mat: np.ndarray, dims: tuple[int, ...]) -> np.ndarray:
    """Real coefficient tensor of one Hermitian operator."""
    c = to_coeffs_batch(mat, tuple(dims))
    return np.ascontiguousarray(c.real)


def from_coeffs(coeffs: np.ndarray, dims: tuple[int, ...]) -> np.ndarray:
    """Hermitian operator from one real coefficient tensor."""
    return from_coeffs_batch(coeffs, tuple(dims))
