"""Dense complex linear algebra with tensor-factor bookkeeping.

Matrices are plain ``numpy`` complex arrays. A factor shape is a tuple of
subsystem dimensions. Composite indices are big-endian: for factors
``(d1, ..., dk)`` the first factor is the most significant digit, which is
the ordering ``numpy.kron`` produces.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-12

FactorShape = tuple[int, ...]


class DimensionError(ValueError):
    """Raised when matrix or factor dimensions are incompatible."""


def as_matrix(m) -> np.ndarray:
    """Coerce ``m`` to a 2-D complex array, rejecting NaN/Inf entries."""
    a = np.asarray(m, dtype=complex)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1)
    elif a.ndim != 2:
        raise DimensionError(f"expected a matrix, got array of shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def tensor(a, b) -> np.ndarray:
    """Kronecker product with ``a`` as the major factor."""
    return np.kron(as_matrix(a), as_matrix(b))


def tensor_all(mats: Iterable) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, as_matrix(m))
    return out


def compose(f, g) -> np.ndarray:
    """``f`` after ``g``, i.e. the matrix product ``f @ g``."""
    f, g = as_matrix(f), as_matrix(g)
    if f.shape[1] != g.shape[0]:
        raise DimensionError(f"cannot compose {f.shape} after {g.shape}")
    return f @ g


def dagger(m) -> np.ndarray:
    return as_matrix(m).conj().T


def _check_shape(shape: Sequence[int], dim: int) -> FactorShape:
    shape = tuple(int(d) for d in shape)
    if any(d < 1 for d in shape) or int(np.prod(shape, dtype=np.int64)) != dim:
        raise DimensionError(f"factor shape {shape} does not match dimension {dim}")
    return shape


def partial_trace(m, shape: Sequence[int], traced: Iterable[int]) -> np.ndarray:
    """Trace out the factors listed in ``traced``; survivors keep their order.

    >>> partial_trace(np.kron(np.eye(2), np.diag([1, 2])), (2, 2), [1]).real
    array([[3., 0.],
           [0., 3.]])
    """
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise DimensionError("partial trace needs a square matrix")
    shape = _check_shape(shape, m.shape[0])
    k = len(shape)
    traced = sorted(set(int(t) for t in traced))
    if any(t < 0 or t >= k for t in traced):
        raise IndexError(f"factor index out of range for {k} factors: {traced}")
    kept = [i for i in range(k) if i not in traced]
    t = m.reshape(shape + shape)
    # einsum subscripts: row indices a.., column indices A..; traced pairs share a letter
    letters = "abcdefghijklmnopqrstuvwxyz"
    rows = [letters[i] for i in range(k)]
    cols = [letters[i].upper() if i in kept else letters[i] for i in range(k)]
    out = "".join(rows[i] for i in kept) + "".join(cols[i] for i in kept)
    res = np.einsum("".join(rows) + "".join(cols) + "->" + out, t)
    d = int(np.prod([shape[i] for i in kept], dtype=np.int64))
    return res.reshape(d, d)


def permute_factors(m, shape: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    """Reorder the tensor factors of a square matrix.

    New factor ``j`` is old factor ``perm[j]``.
    """
    m = as_matrix(m)
    shape = _check_shape(shape, m.shape[0])
    k = len(shape)
    if sorted(perm) != list(range(k)):
        raise ValueError(f"not a permutation of {k} factors: {perm}")
    t = m.reshape(shape + shape).transpose(list(perm) + [k + p for p in perm])
    return t.reshape(m.shape)


def permutation_matrix(shape: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    """Unitary ``P`` with ``P (v1 x ... x vk) = v_perm[0] x ... x v_perm[k-1]``."""
    shape = tuple(shape)
    d = int(np.prod(shape, dtype=np.int64))
    idx = np.arange(d).reshape(shape).transpose(perm).reshape(-1)
    p = np.zeros((d, d), dtype=complex)
    p[np.arange(d), idx] = 1.0
    return p


def embed(op, shape: Sequence[int], targets: Sequence[int]) -> np.ndarray:
    """Lift a square ``op`` on the listed factors to the whole system.

    ``op`` acts on ``targets`` in the given order; all other factors get the
    identity.
    """
    op = as_matrix(op)
    shape = tuple(shape)
    targets = list(targets)
    rest = [i for i in range(len(shape)) if i not in targets]
    dt = int(np.prod([shape[i] for i in targets], dtype=np.int64))
    if op.shape != (dt, dt):
        raise DimensionError(f"operator {op.shape} does not act on factors {targets}")
    perm = targets + rest
    p = permutation_matrix(shape, perm)
    dr = int(np.prod([shape[i] for i in rest], dtype=np.int64))
    return p.conj().T @ np.kron(op, np.eye(dr)) @ p


def operator_norm(m) -> float:
    """Largest singular value."""
    m = as_matrix(m)
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def trace_norm(m) -> float:
    """Sum of singular values."""
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise DimensionError("trace norm needs a square matrix")
    return float(np.sum(np.linalg.svd(m, compute_uv=False)))


def hermitian_eig(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix, eigenvalues descending.

    Raises ``ValueError`` if ``m`` deviates from Hermitian by more than
    ``HERMITIAN_TOL`` relative to its operator norm.
    """
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise DimensionError("eigendecomposition needs a square matrix")
    scale = max(operator_norm(m), 1.0)
    if operator_norm(m - m.conj().T) > HERMITIAN_TOL * scale:
        raise ValueError("matrix is not Hermitian")
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    return w[::-1].copy(), v[:, ::-1].copy()


def polar_unitary(m) -> np.ndarray:
    """Unitary factor ``P Q^dagger`` of ``m = P S Q^dagger``.

    This is the unitary ``W`` maximising ``Re Tr(W^dagger m)``.
    """
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise DimensionError("polar decomposition needs a square matrix")
    p, _, qh = np.linalg.svd(m)
    return p @ qh


def is_unitary(u, tol: float = 1e-10) -> bool:
    u = as_matrix(u)
    return u.shape[0] == u.shape[1] and operator_norm(u.conj().T @ u - np.eye(u.shape[0])) <= tol


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros((dim, 1), dtype=complex)
    v[index, 0] = 1.0
    return v
