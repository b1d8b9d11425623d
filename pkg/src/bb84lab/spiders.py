"""Spider families of orthonormal bases and the maps derived from them.

Quantum wires of dimension ``D`` carry ``B(C^D)``. Classical wires carry
probability vectors, embedded as diagonal matrices in the standard basis
(outcome ``i`` is ``|i><i|``) so that classical and quantum legs share one
channel type. Residual checks return numbers; callers pick thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from . import channels as ch
from . import linalg
from .channels import Channel, Wire

ONB_TOL = 1e-12
UNBIASED_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Basis:
    """Orthonormal basis; column ``i`` of ``vectors`` is basis vector ``i``."""

    vectors: np.ndarray
    name: str = ""

    def __post_init__(self):
        v = linalg.as_matrix(self.vectors)
        if v.shape[0] != v.shape[1]:
            raise linalg.DimensionError(f"basis matrix must be square, got {v.shape}")
        if linalg.operator_norm(v.conj().T @ v - np.eye(v.shape[0])) > ONB_TOL:
            raise ValueError("basis vectors are not orthonormal")
        object.__setattr__(self, "vectors", v)

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    def vector(self, i: int) -> np.ndarray:
        return self.vectors[:, [i]]

    def projector(self, i: int) -> np.ndarray:
        v = self.vectors[:, [i]]
        return v @ v.conj().T


def computational_basis(dim: int) -> Basis:
    return Basis(np.eye(dim, dtype=complex), name="Z")


def fourier_basis(dim: int) -> Basis:
    """Columns ``(1/sqrt D) sum_k w^{jk} |k>`` with ``w = exp(2 pi i / D)``."""
    if dim < 1:
        raise ValueError("dimension must be positive")
    j, k = np.meshgrid(np.arange(dim), np.arange(dim), indexing="ij")
    f = np.exp(2j * np.pi * (j * k % dim) / dim) / np.sqrt(dim)
    # row index k, column index j; symmetric anyway
    return Basis(f.T.copy(), name="X")


@dataclass(frozen=True, eq=False)
class SpiderPair:
    """Two bases of the same space: ``white`` (Z-like) and ``gray`` (X-like)."""

    white: Basis
    gray: Basis

    def __post_init__(self):
        if self.white.dim != self.gray.dim:
            raise linalg.DimensionError("both bases must have the same dimension")

    @property
    def dim(self) -> int:
        return self.white.dim

    def overlaps(self) -> np.ndarray:
        """``O[i, j] = <z_i|x_j>``."""
        return self.white.vectors.conj().T @ self.gray.vectors

    def unbiasedness_residual(self) -> float:
        """``max_ij | |<z_i|x_j>|^2 - 1/D |``."""
        return float(np.max(np.abs(np.abs(self.overlaps()) ** 2 - 1.0 / self.dim)))

    def is_complementary(self, tol: float = UNBIASED_TOL) -> bool:
        return self.unbiasedness_residual() <= tol


def standard_pair(dim: int) -> SpiderPair:
    """Computational basis with its Fourier partner; Z/X for qubits."""
    return SpiderPair(computational_basis(dim), fourier_basis(dim))


# ---------------------------------------------------------------------------
# spiders as linear maps


def spider(b: Basis, m: int, n: int) -> np.ndarray:
    """``sum_i |i..i><i..i|`` with ``m`` inputs and ``n`` outputs (``D^n x D^m``)."""
    if m < 0 or n < 0:
        raise ValueError("leg counts must be non-negative")
    return _tensor_powers(b.vectors, n) @ _tensor_powers(b.vectors, m).conj().T


def _tensor_powers(v: np.ndarray, n: int) -> np.ndarray:
    """Matrix whose column ``i`` is ``v_i`` tensored with itself ``n`` times."""
    d = v.shape[1]
    out = np.ones((1, d), dtype=complex)
    for _ in range(n):
        out = (out[:, None, :] * v[None, :, :]).reshape(-1, d)
    return out


def double(v) -> Channel:
    """Pure channel ``rho -> v rho v^dagger``."""
    return Channel.from_kraus([linalg.as_matrix(v)])


def measure_map(b: Basis) -> Channel:
    """Quantum -> classical: ``rho -> (<b_i|rho|b_i>)_i``."""
    d = b.dim
    kraus = [linalg.ket(i, d) @ b.vector(i).conj().T for i in range(d)]
    return Channel(tuple(kraus), (Wire(d),), (Wire(d, True),))


def encode_map(b: Basis) -> Channel:
    """Classical -> quantum: ``p -> sum_i p_i |b_i><b_i|``."""
    d = b.dim
    kraus = [b.vector(i) @ linalg.ket(i, d).T for i in range(d)]
    return Channel(tuple(kraus), (Wire(d, True),), (Wire(d),))


def decoherence(b: Basis) -> Channel:
    """Kill off-diagonal entries in basis ``b``."""
    return Channel(tuple(b.projector(i) for i in range(b.dim)), (Wire(b.dim),), (Wire(b.dim),))


def classical_identity(dim: int) -> Channel:
    """Identity on the diagonal subalgebra (dephasing in outcome labels)."""
    kraus = [linalg.ket(i, dim) @ linalg.ket(i, dim).T for i in range(dim)]
    return Channel(tuple(kraus), (Wire(dim, True),), (Wire(dim, True),))


def copy_channel(dim: int) -> Channel:
    """Classical copy ``i -> (i, i)`` as a channel."""
    kraus = [np.kron(linalg.ket(i, dim), linalg.ket(i, dim)) @ linalg.ket(i, dim).T
             for i in range(dim)]
    return Channel(tuple(kraus), (Wire(dim, True),), (Wire(dim, True), Wire(dim, True)))


def distribution(rho) -> np.ndarray:
    """Probability vector carried by a classical (diagonal) wire."""
    return np.real(np.diagonal(linalg.as_matrix(rho))).copy()


def point_mass(i: int, dim: int) -> np.ndarray:
    p = np.zeros((dim, dim), dtype=complex)
    p[i, i] = 1.0
    return p


def transfer_matrix(c: Channel) -> np.ndarray:
    """Column-stochastic ``T[j, i] = <j|c(|i><i|)|j>`` of a classical-to-classical map."""
    d_in, d_out = c.in_dim, c.out_dim
    t = np.zeros((d_out, d_in))
    for i in range(d_in):
        t[:, i] = distribution(ch.apply(c, point_mass(i, d_in)))
    return t


# classical spiders act on probability vectors, in outcome coordinates

def classical_copy(b: Basis) -> np.ndarray:
    """``sum_i |ii><i|``."""
    return spider(computational_basis(b.dim), 1, 2)


def classical_delete(b: Basis) -> np.ndarray:
    """``sum_i <i|`` (marginalisation)."""
    return spider(computational_basis(b.dim), 1, 0)


def classical_uniform(b: Basis) -> np.ndarray:
    """``(1/D) sum_i |i>``."""
    return spider(computational_basis(b.dim), 0, 1) / b.dim


def nondemolition_measurement(b: Basis) -> Channel:
    """``rho -> sum_i |b_i><b_i|rho|b_i><b_i| (x) |i><i|`` (quantum, classical)."""
    d = b.dim
    kraus = [np.kron(b.vector(i), linalg.ket(i, d)) @ b.vector(i).conj().T for i in range(d)]
    return Channel(tuple(kraus), (Wire(d),), (Wire(d), Wire(d, True)))


def antipode(p: SpiderPair) -> np.ndarray:
    """``s = sum_ij <z_i|x_j> |x_j><z_i|``."""
    o = p.overlaps()
    z, x = p.white.vectors, p.gray.vectors
    return x @ o.T @ z.conj().T


def antipode_unitarity_residual(p: SpiderPair) -> float:
    s = antipode(p)
    return linalg.operator_norm(s.conj().T @ s - np.eye(p.dim))


def measure_encode_residual(p: SpiderPair) -> float:
    """Residual of ``m_gray o e_white = (1/D) uniform o delete``.

    Entry ``(j, i)`` of the left side is ``|<z_i|x_j>|^2``; the right side
    has every entry ``1/D``.
    """
    lhs = transfer_matrix(ch.compose(measure_map(p.gray), encode_map(p.white)))
    rhs = classical_uniform(p.white) @ classical_delete(p.white)
    return linalg.operator_norm(lhs - rhs)


def complementarity_sides(p: SpiderPair) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of the spider form of unbiasedness, as ``D x D`` matrices.

    Left: white copy, antipode on the first leg, gray merge. Right:
    ``1/D`` times the gray unit after the white counit.
    """
    d = p.dim
    lhs = spider(p.gray, 2, 1) @ np.kron(antipode(p), np.eye(d)) @ spider(p.white, 1, 2)
    rhs = spider(p.gray, 0, 1) @ spider(p.white, 1, 0) / d
    return lhs, rhs


def antipode_complementarity_residual(p: SpiderPair) -> float:
    lhs, rhs = complementarity_sides(p)
    return linalg.operator_norm(lhs - rhs)


# public names used by the operation contract
check_complementarity_thm1 = measure_encode_residual
check_complementarity_thm2 = antipode_complementarity_residual


# ---------------------------------------------------------------------------
# identity suite


def residual_norm(x: np.ndarray) -> float:
    """Operator norm for desk-scale matrices, Frobenius (an upper bound) above."""
    x = np.asarray(x)
    if x.size == 0:
        return 0.0
    if max(x.shape) <= 512:
        return linalg.operator_norm(x)
    return float(np.linalg.norm(x))


def channel_residual(c1: Channel, c2: Channel) -> float:
    """``||J(c1) - J(c2)||``: zero iff the maps are equal."""
    return linalg.operator_norm(ch.choi(c1) - ch.choi(c2))


def fused_composite(b: Basis, m: int, n: int, m2: int, n2: int, k: int) -> np.ndarray:
    """Spider ``(m -> n)`` followed by spider ``(m2 -> n2)`` joined along ``k`` legs.

    The last ``k`` outputs of the first spider feed the first ``k`` inputs of
    the second; other legs pass through. Contracted as tensors so no
    Kronecker identities are formed.
    """
    d = b.dim
    a, c = n - k, m2 - k
    first = spider(b, m, n).reshape(d**a, d**k, d**m)
    second = spider(b, m2, n2).reshape(d**n2, d**k, d**c)
    out = np.einsum("xkm,ykc->xymc", first, second)
    return out.reshape(d ** (a + n2), d ** (m + c))


def fusion_residual(b: Basis, max_legs: int = 3) -> float:
    """Worst fusion residual over ``0 <= m, n, m2, n2 <= max_legs``, ``k in {1, 2}``."""
    worst = 0.0
    for m, n, m2, n2 in product(range(max_legs + 1), repeat=4):
        for k in (1, 2):
            if k > n or k > m2:
                continue
            lhs = fused_composite(b, m, n, m2, n2, k)
            rhs = spider(b, m + m2 - k, n - k + n2)
            worst = max(worst, residual_norm(lhs - rhs))
    return worst


def hs_adjoint_residual(b: Basis) -> float:
    """``m = e^dagger`` with respect to the Hilbert-Schmidt inner product."""
    d = b.dim
    meas, enc = measure_map(b), encode_map(b)
    m_mat = np.zeros((d, d * d), dtype=complex)
    e_mat = np.zeros((d * d, d), dtype=complex)
    for k in range(d):
        for l in range(d):
            unit = np.zeros((d, d), dtype=complex)
            unit[k, l] = 1.0
            m_mat[:, k * d + l] = np.diagonal(ch.apply(meas, unit))
    for i in range(d):
        e_mat[:, i] = ch.apply(enc, point_mass(i, d)).reshape(-1)
    return linalg.operator_norm(m_mat - e_mat.conj().T)


def identity_residuals(p: SpiderPair, max_fusion_legs: int = 3) -> dict[str, float]:
    """Residual of every spider identity for both bases of ``p``.

    Keys name the identity; values are the worst residual over both bases.
    """
    d = p.dim
    res: dict[str, float] = {}

    def record(key, value):
        res[key] = max(res.get(key, 0.0), float(value))

    for b in (p.white, p.gray):
        record("fusion", fusion_residual(b, max_fusion_legs))
        record("zero_leg_scalar", abs(spider(b, 0, 0)[0, 0] - d))
        for n in (1, 2, 3):
            record("trace_preservation", double(spider(b, 1, n)).tp_residual())
        meas, enc, dec = measure_map(b), encode_map(b), decoherence(b)
        record("decoherence_split_quantum", channel_residual(ch.compose(enc, meas), dec))
        record("decoherence_split_classical",
               channel_residual(ch.compose(meas, enc), classical_identity(d)))
        record("decoherence_idempotent", channel_residual(ch.compose(dec, dec), dec))
        traced = ch.compose(ch.discard((d, d), [1]), double(spider(b, 1, 2)))
        record("decoherence_from_spider", channel_residual(traced, dec))
        record("measure_encode_adjoint", hs_adjoint_residual(b))
        copy, delete, uniform = classical_copy(b), classical_delete(b), classical_uniform(b)
        eye = np.eye(d)
        record("copy_counit", max(linalg.operator_norm(np.kron(delete, eye) @ copy - eye),
                                  linalg.operator_norm(np.kron(eye, delete) @ copy - eye)))
        record("copy_point_mass", max(
            linalg.operator_norm(copy @ linalg.ket(i, d) - np.kron(linalg.ket(i, d), linalg.ket(i, d)))
            for i in range(d)))
        record("delete_uniform", abs((delete @ uniform)[0, 0] - 1.0))
        record("copy_channel", channel_residual(
            copy_channel(d), Channel.from_kraus([copy @ linalg.ket(i, d) @ linalg.ket(i, d).T
                                                 for i in range(d)])))
        nd = nondemolition_measurement(b)
        record("nondemolition_quantum_marginal",
               channel_residual(ch.compose(ch.discard(nd.outputs, [1]), nd), dec))
        record("nondemolition_classical_marginal",
               channel_residual(ch.compose(ch.discard(nd.outputs, [0]), nd), meas))
        reprepared = ch.compose_all(ch.tensor(enc, classical_identity(d)), copy_channel(d), meas)
        record("nondemolition_reprepare", channel_residual(reprepared, nd))
    record("complementarity_measure_encode", measure_encode_residual(p))
    record("complementarity_antipode", antipode_complementarity_residual(p))
    record("antipode_unitarity", antipode_unitarity_residual(p))
    return res
