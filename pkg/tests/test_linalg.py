import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bb84lab import linalg
from bb84lab.linalg import DimensionError
from bb84lab.randomness import ginibre, haar_unitary, random_hermitian


def loop_partial_trace(m, shape, traced):
    """Index-loop oracle: sum over matching traced indices."""
    kept = [i for i in range(len(shape)) if i not in traced]
    kshape = [shape[i] for i in kept]
    tshape = [shape[i] for i in traced]
    d = int(np.prod(kshape)) if kept else 1
    out = np.zeros((d, d), dtype=complex)
    t = m.reshape(tuple(shape) * 2)
    for r in itertools.product(*[range(s) for s in kshape]):
        for c in itertools.product(*[range(s) for s in kshape]):
            acc = 0
            for k in itertools.product(*[range(s) for s in tshape]):
                row, col = [0] * len(shape), [0] * len(shape)
                for pos, i in enumerate(kept):
                    row[i], col[i] = r[pos], c[pos]
                for pos, i in enumerate(traced):
                    row[i] = col[i] = k[pos]
                acc += t[tuple(row) + tuple(col)]
            ri = int(np.ravel_multi_index(r, kshape)) if kept else 0
            ci = int(np.ravel_multi_index(c, kshape)) if kept else 0
            out[ri, ci] = acc
    return out


shapes = st.lists(st.integers(1, 3), min_size=1, max_size=3)


class TestTensor:
    def test_kron_order(self):
        a = np.array([[1, 2], [3, 4]])
        b = np.array([[0, 1], [1, 0]])
        t = linalg.tensor(a, b)
        # entry (i1 i2, j1 j2) = a[i1, j1] b[i2, j2]
        for i1, i2, j1, j2 in itertools.product(range(2), repeat=4):
            assert t[2 * i1 + i2, 2 * j1 + j2] == a[i1, j1] * b[i2, j2]

    def test_tensor_all_empty_is_scalar_one(self):
        np.testing.assert_array_equal(linalg.tensor_all([]), np.ones((1, 1)))

    def test_compose_mismatch(self):
        with pytest.raises(DimensionError):
            linalg.compose(np.eye(2), np.eye(3))

    def test_as_matrix_rejects_nan(self):
        with pytest.raises(ValueError):
            linalg.as_matrix([[np.nan]])

    def test_as_matrix_rejects_3d(self):
        with pytest.raises(DimensionError):
            linalg.as_matrix(np.zeros((2, 2, 2)))


class TestPartialTrace:
    @given(shapes, st.data())
    def test_matches_loop_oracle(self, shape, data):
        k = len(shape)
        traced = data.draw(st.lists(st.integers(0, k - 1), unique=True, max_size=k))
        d = int(np.prod(shape))
        m = ginibre(d, d, np.random.default_rng(d + 7 * len(traced)))
        got = linalg.partial_trace(m, shape, traced)
        np.testing.assert_allclose(got, loop_partial_trace(m, shape, sorted(traced)), atol=1e-12)

    def test_product_state(self, rng):
        a, b = ginibre(2, 2, rng), ginibre(3, 3, rng)
        np.testing.assert_allclose(linalg.partial_trace(np.kron(a, b), (2, 3), [0]),
                                   np.trace(a) * b, atol=1e-12)
        np.testing.assert_allclose(linalg.partial_trace(np.kron(a, b), (2, 3), [1]),
                                   np.trace(b) * a, atol=1e-12)

    def test_bad_shape(self):
        with pytest.raises(DimensionError):
            linalg.partial_trace(np.eye(6), (2, 2), [0])

    def test_bad_index(self):
        with pytest.raises(IndexError):
            linalg.partial_trace(np.eye(4), (2, 2), [2])


class TestPermutations:
    def test_permutation_matrix_on_products(self, rng):
        shape = (2, 3, 2)
        vs = [ginibre(s, 1, rng) for s in shape]
        perm = (2, 0, 1)
        p = linalg.permutation_matrix(shape, perm)
        np.testing.assert_allclose(p @ linalg.tensor_all(vs),
                                   linalg.tensor_all([vs[i] for i in perm]), atol=1e-12)
        assert linalg.is_unitary(p)

    def test_permute_factors_matches_conjugation(self, rng):
        shape, perm = (2, 3, 2), (1, 2, 0)
        m = ginibre(12, 12, rng)
        p = linalg.permutation_matrix(shape, perm)
        np.testing.assert_allclose(linalg.permute_factors(m, shape, perm), p @ m @ p.conj().T,
                                   atol=1e-12)

    def test_embed_second_factor(self, rng):
        op = ginibre(3, 3, rng)
        np.testing.assert_allclose(linalg.embed(op, (2, 3, 2), [1]),
                                   linalg.tensor_all([np.eye(2), op, np.eye(2)]), atol=1e-12)

    def test_embed_reversed_targets(self, rng):
        a, b = ginibre(2, 2, rng), ginibre(3, 3, rng)
        # op acts on (factor 1, factor 0) in that order
        np.testing.assert_allclose(linalg.embed(np.kron(b, a), (2, 3), [1, 0]), np.kron(a, b),
                                   atol=1e-12)

    def test_embed_shape_error(self):
        with pytest.raises(DimensionError):
            linalg.embed(np.eye(2), (2, 3), [1])


class TestNormsAndDecompositions:
    def test_operator_and_trace_norm(self):
        m = np.diag([3.0, -1.0, 0.5])
        assert linalg.operator_norm(m) == pytest.approx(3.0)
        assert linalg.trace_norm(m) == pytest.approx(4.5)

    def test_hermitian_eig_descending(self, rng):
        h = random_hermitian(5, rng)
        w, v = linalg.hermitian_eig(h)
        assert np.all(np.diff(w) <= 0)
        np.testing.assert_allclose(v @ np.diag(w) @ v.conj().T, h, atol=1e-12)

    def test_hermitian_eig_rejects(self):
        with pytest.raises(ValueError):
            linalg.hermitian_eig(np.array([[0, 1], [0, 0]]))

    def test_polar_maximises_overlap(self, rng):
        m = ginibre(4, 4, rng)
        w = linalg.polar_unitary(m)
        best = np.trace(w.conj().T @ m).real
        np.testing.assert_allclose(best, linalg.trace_norm(m), rtol=1e-12)
        for _ in range(20):
            u = haar_unitary(4, rng)
            assert np.trace(u.conj().T @ m).real <= best + 1e-12

    def test_polar_of_unitary_is_itself(self, rng):
        u = haar_unitary(3, rng)
        np.testing.assert_allclose(linalg.polar_unitary(u), u, atol=1e-12)
