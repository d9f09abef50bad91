import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tarnet.tensor_core import (
    TuckerFactors,
    fold,
    frobenius_norm,
    hosvd,
    inner_product,
    kronecker,
    mode_multiply,
    thin_svd,
    tucker_ranks,
    tucker_reconstruct,
    tucker_unfold1,
    unfold,
    vec,
)


def random_factors(rng, dims, ranks):
    core = rng.standard_normal(ranks)
    us = [rng.standard_normal((p, r)) for p, r in zip(dims, ranks)]
    return TuckerFactors(core, *us)


def loop_unfold(t, mode):
    """Index-by-index unfolding, lower surviving mode fastest."""
    p = t.shape
    axis = mode - 1
    others = [k for k in range(3) if k != axis]
    out = np.zeros((p[axis], p[others[0]] * p[others[1]]))
    for i in np.ndindex(*p):
        col = i[others[0]] + p[others[0]] * i[others[1]]
        out[i[axis], col] = t[i]
    return out


def loop_mode_multiply(t, m, mode):
    axis = mode - 1
    shape = list(t.shape)
    shape[axis] = m.shape[0]
    out = np.zeros(shape)
    for j in np.ndindex(*shape):
        total = 0.0
        for i_n in range(t.shape[axis]):
            src = list(j)
            src[axis] = i_n
            total += t[tuple(src)] * m[j[axis], i_n]
        out[j] = total
    return out


dims_strategy = st.tuples(*[st.integers(1, 5)] * 3)


class TestUnfold:
    def test_definition_instance_mode1(self):
        t = np.arange(1.0, 9.0).reshape((2, 2, 2), order="F")
        # t[i1,i2,i3] = 1 + i1 + 2 i2 + 4 i3; columns group (i2,i3) with i2 fastest
        expected = np.array([[1.0, 3.0, 5.0, 7.0], [2.0, 4.0, 6.0, 8.0]])
        np.testing.assert_array_equal(unfold(t, 1), expected)

    @pytest.mark.parametrize("mode", [1, 2, 3])
    def test_matches_index_loop(self, mode):
        t = np.random.default_rng(mode).standard_normal((3, 4, 2))
        np.testing.assert_array_equal(unfold(t, mode), loop_unfold(t, mode))

    def test_slices_concatenate_horizontally(self):
        rng = np.random.default_rng(0)
        n, p = 4, 3
        slices = [rng.standard_normal((n, n)) for _ in range(p)]
        w = np.stack(slices, axis=2)
        np.testing.assert_array_equal(unfold(w, 1), np.hstack(slices))

    def test_invalid_mode(self):
        with pytest.raises(ValueError):
            unfold(np.zeros((2, 2, 2)), 0)
        with pytest.raises(ValueError):
            unfold(np.zeros((2, 2, 2)), 4)

    @settings(max_examples=60, deadline=None)
    @given(dims=dims_strategy, mode=st.sampled_from([1, 2, 3]), seed=st.integers(0, 2**31))
    def test_roundtrip_bit_exact(self, dims, mode, seed):
        t = np.random.default_rng(seed).standard_normal(dims)
        np.testing.assert_array_equal(fold(unfold(t, mode), mode, dims), t)


class TestFold:
    def test_matrix_roundtrip(self):
        m = np.arange(8.0).reshape(2, 4)
        np.testing.assert_array_equal(unfold(fold(m, 1, (2, 2, 2)), 1), m)

    def test_zero_row(self):
        n, p = 3, 2
        t = fold(np.zeros((1, n * p)), 1, (1, n, p))
        assert t.shape == (1, n, p) and not t.any()

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            fold(np.zeros((2, 3)), 1, (2, 2, 2))


class TestModeMultiply:
    def test_identity(self):
        t = np.random.default_rng(1).standard_normal((3, 2, 4))
        np.testing.assert_array_equal(mode_multiply(t, np.eye(3), 1), t)

    def test_sum_of_paired_slices(self):
        t = np.arange(1.0, 9.0).reshape((2, 2, 2), order="F")
        out = mode_multiply(t, np.array([[1.0, 1.0]]), 1)
        assert out.shape == (1, 2, 2)
        np.testing.assert_array_equal(out, loop_mode_multiply(t, np.array([[1.0, 1.0]]), 1))
        np.testing.assert_array_equal(out[0], t[0] + t[1])

    @pytest.mark.parametrize("mode", [1, 2, 3])
    def test_matches_definition_and_unfolding(self, mode):
        rng = np.random.default_rng(10 + mode)
        t = rng.standard_normal((3, 4, 2))
        m = rng.standard_normal((5, t.shape[mode - 1]))
        out = mode_multiply(t, m, mode)
        np.testing.assert_allclose(out, loop_mode_multiply(t, m, mode), rtol=1e-12, atol=1e-12)
        dims = list(t.shape)
        dims[mode - 1] = 5
        via_unfold = fold(m @ unfold(t, mode), mode, dims)
        np.testing.assert_allclose(out, via_unfold, rtol=1e-12, atol=1e-12)

    def test_distinct_modes_commute(self):
        rng = np.random.default_rng(2)
        t = rng.standard_normal((3, 4, 2))
        a = rng.standard_normal((2, 3))
        b = rng.standard_normal((5, 4))
        ab = mode_multiply(mode_multiply(t, a, 1), b, 2)
        ba = mode_multiply(mode_multiply(t, b, 2), a, 1)
        np.testing.assert_allclose(ab, ba, rtol=1e-12, atol=1e-13)

    def test_inner_dimension_mismatch(self):
        with pytest.raises(ValueError):
            mode_multiply(np.zeros((2, 3, 4)), np.zeros((2, 5)), 2)


class TestKronecker:
    def test_identities(self):
        np.testing.assert_array_equal(kronecker(np.eye(2), np.eye(3)), np.eye(6))

    def test_scalar(self):
        b = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(kronecker(np.array([[2.0]]), b), 2 * b)

    def test_vec_identity(self):
        rng = np.random.default_rng(3)
        u2 = rng.standard_normal((3, 2))
        u3 = rng.standard_normal((3, 2))
        x = rng.standard_normal((3, 3))
        lhs = kronecker(u3, u2).T @ vec(x)
        rhs = vec(u2.T @ x @ u3)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-13)


class TestTucker:
    def test_identity_factors(self):
        t = np.random.default_rng(4).standard_normal((2, 3, 4))
        f = TuckerFactors(t, np.eye(2), np.eye(3), np.eye(4))
        np.testing.assert_allclose(tucker_reconstruct(f), t, rtol=0, atol=1e-15)

    def test_unfolding_identity(self):
        rng = np.random.default_rng(5)
        f = random_factors(rng, (4, 4, 3), (2, 2, 2))
        w = tucker_reconstruct(f)
        np.testing.assert_allclose(unfold(w, 1), tucker_unfold1(f), rtol=1e-12, atol=1e-13)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            TuckerFactors(np.zeros((2, 2, 2)), np.zeros((3, 2)), np.zeros((3, 3)), np.zeros((3, 2)))


class TestThinSvd:
    def test_diagonal(self):
        _, s, _ = thin_svd(np.diag([3.0, 1.0]))
        np.testing.assert_allclose(s, [3.0, 1.0])

    def test_rank_one(self):
        rng = np.random.default_rng(6)
        m = np.outer(rng.standard_normal(5), rng.standard_normal(4))
        _, s, _ = thin_svd(m)
        assert np.sum(s > 1e-10 * s[0]) == 1

    def test_orthonormal_and_reconstructs(self):
        m = np.random.default_rng(7).standard_normal((5, 3))
        u, s, v = thin_svd(m)
        np.testing.assert_allclose(u.T @ u, np.eye(3), atol=1e-10)
        np.testing.assert_allclose(v.T @ v, np.eye(3), atol=1e-10)
        assert np.all(np.diff(s) <= 0) and np.all(s >= 0)
        err = np.linalg.norm(u @ np.diag(s) @ v.T - m) / np.linalg.norm(m)
        assert err < 1e-10

    def test_sign_convention(self):
        u, _, _ = thin_svd(np.random.default_rng(8).standard_normal((6, 4)))
        idx = np.argmax(np.abs(u), axis=0)
        assert np.all(u[idx, np.arange(4)] > 0)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            thin_svd(np.array([[1.0, np.nan]]))


class TestHosvd:
    def test_recovers_low_rank(self):
        rng = np.random.default_rng(9)
        t = tucker_reconstruct(random_factors(rng, (9, 9, 3), (2, 2, 2)))
        f = hosvd(t, (2, 2, 2))
        rec = tucker_reconstruct(f)
        assert frobenius_norm(rec - t) / frobenius_norm(t) < 1e-10
        assert tucker_ranks(rec) == (2, 2, 2)

    def test_full_ranks_exact(self):
        t = np.random.default_rng(10).standard_normal((3, 4, 2))
        rec = tucker_reconstruct(hosvd(t, t.shape))
        assert frobenius_norm(rec - t) / frobenius_norm(t) < 1e-10

    def test_rank_exceeds_dimension(self):
        with pytest.raises(ValueError):
            hosvd(np.zeros((2, 3, 4)), (3, 1, 1))


class TestNorms:
    def test_ones(self):
        assert frobenius_norm(np.ones((2, 2, 2))) == pytest.approx(np.sqrt(8))

    def test_inner_is_squared_norm(self):
        t = np.random.default_rng(11).standard_normal((2, 3, 4))
        assert inner_product(t, t) == pytest.approx(frobenius_norm(t) ** 2, rel=1e-14)

    def test_disjoint_supports(self):
        a = np.zeros((2, 2, 2))
        b = np.zeros((2, 2, 2))
        a[:, :, 0] = 1.0
        b[:, :, 1] = 2.0
        assert inner_product(a, b) == 0.0

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            inner_product(np.zeros((2, 2, 2)), np.zeros((2, 2, 3)))
