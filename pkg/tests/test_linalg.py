import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kroncov.exceptions import ContractError, ShapeError, SizeError
from kroncov.linalg import (
    frobenius_norm,
    hard_threshold_svd,
    kron,
    nuclear_norm,
    operator_norm,
    soft_threshold_svd,
    svd,
    symmetric_eigendecomposition,
    trace,
    unvec,
    vec,
)

from .conftest import random_psd


def naive_kron(a, b):
    out = np.zeros((a.shape[0] * b.shape[0], a.shape[1] * b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            for k in range(b.shape[0]):
                for l in range(b.shape[1]):
                    out[i * b.shape[0] + k, j * b.shape[1] + l] = a[i, j] * b[k, l]
    return out


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def matrices(max_side=6):
    return st.tuples(st.integers(1, max_side), st.integers(1, max_side)).flatmap(
        lambda s: arrays(np.float64, s, elements=finite)
    )


class TestKron:
    def test_identity(self):
        np.testing.assert_array_equal(kron(np.eye(2), np.eye(2)), np.eye(4))

    def test_blocks(self):
        out = kron([[1, 2], [3, 4]], [[0, 1], [1, 0]])
        np.testing.assert_array_equal(out[:2, :2], [[0, 1], [1, 0]])
        np.testing.assert_array_equal(out[:2, 2:], [[0, 2], [2, 0]])
        assert out.shape == (4, 4)

    @given(matrices(), matrices())
    def test_matches_loop_definition(self, a, b):
        np.testing.assert_array_equal(kron(a, b), naive_kron(a, b))

    def test_mixed_product(self, rng):
        A, B, C, D = (rng.standard_normal((3, 3)) for _ in range(4))
        np.testing.assert_allclose(kron(A, B) @ kron(C, D), kron(A @ C, B @ D), atol=1e-12)

    def test_size_error(self):
        # 50000 x 50000 entries exceeds the limit; nothing is allocated
        with pytest.raises(SizeError):
            kron(np.zeros((50_000, 1)), np.zeros((1, 50_000)))

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            kron([[np.nan]], [[1.0]])


class TestVec:
    def test_column_stacking(self):
        np.testing.assert_array_equal(vec([[1, 2], [3, 4]]), [1, 3, 2, 4])
        np.testing.assert_array_equal(vec(np.eye(2)), [1, 0, 0, 1])

    def test_index_formula(self, rng):
        m = rng.standard_normal((3, 5))
        v = vec(m)
        for i in range(3):
            for j in range(5):
                assert v[j * 3 + i] == m[i, j]

    def test_unvec(self):
        np.testing.assert_array_equal(unvec([1, 3, 2, 4], 2, 2), [[1, 2], [3, 4]])
        np.testing.assert_array_equal(unvec([5.0], 1, 1), [[5.0]])

    @given(matrices())
    def test_roundtrip_exact(self, m):
        np.testing.assert_array_equal(unvec(vec(m), *m.shape), m)
        np.testing.assert_array_equal(vec(unvec(vec(m), *m.shape)), vec(m))

    def test_unvec_length_mismatch(self):
        with pytest.raises(ShapeError):
            unvec([1.0, 2.0, 3.0], 2, 2)

    def test_kron_vec_identity(self, rng):
        A, B = rng.standard_normal((4, 3)), rng.standard_normal((5, 2))
        U = rng.standard_normal((2, 3))
        np.testing.assert_allclose(kron(A, B) @ vec(U), vec(B @ U @ A.T), atol=1e-12)


class TestNorms:
    def test_identity(self):
        eye = np.eye(3)
        assert frobenius_norm(eye) == pytest.approx(np.sqrt(3), abs=1e-15)
        assert operator_norm(eye) == pytest.approx(1.0, abs=1e-15)
        assert nuclear_norm(eye) == pytest.approx(3.0, abs=1e-14)
        assert trace(eye) == 3.0

    def test_zero(self):
        z = np.zeros((3, 4))
        assert frobenius_norm(z) == operator_norm(z) == nuclear_norm(z) == 0.0
        assert trace(np.zeros((3, 3))) == 0.0

    def test_trace_needs_square(self):
        with pytest.raises(ShapeError):
            trace(np.zeros((2, 3)))

    def test_frobenius_of_kron(self, rng):
        A, B = rng.standard_normal((3, 4)), rng.standard_normal((2, 5))
        assert frobenius_norm(kron(A, B)) == pytest.approx(
            frobenius_norm(A) * frobenius_norm(B), rel=1e-12
        )

    @given(matrices())
    def test_norm_ordering(self, m):
        op, fro, nuc = operator_norm(m), frobenius_norm(m), nuclear_norm(m)
        tol = 1e-9 * max(nuc, 1.0)
        assert 0 <= op <= fro + tol
        assert fro <= nuc + tol


class TestSvd:
    def test_diagonal(self):
        u, s, v = svd(np.diag([3.0, 1.0]))
        np.testing.assert_allclose(s, [3, 1])
        np.testing.assert_allclose(np.abs(u), np.eye(2), atol=1e-15)
        np.testing.assert_allclose(np.abs(v), np.eye(2), atol=1e-15)

    def test_rank_one(self, rng):
        a, b = rng.standard_normal(4), rng.standard_normal(4)
        s = svd(np.outer(a / np.linalg.norm(a), b / np.linalg.norm(b))).singular_values
        assert s[0] == pytest.approx(1.0, abs=1e-14)
        assert s[1] == pytest.approx(0.0, abs=1e-14)

    def test_reconstruction_random(self, rng):
        for _ in range(10):
            m = rng.standard_normal((20, 30))
            u, s, v = svd(m)
            assert frobenius_norm((u * s) @ v.T - m) / frobenius_norm(m) <= 1e-10
            np.testing.assert_allclose(u.T @ u, np.eye(20), atol=1e-10)
            np.testing.assert_allclose(v.T @ v, np.eye(20), atol=1e-10)
            assert np.all(np.diff(s) <= 0) and s[-1] >= 0

    def test_sign_convention(self, rng):
        m = rng.standard_normal((6, 4))
        u, _, _ = svd(m)
        first = u[np.argmax(np.abs(u) > 1e-12, axis=0), np.arange(u.shape[1])]
        assert np.all(first > 0)
        # flipping the input's sign flips v, not u
        u2, _, v2 = svd(-m)
        np.testing.assert_allclose(u2, u, atol=1e-12)

    @given(matrices())
    @settings(max_examples=50)
    def test_invariants(self, m):
        u, s, v = svd(m)
        k = min(m.shape)
        assert u.shape == (m.shape[0], k) and v.shape == (m.shape[1], k)
        scale = max(frobenius_norm(m), 1.0)
        assert frobenius_norm((u * s) @ v.T - m) <= 1e-10 * scale
        np.testing.assert_allclose(u.T @ u, np.eye(k), atol=1e-10)


class TestSymmetricEig:
    def test_diagonal(self):
        w, _ = symmetric_eigendecomposition(np.diag([1.0, 5.0, 2.0]))
        np.testing.assert_allclose(w, [5, 2, 1])

    def test_identity(self):
        w, v = symmetric_eigendecomposition(np.eye(4))
        np.testing.assert_allclose(w, np.ones(4))

    def test_psd_and_reconstruction(self, rng):
        m = random_psd(rng, 7)
        w, v = symmetric_eigendecomposition(m)
        assert np.all(w >= -1e-10)
        np.testing.assert_allclose((v * w) @ v.T, m, atol=1e-10 * np.abs(m).max())
        np.testing.assert_allclose(v.T @ v, np.eye(7), atol=1e-10)

    def test_rejects_asymmetric(self):
        with pytest.raises(ContractError):
            symmetric_eigendecomposition([[1.0, 2.0], [0.0, 1.0]])


def prox_objective(r, m, lam):
    return frobenius_norm(r - m) ** 2 + lam * nuclear_norm(r)


class TestSoftThreshold:
    def test_zero_penalty_is_identity(self, rng):
        m = rng.standard_normal((5, 7))
        np.testing.assert_array_equal(soft_threshold_svd(m, 0), m)

    def test_diagonal(self):
        np.testing.assert_allclose(
            soft_threshold_svd(np.diag([3.0, 1.0]), 4), np.diag([1.0, 0.0]), atol=1e-15
        )

    def test_negative_penalty(self):
        with pytest.raises(ContractError):
            soft_threshold_svd(np.eye(2), -1.0)

    def test_spectrum_shrinks(self, rng):
        for lam in (0.3, 1.0, 3.0):
            m = rng.standard_normal((6, 8))
            expected = np.maximum(svd(m).singular_values - lam / 2, 0)
            got = svd(soft_threshold_svd(m, lam)).singular_values
            np.testing.assert_allclose(got, expected, atol=1e-10)

    @pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
    def test_perturbation_optimality(self, rng, lam):
        m = rng.standard_normal((6, 8))
        out = soft_threshold_svd(m, lam)
        best = prox_objective(out, m, lam)
        for i in range(200):
            eps = 1e-3 if i % 2 == 0 else 1e-2
            other = out + eps * rng.standard_normal(out.shape)
            assert best <= prox_objective(other, m, lam) + 1e-12


class TestHardThreshold:
    def test_full_rank_identity(self, rng):
        m = rng.standard_normal((4, 6))
        np.testing.assert_allclose(hard_threshold_svd(m, 4), m, atol=1e-10)

    def test_zero(self, rng):
        m = rng.standard_normal((4, 6))
        np.testing.assert_array_equal(hard_threshold_svd(m, 0), np.zeros((4, 6)))

    def test_recovers_rank_two(self, rng):
        m = sum(np.outer(rng.standard_normal(7), rng.standard_normal(5)) for _ in range(2))
        np.testing.assert_allclose(hard_threshold_svd(m, 2), m, atol=1e-9)

    def test_eckart_young(self, rng):
        m = rng.standard_normal((6, 6))
        s = svd(m).singular_values
        for k in range(7):
            err = frobenius_norm(hard_threshold_svd(m, k) - m)
            assert err == pytest.approx(np.sqrt(np.sum(s[k:] ** 2)), abs=1e-10)

    @pytest.mark.parametrize("k", [-1, 5, 1.5])
    def test_out_of_range(self, k):
        with pytest.raises(ContractError):
            hard_threshold_svd(np.eye(4), k)
