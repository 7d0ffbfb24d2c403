import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kroncov.exceptions import ContractError, DegenerateInputError
from kroncov.linalg import kron, svd
from kroncov.model import (
    BoundInputs,
    DeltaConditionError,
    KronSumCovariance,
    MatrixModel,
    assemble_sigma,
    baseline_bound_rate,
    delta_condition_holds,
    delta_condition_lhs,
    effective_rank,
    factorize_for_sampling,
    lemma1_bound,
    psd_sqrt,
    random_kron_sum,
    random_psd_factor,
    sample_matrix_model,
    theorem1_error_bound,
    theorem1_lambda,
)
from kroncov.rearrangement import rearrange

from .conftest import random_psd


def unit_inputs(**kw):
    base = dict(omega=1.0, n=13, delta=4 / math.e, max_r_phi=1.0, max_r_psi=1.0, norm_sum=1.0)
    base.update(kw)
    return BoundInputs(**base)


def entrywise_se(x, mean):
    """Standard error of each entry of mean(x_i x_i^T)."""
    prods = np.einsum("ni,nj->nij", x, x)
    return prods.std(axis=0, ddof=1) / np.sqrt(len(x))


class TestKronSumCovariance:
    def test_identity(self):
        cov = KronSumCovariance((2, 3), ((np.eye(2), np.eye(3)),))
        np.testing.assert_array_equal(assemble_sigma(cov), np.eye(6))
        assert cov.k == 1

    def test_block_diagonal(self):
        cov = KronSumCovariance(
            (2, 2), ((np.diag([2.0, 0.0]), np.eye(2)), (np.diag([0.0, 1.0]), np.eye(2)))
        )
        np.testing.assert_array_equal(assemble_sigma(cov), np.diag([2.0, 2.0, 1.0, 1.0]))

    def test_rejects_non_psd_with_index(self):
        with pytest.raises(ContractError, match=r"psi\[1\].*-1"):
            KronSumCovariance(
                (2, 2), ((np.eye(2), np.eye(2)), (np.eye(2), np.diag([1.0, -1.0])))
            )

    def test_rejects_asymmetric_and_bad_shape(self):
        with pytest.raises(ContractError):
            KronSumCovariance((2, 2), ((np.array([[1.0, 1.0], [0.0, 1.0]]), np.eye(2)),))
        with pytest.raises(ContractError):
            KronSumCovariance((2, 2), ((np.eye(3), np.eye(2)),))
        with pytest.raises(ContractError):
            KronSumCovariance((2, 2), ())

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_rank_of_rearranged(self, k):
        cov = random_kron_sum((5, 4), [2.5] * k, [2.0] * k, seed=k)
        sigma = assemble_sigma(cov)
        np.testing.assert_array_equal(sigma, sigma.T)
        assert np.linalg.eigvalsh(sigma)[0] >= -1e-10 * np.trace(sigma)
        s = svd(rearrange(sigma, (5, 4))).singular_values
        assert s[k] <= 1e-9 * s[0]


class TestRandomPsdFactor:
    def test_full_rank_is_identity(self):
        m = random_psd_factor(5, 5, seed=0)
        np.testing.assert_allclose(m, np.eye(5) * m[0, 0], atol=1e-12)
        assert effective_rank(m) == pytest.approx(5.0, abs=1e-12)

    @pytest.mark.parametrize("target", [1.0, 1.01, 1.5, 3.0, 7.9])
    @pytest.mark.parametrize("spectrum", ["geometric", "polynomial"])
    def test_hits_target(self, target, spectrum):
        m = random_psd_factor(8, target, seed=1, spectrum=spectrum)
        assert abs(effective_rank(m) - target) <= 0.1 * target
        KronSumCovariance((8, 1), ((m, np.eye(1)),))

    def test_seeded(self):
        np.testing.assert_array_equal(random_psd_factor(4, 2, seed=3), random_psd_factor(4, 2, seed=3))
        assert not np.array_equal(random_psd_factor(4, 2, seed=3), random_psd_factor(4, 2, seed=4))

    @pytest.mark.parametrize("target", [0.5, 6.0])
    def test_infeasible(self, target):
        with pytest.raises(ContractError):
            random_psd_factor(5, target, seed=0)


class TestSampler:
    def test_standard_gaussian(self):
        model = MatrixModel((2, 2), ((np.eye(2), np.eye(2)),))
        x = sample_matrix_model(model, 100_000, seed=1).vectors
        emp = x.T @ x / len(x)
        assert np.all(np.abs(emp - np.eye(4)) <= 5 * entrywise_se(x, emp))

    def test_two_terms(self):
        cov = random_kron_sum((2, 2), [1.5, 1.2], [1.8, 1.1], seed=5)
        sigma = assemble_sigma(cov)
        x = sample_matrix_model(factorize_for_sampling(cov), 100_000, seed=6).vectors
        emp = x.T @ x / len(x)
        assert np.all(np.abs(emp - sigma) <= 5 * entrywise_se(x, emp))

    def test_vectorization_layout(self):
        # with a single nonzero noise entry the layout is visible directly
        a, b = np.diag([1.0, 10.0]), np.diag([1.0, 2.0, 3.0])
        model = MatrixModel((2, 3), ((a, b),))
        s = sample_matrix_model(model, 1, seed=0)
        y = np.random.default_rng(np.random.SeedSequence(0, spawn_key=(0,))).standard_normal((1, 3, 2))[0]
        np.testing.assert_allclose(s.vectors[0], (b @ y @ a.T).T.ravel())

    def test_deterministic(self):
        model = factorize_for_sampling(random_kron_sum((3, 2), [2, 1.5], [1.5, 1.2], seed=0))
        a = sample_matrix_model(model, 50, seed=42)
        b = sample_matrix_model(model, 50, seed=42)
        np.testing.assert_array_equal(a.vectors, b.vectors)
        assert a.seed == 42
        assert not np.array_equal(a.vectors, sample_matrix_model(model, 50, seed=43).vectors)

    def test_model_covariance(self, rng):
        a, b = rng.standard_normal((3, 3)), rng.standard_normal((2, 2))
        model = MatrixModel((3, 2), ((a, b),))
        np.testing.assert_allclose(model.covariance(), kron(a @ a.T, b @ b.T))

    def test_bad_model(self):
        with pytest.raises(ContractError):
            MatrixModel((2, 2), ((np.eye(2), np.eye(2)),), noise="cauchy")
        with pytest.raises(ContractError):
            MatrixModel((2, 2), ((np.eye(3), np.eye(2)),))


class TestSquareRoots:
    def test_examples(self):
        np.testing.assert_allclose(psd_sqrt(np.eye(3)), np.eye(3), atol=1e-15)
        np.testing.assert_allclose(psd_sqrt(np.diag([4.0, 1.0])), np.diag([2.0, 1.0]), atol=1e-15)

    def test_random(self, rng):
        m = random_psd(rng, 6)
        a = psd_sqrt(m)
        np.testing.assert_allclose(a @ a.T, m, atol=1e-10 * np.abs(m).max())

    def test_clips_tiny_negative(self):
        m = np.diag([1.0, -1e-14])
        np.testing.assert_array_equal(psd_sqrt(m), np.diag([1.0, 0.0]))

    def test_roundtrip(self):
        cov = random_kron_sum((3, 4), [2, 1.2], [3, 1.5], seed=8)
        model = factorize_for_sampling(cov)
        np.testing.assert_allclose(model.covariance(), assemble_sigma(cov), atol=1e-9)


class TestEffectiveRank:
    def test_examples(self, rng):
        assert effective_rank(np.eye(5)) == 5.0
        u = rng.standard_normal(4)
        assert effective_rank(np.outer(u, u)) == pytest.approx(1.0, abs=1e-12)
        assert effective_rank(np.diag([2.0, 1.0, 1.0])) == 2.0

    def test_zero(self):
        with pytest.raises(DegenerateInputError):
            effective_rank(np.zeros((3, 3)))

    @given(st.integers(1, 8), st.integers(0, 2**32 - 1))
    @settings(max_examples=30)
    def test_range(self, dim, seed):
        m = random_psd(np.random.default_rng(seed), dim)
        assert 1 - 1e-12 <= effective_rank(m) <= dim + 1e-12


class TestBounds:
    def test_lemma1_example(self):
        # independent evaluation of the closed form
        n, delta = 13, 4 / math.e
        expected = math.sqrt(13 / (2 * n) * 2 + 13 * math.log(4 / delta) / n)
        assert expected == pytest.approx(math.sqrt(2), rel=1e-15)
        assert lemma1_bound(unit_inputs()) == pytest.approx(math.sqrt(2), rel=1e-14)

    def test_theorem1_examples(self):
        lam = theorem1_lambda(unit_inputs())
        assert lam == pytest.approx(2 * math.sqrt(2), rel=1e-14)
        assert theorem1_error_bound(lam, 1) == pytest.approx(12.0, rel=1e-14)

    @given(
        st.floats(0.1, 10), st.integers(10, 10_000), st.floats(0.01, 0.99),
        st.floats(1, 5), st.floats(1, 5), st.floats(0.1, 10),
    )
    def test_theorem1_is_twice_lemma1(self, omega, n, delta, rp, rq, ns):
        inputs = BoundInputs(omega, n, delta, rp, rq, ns)
        if delta_condition_holds(inputs):
            assert theorem1_lambda(inputs) == 2 * lemma1_bound(inputs)

    def test_error_bound_examples(self):
        assert theorem1_error_bound(0.0, 1) == 0.0
        assert theorem1_error_bound(2.0, 3) == 18.0
        for lam in (0.1, 1.0, 7.0):
            assert (3 + 2 * math.sqrt(2)) / 4 * lam**2 * 2 < theorem1_error_bound(lam, 2)
        with pytest.raises(ContractError):
            theorem1_error_bound(-1.0, 1)
        with pytest.raises(ContractError):
            theorem1_error_bound(1.0, 0)

    def test_scaling(self):
        base = lemma1_bound(unit_inputs(norm_sum=1.5, n=1000, delta=0.1))
        assert lemma1_bound(unit_inputs(norm_sum=3.0, n=1000, delta=0.1)) == pytest.approx(
            2 * base, rel=1e-12
        )
        assert lemma1_bound(unit_inputs(omega=3.0, norm_sum=1.5, n=1000, delta=0.1)) == pytest.approx(
            3 * base, rel=1e-12
        )
        # delta near 4 makes the log term vanish, leaving pure 1/sqrt(n) scaling
        d = 4 * (1 - 1e-15)
        small, large = (lemma1_bound(unit_inputs(n=n, delta=d)) for n in (100, 400))
        assert large == pytest.approx(small / 2, rel=1e-12)

    def test_delta_condition_examples(self):
        inputs = unit_inputs(n=100, delta=0.5)
        assert delta_condition_lhs(inputs) == pytest.approx(0.01 + math.log(8) / 100)
        assert delta_condition_holds(inputs)
        for delta in (0.01, 1.0, 3.9):
            assert not delta_condition_holds(unit_inputs(n=1, max_r_phi=2.0, max_r_psi=2.0, delta=delta))

    def test_delta_condition_boundary(self):
        # with n=2 and unit ranks the left side is 1/2 + log(4/delta)/2, equal to 1 at 4/e;
        # walk a few ulps to find a delta where the float evaluation is exactly 1
        delta = 4 / math.e
        for _ in range(8):
            inputs = unit_inputs(n=2, delta=delta)
            if delta_condition_lhs(inputs) == 1.0:
                break
            delta = math.nextafter(delta, 0 if delta_condition_lhs(inputs) < 1 else 4)
        assert delta_condition_lhs(inputs) == 1.0
        assert delta_condition_holds(inputs)
        lemma1_bound(inputs)
        assert not delta_condition_holds(unit_inputs(n=2, delta=delta * (1 - 1e-9)))

    def test_lemma1_rejects_violated_condition(self):
        with pytest.raises(DeltaConditionError) as info:
            lemma1_bound(unit_inputs(n=1, max_r_phi=2.0, max_r_psi=2.0, delta=0.1))
        assert info.value.lhs == pytest.approx(4 + math.log(40))

    def test_baseline(self):
        assert baseline_bound_rate(1.0, 100, 2 / math.e) == pytest.approx(0.1, rel=1e-14)
        assert baseline_bound_rate(1.0, 10**6, 0.05) < baseline_bound_rate(1.0, 100, 0.05)
        # branches meet where log(2/delta) = n
        n = 3
        delta = 2 * math.exp(-n)
        assert baseline_bound_rate(2.0, n, delta) == pytest.approx(2.0, rel=1e-12)
        with pytest.raises(ContractError):
            baseline_bound_rate(1.0, 10, 2.5)

    def test_inputs_from_covariance(self):
        cov = random_kron_sum((4, 3), [2.0, 1.5], [2.5, 1.2], seed=12)
        inputs = BoundInputs.from_covariance(cov, omega=0.7, n=200, delta=0.05)
        r_phi = [np.trace(phi) / np.linalg.eigvalsh(phi)[-1] for phi, _ in cov.factors]
        r_psi = [np.trace(psi) / np.linalg.eigvalsh(psi)[-1] for _, psi in cov.factors]
        norm_sum = sum(np.linalg.norm(phi, 2) * np.linalg.norm(psi, 2) for phi, psi in cov.factors)
        assert inputs.max_r_phi == pytest.approx(max(r_phi), rel=1e-10)
        assert inputs.max_r_psi == pytest.approx(max(r_psi), rel=1e-10)
        assert inputs.norm_sum == pytest.approx(norm_sum, rel=1e-10)
        assert inputs.trace_sigma == pytest.approx(np.trace(assemble_sigma(cov)), rel=1e-10)
        assert cov.bound_inputs(0.7, 200, 0.05) == inputs

    @pytest.mark.parametrize("kw", [{"omega": 0.0}, {"n": 0}, {"delta": 0.0}, {"delta": 4.0}])
    def test_invalid_inputs(self, kw):
        with pytest.raises(ContractError):
            unit_inputs(**kw)
