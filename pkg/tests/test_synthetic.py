import math

import numpy as np
import pytest

from structdiag.errors import (
    GenerationFailureError,
    InvalidArgumentError,
    UnsupportedConfigurationError,
)
from structdiag.numstats import normal_cdf, perturbation_decomposition
from structdiag.synthetic import (
    GaussianMixtureSpec,
    ar_covariance,
    importance_example_spec,
    bayes_error_suite,
    monte_carlo_bayes_error,
    random_mixture_spec,
    reference_spec,
    sample_mixture,
    separation_spec,
    small_sample_example_spec,
    marginal_benefit_instance,
    marginal_benefit_suite,
)


class TestSpec:
    def test_non_spd_rejected(self):
        with pytest.raises(InvalidArgumentError):
            GaussianMixtureSpec([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])

    def test_theta_bounds(self):
        with pytest.raises(InvalidArgumentError):
            GaussianMixtureSpec([0.0], [[1.0]], theta=1.0)

    def test_separation_uses_full_mean_difference(self):
        # centres at +/-(0.5, 0): difference (1, 0), d = 1
        spec = GaussianMixtureSpec([0.5, 0.0], np.eye(2))
        assert spec.separation() == pytest.approx(1.0)
        assert spec.bayes_error() == pytest.approx(normal_cdf(-0.5))

    def test_dict_round_trip(self):
        spec = separation_spec(3.0, p=3, rho=0.2)
        back = GaussianMixtureSpec.from_dict(spec.to_dict())
        np.testing.assert_array_equal(back.mu, spec.mu)
        np.testing.assert_array_equal(back.sigma, spec.sigma)

    def test_dict_with_rho(self):
        spec = GaussianMixtureSpec.from_dict({"mu": [1.0, 0.0, 0.0], "rho": 0.5})
        np.testing.assert_allclose(spec.sigma[0], [1.0, 0.5, 0.25])

    @pytest.mark.parametrize("d,p,rho", [(4.0, 2, 0.0), (4.0, 5, 0.3), (1.0, 10, 0.1), (0.0, 3, 0.2)])
    def test_separation_spec_exact(self, d, p, rho):
        assert separation_spec(d, p, rho).separation() == pytest.approx(d, abs=1e-12)


class TestSampling:
    def test_moments(self):
        spec = GaussianMixtureSpec([1.0, 0.0], np.eye(2))
        n = 100_000
        d = sample_mixture(spec, n, seed=1)
        frac = d.labels.mean()
        assert abs(frac - 0.5) <= 3 * math.sqrt(0.25 / n)
        X1, X0 = d.features[d.labels == 1], d.features[d.labels == 0]
        np.testing.assert_allclose(X1.mean(axis=0), [1.0, 0.0], atol=0.02)
        np.testing.assert_allclose(X0.mean(axis=0), [-1.0, 0.0], atol=0.02)
        np.testing.assert_allclose(np.cov(X1.T), np.eye(2), atol=0.02)

    def test_reproducible(self):
        spec = reference_spec()
        a, b = sample_mixture(spec, 50, 3), sample_mixture(spec, 50, 3)
        assert a.equals(b)
        assert not a.equals(sample_mixture(spec, 50, 4))

    def test_class_names(self):
        d = sample_mixture(reference_spec(), 10, 0)
        assert d.class_names == ("minus", "plus")
        assert d.feature_names == ("x1", "x2", "x3", "x4", "x5")


class TestMonteCarlo:
    def test_zero_mean_coin_flip(self):
        r = monte_carlo_bayes_error(GaussianMixtureSpec([0.0, 0.0], np.eye(2)), 20_000, 0)
        # the rule degenerates to "always class 0"
        assert abs(r["rate"] - 0.5) < 4 * math.sqrt(0.25 / 20_000)

    def test_unit_separation(self):
        spec = GaussianMixtureSpec([0.5, 0.0, 0.0], np.eye(3))
        r = monte_carlo_bayes_error(spec, 200_000, 2)
        assert abs(r["rate"] - normal_cdf(-0.5)) <= 3 * r["sd"]

    def test_huge_separation(self):
        r = monte_carlo_bayes_error(separation_spec(100.0, p=2), 200_000, 0)
        assert r["rate"] <= 1e-4

    def test_scope(self):
        with pytest.raises(UnsupportedConfigurationError):
            monte_carlo_bayes_error(GaussianMixtureSpec([1.0], [[1.0]], theta=0.3), 1000, 0)
        with pytest.raises(InvalidArgumentError):
            monte_carlo_bayes_error(reference_spec(), 999, 0)

    def test_chunking_reproducible(self):
        spec = reference_spec()
        assert monte_carlo_bayes_error(spec, 120_000, 5) == monte_carlo_bayes_error(spec, 120_000, 5)


class TestCannedSpecs:
    def test_ar_covariance(self):
        np.testing.assert_array_equal(ar_covariance(3, 0.0), np.eye(3))
        np.testing.assert_allclose(ar_covariance(2, 0.1), [[1.0, 0.1], [0.1, 1.0]])
        np.linalg.cholesky(ar_covariance(30, 0.1))
        with pytest.raises(InvalidArgumentError):
            ar_covariance(3, 1.0)

    def test_importance_example(self):
        spec = importance_example_spec()
        assert spec.p == 30
        assert spec.mu[0] == 0.2 and spec.mu[19] == 0.01 and spec.mu[20] == 0.0
        assert np.all(spec.mu[20:] == 0)
        np.testing.assert_allclose(np.diff(spec.mu[:20]), -0.01, atol=1e-12)
        assert spec.sigma[0, 1] == pytest.approx(0.1)

    def test_reference_is_d4(self):
        assert reference_spec().separation() == pytest.approx(4.0)

    def test_small_sample_blocks(self):
        spec = small_sample_example_spec()
        assert spec.p == 54
        strong = GaussianMixtureSpec(spec.mu[:6], np.eye(6))
        assert strong.separation() == pytest.approx(3.0)
        assert spec.separation() == pytest.approx(4.5)

    def test_random_spec_in_range(self):
        for s in range(10):
            spec = random_mixture_spec(4, s)
            assert 0.5 <= spec.separation() <= 9.0


class TestMarginalBenefitInstances:
    def test_hypotheses_hold(self):
        for seed in range(25):
            inst = marginal_benefit_instance(3, 2, 0.05, seed=seed)
            V, k, u = inst.sigma.values, inst.split_at, inst.u
            assert np.linalg.norm(u) <= 1 + 1e-12
            assert np.linalg.norm(V[:k, k:], "fro") == pytest.approx(0.05)
            for block in (V[:k, :k], V[k:, k:]):
                eig = np.linalg.eigvalsh(block)
                assert eig.min() >= 0.5 - 1e-12 and eig.max() <= 2.0 + 1e-12
            assert u[k:] @ np.linalg.solve(V[k:, k:], u[k:]) >= 0.1
            np.linalg.cholesky(V)

    def test_zero_cross_norm_block_diagonal(self):
        inst = marginal_benefit_instance(2, 3, 0.0, seed=1)
        dec = perturbation_decomposition(inst.u, inst.sigma, inst.split_at)
        assert abs(dec.residual) < 1e-14

    def test_inequality_by_dense_inverse(self):
        inst = marginal_benefit_instance(4, 4, 0.01, seed=2)
        V, k, u = inst.sigma.values, inst.split_at, inst.u
        assert u @ np.linalg.inv(V) @ u > u[:k] @ np.linalg.inv(V[:k, :k]) @ u[:k]

    def test_infeasible_target_exhausts_retries(self):
        with pytest.raises(GenerationFailureError):
            marginal_benefit_instance(2, 2, 50.0, seed=0, max_retries=3)

    def test_unreachable_energy_floor(self):
        with pytest.raises(InvalidArgumentError):
            marginal_benefit_instance(2, 2, 0.0, eig_range=(0.5, 20.0), energy_floor=0.1)


class TestSuites:
    def test_bayes_error_suite_small(self):
        r = bayes_error_suite(n_specs=6, n_draws=20_000, seed=3)
        assert r["n_specs"] == 6 and len(r["specs"]) == 6
        assert r["covered"] >= 5
        assert all(2 <= s["p"] <= 10 for s in r["specs"])

    def test_marginal_benefit_suite_small(self):
        r = marginal_benefit_suite(n_instances=40, seed=1)
        assert all(lv["violations"] == 0 for lv in r["levels"])
        assert r["residual_decreasing"]
