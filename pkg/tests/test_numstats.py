import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import covariance_loops, phi_quadrature

from structdiag.data import Dataset, FeatureSet
from structdiag.errors import InvalidArgumentError, ShapeError, SingularMatrixError
from structdiag.numstats import (
    CovarianceMatrix,
    bayes_error_from_separation,
    cross_block_frobenius,
    estimate_covariance,
    marginal_benefit,
    normal_cdf,
    perturbation_decomposition,
    pooled_covariance,
    separation_from_data,
    separation_from_moments,
    spd_solve,
    to_correlation,
)
from structdiag.synthetic import sample_mixture, separation_spec

PHI_MINUS_ONE = 0.15865525393145707


class TestNormalCdf:
    @pytest.mark.parametrize("x", [-8.0, -3.3, -1.0, -0.5, -1e-3, 0.0, 0.7, 2.0, 5.5])
    def test_matches_quadrature(self, x):
        assert abs(normal_cdf(x) - phi_quadrature(x)) <= 1e-12

    def test_frozen_value(self):
        assert normal_cdf(-1.0) == pytest.approx(PHI_MINUS_ONE, abs=1e-15)


class TestBayesError:
    def test_zero_separation_is_coin_flip(self):
        assert bayes_error_from_separation(0.0) == 0.5

    def test_d4(self):
        assert bayes_error_from_separation(4.0) == pytest.approx(PHI_MINUS_ONE, abs=1e-12)

    def test_negative_rejected(self):
        with pytest.raises(InvalidArgumentError):
            bayes_error_from_separation(-1e-9)

    @given(st.floats(0, 400), st.floats(0, 400))
    def test_monotone_decreasing(self, a, b):
        lo, hi = sorted((a, b))
        assert bayes_error_from_separation(hi) <= bayes_error_from_separation(lo)


class TestCovariance:
    def test_matches_loop_oracle(self):
        X = np.random.default_rng(0).standard_normal((9, 3))
        np.testing.assert_allclose(estimate_covariance(X).values, covariance_loops(X.tolist()), atol=1e-14)

    def test_hand_example(self):
        S = estimate_covariance([[1.0, 2.0], [3.0, 6.0]]).values
        np.testing.assert_allclose(S, [[2.0, 4.0], [4.0, 8.0]])

    def test_pooled_weights_by_degrees_of_freedom(self):
        rng = np.random.default_rng(1)
        A, B = rng.standard_normal((5, 2)), rng.standard_normal((9, 2)) * 3
        expected = (4 * covariance_loops(A.tolist()) + 8 * covariance_loops(B.tolist())) / 12
        np.testing.assert_allclose(pooled_covariance(A, B).values, expected, atol=1e-13)

    def test_correlation_unit_diagonal_and_zero_variance(self):
        X = np.c_[np.random.default_rng(2).standard_normal((20, 2)), np.full(20, 4.0)]
        R = to_correlation(estimate_covariance(X))
        assert R.kind == "correlation"
        assert R.degenerate == (2,)
        np.testing.assert_array_equal(np.diag(R.values), 1.0)
        assert np.all(R.values[2, :2] == 0)
        assert np.all(np.abs(R.values) <= 1)

    def test_asymmetric_rejected(self):
        with pytest.raises(InvalidArgumentError):
            CovarianceMatrix([[1.0, 0.5], [0.4, 1.0]])


class TestSpdSolve:
    def test_well_conditioned_no_ridge(self):
        S = CovarianceMatrix([[2.0, 0.3], [0.3, 1.0]])
        res = spd_solve(S, np.array([1.0, -1.0]))
        assert res.ridge == 0.0
        np.testing.assert_allclose(S.values @ res.x, [1.0, -1.0], atol=1e-14)

    def test_singular_engages_ridge(self):
        S = CovarianceMatrix([[1.0, 1.0], [1.0, 1.0]])
        res = spd_solve(S, np.array([1.0, 1.0]))
        assert res.ridge > 0
        assert res.ridge in [10.0 ** (-8 + k) for k in range(7)]

    def test_zero_matrix_is_singular(self):
        with pytest.raises(SingularMatrixError):
            spd_solve(CovarianceMatrix(np.zeros((2, 2))), np.ones(2))

    def test_shape_checked(self):
        with pytest.raises(ShapeError):
            spd_solve(CovarianceMatrix(np.eye(2)), np.ones(3))


class TestSeparation:
    def test_moments_identity(self):
        # mean difference (1, 0) under identity covariance
        r = separation_from_moments(np.array([1.0, 0.0]), CovarianceMatrix(np.eye(2)))
        assert r.d == pytest.approx(1.0)
        assert r.bayes_error == pytest.approx(normal_cdf(-0.5))
        np.testing.assert_allclose(r.mu_hat, [0.5, 0.0])

    def test_moments_correlated(self):
        S = np.array([[1.0, 0.5], [0.5, 1.0]])
        delta = np.array([1.0, 1.0])
        r = separation_from_moments(delta, CovarianceMatrix(S))
        assert r.d == pytest.approx(float(delta @ np.linalg.solve(S, delta)), rel=1e-14)

    def test_data_recovers_generating_separation(self):
        d = sample_mixture(separation_spec(1.0, p=2), 100_000, seed=11)
        r = separation_from_data(d, (0, 1), d.all_features())
        assert r.d == pytest.approx(1.0, abs=0.05)
        assert not r.ridge_engaged

    def test_constant_feature_engages_ridge(self):
        rng = np.random.default_rng(3)
        y = np.repeat([0, 1], 30)
        X = np.c_[rng.standard_normal(60) + y, np.full(60, 2.0)]
        d = Dataset(X, y, ("a", "b"), ("n", "p"))
        r = separation_from_data(d, (0, 1), d.all_features())
        assert r.ridge_engaged
        assert math.isfinite(r.d)

    def test_wide_feature_set_warns(self):
        rng = np.random.default_rng(4)
        d = Dataset(rng.standard_normal((6, 8)), [0, 0, 0, 1, 1, 1], tuple("abcdefgh"), ("x", "y"))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            separation_from_data(d, (0, 1), d.all_features())
        assert any(issubclass(w.category, RuntimeWarning) for w in caught)


class TestMarginalBenefit:
    def test_independent_informative_sets_pass(self):
        d = sample_mixture(separation_spec(2.0, p=4), 4000, seed=5)
        rep = marginal_benefit(d, (0, 1), FeatureSet("a", (0,)), FeatureSet("b", (1, 2, 3)),
                               threshold=0.2, min_separation=0.0)
        assert rep.cross_norm < 0.2
        assert rep.d_union.d >= rep.d_f1.d - 0.01

    def test_overlap_rejected(self):
        d = sample_mixture(separation_spec(2.0, p=3), 200, seed=5)
        with pytest.raises(InvalidArgumentError):
            marginal_benefit(d, (0, 1), FeatureSet("a", (0, 1)), FeatureSet("b", (1, 2)))

    def test_cross_block_needs_correlation(self):
        with pytest.raises(InvalidArgumentError):
            cross_block_frobenius(CovarianceMatrix(np.eye(3)), FeatureSet("a", (0,)), FeatureSet("b", (1,)))


class TestPerturbation:
    def test_block_diagonal_residual_zero(self):
        S = CovarianceMatrix(np.diag([1.0, 2.0, 0.5]))
        dec = perturbation_decomposition(np.array([0.3, -0.2, 0.4]), S, 1)
        assert dec.residual == pytest.approx(0.0, abs=1e-15)
        assert dec.s2 == 0.0
        assert dec.cross_norm == 0.0

    def test_first_order_term_tracks_residual(self):
        rng = np.random.default_rng(6)
        u = rng.standard_normal(4) * 0.4
        base = np.diag([1.0, 1.5, 0.8, 1.2])
        E = np.zeros((4, 4))
        E[:2, 2:] = rng.standard_normal((2, 2))
        E = E + E.T
        for eps in (1e-2, 1e-3):
            dec = perturbation_decomposition(u, CovarianceMatrix(base + eps * E), 2)
            # second-order remainder
            assert abs(dec.residual - dec.s2) < 50 * eps ** 2

    def test_singular_block_named(self):
        S = CovarianceMatrix(np.diag([0.0, 1.0, 1.0]))
        with pytest.raises(SingularMatrixError) as info:
            perturbation_decomposition(np.ones(3), S, 1)
        assert info.value.block in ("A11", "full")
