from fractions import Fraction

import numpy as np
import pytest
from fixtures.reference_confusion import CLASSES, COUNTS
from hypothesis import given
from hypothesis import strategies as st
from oracles import kappa_exact

from structdiag.classifiers import ClassifierSpec
from structdiag.data import Dataset, FeatureSet
from structdiag.diagnostics import (
    DEFAULT_EPSILONS,
    ConfusionMatrix,
    baseline_error,
    confusion_matrix,
    default_size_grid,
    downsample_sweep,
    error_rate,
    feature_set_comparison,
    inject_label_noise,
    kappa,
    learning_curve,
    noise_curve,
    pairwise_separation_report,
    per_class_rates,
)
from structdiag.errors import (
    EmptyEvaluationError,
    InfeasibleSubsampleError,
    InvalidArgumentError,
    ShapeError,
    UndefinedKappaError,
)
from structdiag.synthetic import GaussianMixtureSpec, reference_spec, sample_mixture

REFERENCE = ConfusionMatrix(np.array(COUNTS), CLASSES)
FAST_RF = ClassifierSpec(n_trees=15)
LOGIT = ClassifierSpec(kind="l1-logistic")


@pytest.fixture(scope="module")
def mix():
    spec = reference_spec()
    return sample_mixture(spec, 300, 1), sample_mixture(spec, 1000, 2)


class TestConfusion:
    def test_counts_orientation(self):
        cm = confusion_matrix([0, 0, 1], [0, 1, 1], n_classes=2)
        assert cm.counts.tolist() == [[1, 1], [0, 1]]

    def test_perfect(self):
        cm = confusion_matrix([0, 1, 2, 1], [0, 1, 2, 1], n_classes=3)
        assert error_rate(cm) == 0
        assert kappa(cm) == 1.0
        assert all(r["producer_error"] == 0 and r["user_error"] == 0 for r in per_class_rates(cm))

    def test_single_wrong_instance(self):
        cm = confusion_matrix([0], [1], n_classes=2)
        assert cm.counts.tolist() == [[0, 1], [0, 0]]
        assert error_rate(cm) == 1.0

    def test_chance_agreement_kappa_zero(self):
        assert kappa(ConfusionMatrix(np.full((2, 2), 25), ("a", "b"))) == pytest.approx(0.0, abs=1e-15)

    def test_degenerate_kappa(self):
        with pytest.raises(UndefinedKappaError):
            kappa(ConfusionMatrix([[5, 0], [0, 0]], ("a", "b")))

    def test_errors(self):
        with pytest.raises(ShapeError):
            confusion_matrix([0, 1], [0], n_classes=2)
        with pytest.raises(EmptyEvaluationError):
            confusion_matrix([], [], n_classes=2)
        with pytest.raises(EmptyEvaluationError):
            error_rate(ConfusionMatrix(np.zeros((2, 2)), ("a", "b")))

    def test_reference_totals(self):
        assert REFERENCE.total == 423
        assert int(np.trace(REFERENCE.counts)) == 403
        assert error_rate(REFERENCE) == pytest.approx(20 / 423, abs=1e-12)

    def test_reference_per_class(self):
        rates = {r["class"]: r for r in per_class_rates(REFERENCE)}
        assert rates["Forest"]["producer_error"] == pytest.approx(10 / 83, abs=1e-15)
        assert rates["Industry"]["user_error"] == pytest.approx(3 / 69, abs=1e-15)
        assert rates["Water"]["true_count"] == 41

    def test_reference_kappa_exact(self):
        expected = kappa_exact(COUNTS)
        assert abs(kappa(REFERENCE) - float(expected)) <= 1e-12
        # p_o = 403/423 by hand
        assert Fraction(403, 423) > expected

    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=60))
    def test_invariants(self, pairs):
        t, p = zip(*pairs)
        cm = confusion_matrix(t, p, n_classes=4)
        assert cm.total == len(pairs)
        assert cm.counts.sum(axis=1).tolist() == np.bincount(t, minlength=4).tolist()
        try:
            k = kappa(cm)
        except UndefinedKappaError:
            return
        assert k <= 1 + 1e-12
        if error_rate(cm) == 0:
            assert k == pytest.approx(1.0)


class TestLabelNoise:
    def make(self, n, C=3, seed=0):
        rng = np.random.default_rng(seed)
        return Dataset(rng.standard_normal((n, 2)), rng.integers(0, C, n) if n >= C else np.arange(n) % C,
                       ("a", "b"), tuple(f"c{i}" for i in range(C)))

    def test_zero_is_identity(self):
        d = self.make(50)
        assert inject_label_noise(d, 0.0, 1) is d

    def test_full_flip(self):
        d = self.make(40)
        assert np.all(inject_label_noise(d, 1.0, 1).labels != d.labels)

    def test_five_percent_of_hundred(self):
        d = self.make(100)
        assert np.count_nonzero(inject_label_noise(d, 0.05, 3).labels != d.labels) == 5

    def test_range_checked(self):
        with pytest.raises(InvalidArgumentError):
            inject_label_noise(self.make(10), 1.5, 0)


class TestCurves:
    def test_default_grids(self):
        assert len(DEFAULT_EPSILONS) == 6
        assert default_size_grid(1000, 2) == [28, 56, 112, 224, 448, 896, 1000]
        assert default_size_grid(50, 2) == [28, 50]

    def test_learning_curve_full_size_equals_holdout(self, mix):
        train, test = mix
        c = learning_curve(train, test, FAST_RF, [train.n], repeats=1, seed=4)
        assert c.points[0].sd is None and c.points[0].repeats == 1
        assert c.points[0].mean == baseline_error(train, test, FAST_RF, 4)

    def test_learning_curve_sd_and_increasing(self, mix):
        train, test = mix
        c = learning_curve(train, test, FAST_RF, [30, 100], repeats=3, seed=0)
        assert all(pt.sd is not None and pt.repeats == 3 for pt in c.points)
        with pytest.raises(InvalidArgumentError):
            learning_curve(train, test, FAST_RF, [100, 30], seed=0)

    def test_infeasible_size_named(self, mix):
        train, test = mix
        with pytest.raises(InfeasibleSubsampleError, match="400"):
            learning_curve(train, test, FAST_RF, [400], seed=0)

    def test_curves_reproducible(self, mix):
        train, test = mix
        a = noise_curve(train, test, LOGIT, [0.0, 0.1], seed=2, repeats=2)
        b = noise_curve(train, test, LOGIT, [0.0, 0.1], seed=2, repeats=2)
        assert a == b

    def test_noise_zero_matches_baseline(self, mix):
        train, test = mix
        c = noise_curve(train, test, FAST_RF, [0.0, 0.05], seed=6, repeats=1)
        assert c.points[0].mean == baseline_error(train, test, FAST_RF, 6)

    def test_downsample_ratio_one_matches_baseline(self, mix):
        train, test = mix
        err, inv = downsample_sweep(train, test, FAST_RF, 1, [0.5, 1.0], seed=8)
        assert err.points[-1].mean == baseline_error(train, test, FAST_RF, 8)
        for e, i in zip(err.points, inv.points):
            assert i.mean <= e.mean * test.n + 1e-9

    def test_identical_feature_sets_identical_curves(self, mix):
        train, test = mix
        f = FeatureSet("a", (0, 1))
        g = FeatureSet("b", (0, 1))
        out = feature_set_comparison(train, test, FAST_RF, [f, g], [40, 120], repeats=2, seed=1)
        assert out["a"].y.tolist() == out["b"].y.tolist()

    def test_informative_beats_noise(self):
        tr = sample_mixture(reference_spec(), 600, 3)
        te = sample_mixture(reference_spec(), 2000, 4)
        out = feature_set_comparison(tr, te, LOGIT, [FeatureSet("signal", (0, 1)), FeatureSet("noise", (3, 4))],
                                     [600], repeats=2, seed=0)
        # x4, x5 are correlated with x1 only through rho = 0.3 ** 3
        assert out["signal"].y[-1] < out["noise"].y[-1]


class TestSeparationReport:
    def three_class(self):
        rng = np.random.default_rng(0)
        y = np.repeat([0, 1, 2], 400)
        centres = np.array([[0.0, 0.0], [0.0, 0.0], [3.0, 0.0]])
        X = rng.standard_normal((1200, 2)) + centres[y]
        return Dataset(X, y, ("a", "b"), ("p", "q", "r"))

    def test_pair_count(self):
        d = self.three_class()
        rep = pairwise_separation_report(d, [d.all_features(), FeatureSet("first", (0,))])
        assert len(rep.pairs) == 3 and len(rep.results) == 6

    def test_coincident_pair(self):
        d = self.three_class()
        rep = pairwise_separation_report(d, [d.all_features()])
        r = rep.get((0, 1), "all")
        assert r.d < 0.05 and r.bayes_error > 0.45
        assert rep.get((0, 2), "all").d == pytest.approx(9.0, rel=0.1)

    def test_min_by_pair(self):
        d = self.three_class()
        rep = pairwise_separation_report(d, [d.all_features(), FeatureSet("second", (1,))])
        assert rep.min_separation_by_pair()[(0, 2)] == "second"

    def test_seven_classes(self):
        spec = GaussianMixtureSpec([0.0], [[1.0]])
        base = sample_mixture(spec, 700, 0)
        d = Dataset(base.features, np.arange(700) % 7, ("x1",), tuple("ABCDEFG"))
        assert len(pairwise_separation_report(d, [d.all_features()]).pairs) == 21
