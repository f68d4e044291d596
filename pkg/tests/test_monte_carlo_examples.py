"""Behavioural checks on synthetic mixtures that need moderately large samples."""

import numpy as np

from structdiag.classifiers import ClassifierSpec
from structdiag.data import FeatureSet, stratified_subsample
from structdiag.diagnostics import downsample_sweep, feature_set_comparison, learning_curve, noise_curve
from structdiag.synthetic import GaussianMixtureSpec, reference_spec, sample_mixture

LOGIT = ClassifierSpec(kind="l1-logistic")


def test_learning_curve_decreases_with_size():
    spec = reference_spec()
    train, test = sample_mixture(spec, 2000, 1), sample_mixture(spec, 5000, 2)
    c = learning_curve(train, test, ClassifierSpec(n_trees=100), [50, 2000], repeats=5, seed=3)
    assert c.y[1] <= c.y[0]


def test_logistic_error_rises_with_contamination():
    spec = reference_spec()
    train, test = sample_mixture(spec, 2000, 4), sample_mixture(spec, 10_000, 5)
    c = noise_curve(train, test, LOGIT, [0.0, 0.10], seed=6, repeats=5)
    lo, hi = c.points
    assert hi.mean >= lo.mean - lo.sd


def test_nested_superset_not_worse_at_large_n():
    spec = reference_spec()
    train, test = sample_mixture(spec, 5000, 7), sample_mixture(spec, 10_000, 8)
    out = feature_set_comparison(train, test, LOGIT, [FeatureSet("sub", (0, 1)), FeatureSet("super", (0, 1, 2, 3))],
                                 [5000], repeats=2, seed=9)
    assert out["super"].y[-1] <= out["sub"].y[-1] + 0.02


def test_downsampling_oversampled_class_has_interior_optimum():
    # target class 4x oversampled in training; the test prior favours it 2.4:1,
    # so the best training ratio is near 0.6 rather than at either end
    spec = GaussianMixtureSpec([0.5, 0.0], np.eye(2))
    train = stratified_subsample(sample_mixture(spec, 20_000, 1), mode="per-class-counts",
                                 per_class_counts=[500, 2000], seed=2)
    test = stratified_subsample(sample_mixture(spec, 40_000, 3), mode="per-class-counts",
                                per_class_counts=[2500, 6000], seed=4)
    err, inv = downsample_sweep(train, test, LOGIT, 1, [0.2, 0.4, 0.6, 0.8, 1.0], seed=5, repeats=3)
    y = inv.y
    steps = np.sign(np.diff(y))
    assert np.any(steps > 0) and np.any(steps < 0)
    assert 0 < int(np.argmin(y)) < len(y) - 1
    assert np.all(inv.y <= err.y * test.n + 1e-9)
