"""Structured-analysis procedures: error decomposition and sensitivity sweeps.

Every sweep evaluates on a fixed, clean test set. Grid points use derived
seeds: a point's subsample/contamination stream depends on the control
value and repeat index, and its training seed only on the repeat index,
``derive_seed(seed, "fit", repeat)``. Two sweeps that share a seed therefore
train on identical streams wherever their data coincide, which is what
makes curves comparable (a ratio-1.0 downsample or an epsilon-0 noise point
reproduces the baseline exactly).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifiers import ClassifierSpec, ImportanceProfile, fit, predict
from .data import (
    Dataset,
    derive_seed,
    downsample_class,
    round_half_up,
    select_features,
    stratified_subsample,
)
from .errors import (
    EmptyEvaluationError,
    InfeasibleSubsampleError,
    InvalidArgumentError,
    ShapeError,
    UndefinedKappaError,
)
from .numstats import SeparationResult, separation_from_data

__all__ = [
    "ConfusionMatrix",
    "CurvePoint",
    "DiagnosticCurve",
    "ImportanceProfile",
    "SeparationReport",
    "DEFAULT_EPSILONS",
    "DEFAULT_SIZES",
    "SMALL_SAMPLE_SIZES",
    "confusion_matrix",
    "error_rate",
    "per_class_rates",
    "kappa",
    "holdout_errors",
    "baseline_error",
    "default_size_grid",
    "learning_curve",
    "inject_label_noise",
    "noise_curve",
    "downsample_sweep",
    "pairwise_separation_report",
    "feature_set_comparison",
]

DEFAULT_EPSILONS = (0.01, 0.02, 0.03, 0.04, 0.05, 0.10)
DEFAULT_SIZES = (28, 56, 112, 224, 448, 896, 1792)
SMALL_SAMPLE_SIZES = (28, 56, 84, 112, 140)
DEFAULT_REPEATS = 5


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts with rows = true class and columns = predicted class."""

    counts: np.ndarray
    class_names: tuple

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] != len(self.class_names):
            raise ShapeError(f"confusion counts must be C x C for {len(self.class_names)} classes")
        if np.any(c < 0):
            raise InvalidArgumentError("confusion counts must be nonnegative")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "class_names", tuple(self.class_names))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]


def confusion_matrix(true_labels, predicted_labels, n_classes: int | None = None,
                     class_names=None) -> ConfusionMatrix:
    t = np.asarray(true_labels, dtype=np.intp)
    p = np.asarray(predicted_labels, dtype=np.intp)
    if t.shape != p.shape or t.ndim != 1:
        raise ShapeError(f"label vectors differ in shape: {t.shape} vs {p.shape}")
    if t.size == 0:
        raise EmptyEvaluationError("no instances to evaluate")
    if class_names is not None:
        n_classes = len(class_names)
    if n_classes is None:
        raise InvalidArgumentError("need n_classes or class_names")
    if min(t.min(), p.min()) < 0 or max(t.max(), p.max()) >= n_classes:
        raise InvalidArgumentError(f"labels must lie in 0..{n_classes - 1}")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    names = class_names if class_names is not None else tuple(str(i) for i in range(n_classes))
    return ConfusionMatrix(counts, names)


def _require_total(cm: ConfusionMatrix) -> int:
    total = cm.total
    if total == 0:
        raise EmptyEvaluationError("confusion matrix is empty")
    return total


def error_rate(cm: ConfusionMatrix) -> float:
    total = _require_total(cm)
    return 1.0 - np.trace(cm.counts) / total


def per_class_rates(cm: ConfusionMatrix) -> list[dict]:
    """Producer error (row share off the diagonal) and user error (column share).

    A class with no true instances has producer error 0, and one that is
    never predicted has user error 0.
    """
    _require_total(cm)
    c = cm.counts
    diag = np.diag(c)
    rows, cols = c.sum(axis=1), c.sum(axis=0)
    out = []
    for i, name in enumerate(cm.class_names):
        out.append({
            "class": name,
            "true_count": int(rows[i]),
            "predicted_count": int(cols[i]),
            "producer_error": float((rows[i] - diag[i]) / rows[i]) if rows[i] else 0.0,
            "user_error": float((cols[i] - diag[i]) / cols[i]) if cols[i] else 0.0,
        })
    return out


def kappa(cm: ConfusionMatrix) -> float:
    """Cohen's kappa, ``(p_o - p_e) / (1 - p_e)``."""
    total = _require_total(cm)
    c = cm.counts.astype(np.float64)
    p_o = np.trace(c) / total
    p_e = float(c.sum(axis=1) @ c.sum(axis=0)) / (total * total)
    if p_e >= 1.0:
        raise UndefinedKappaError("chance agreement is 1; kappa is undefined")
    return float((p_o - p_e) / (1.0 - p_e))


@dataclass(frozen=True)
class CurvePoint:
    x: float
    mean: float
    sd: float | None
    repeats: int
    values: tuple = ()


@dataclass(frozen=True)
class DiagnosticCurve:
    control_name: str
    metric_name: str
    points: tuple
    series: str = ""
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        xs = [pt.x for pt in self.points]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise InvalidArgumentError(f"{self.control_name} values must be strictly increasing")

    @property
    def x(self) -> np.ndarray:
        return np.array([pt.x for pt in self.points])

    @property
    def y(self) -> np.ndarray:
        return np.array([pt.mean for pt in self.points])


def _point(x, values) -> CurvePoint:
    v = [float(a) for a in values]
    sd = float(np.std(v, ddof=1)) if len(v) >= 2 else None
    return CurvePoint(x=x, mean=float(np.mean(v)), sd=sd, repeats=len(v), values=tuple(v))


def _check_increasing(values, name):
    if any(b <= a for a, b in zip(values, values[1:])):
        raise InvalidArgumentError(f"{name} must be strictly increasing")


def fit_seed(seed: int, repeat: int) -> int:
    return derive_seed(seed, "fit", repeat)


def _evaluate(train: Dataset, test: Dataset, spec: ClassifierSpec, seed: int, threads: int):
    model = fit(train, spec, seed, threads=threads)
    pred, _ = predict(model, test.features, threads=threads)
    return pred


def holdout_errors(train: Dataset, test: Dataset, spec: ClassifierSpec, seed: int,
                   threads: int = 1) -> tuple[float, ConfusionMatrix]:
    """Train once, evaluate on ``test``; returns ``(error, confusion)``."""
    if train.class_names != test.class_names or train.p != test.p:
        raise ShapeError("train and test must share features and class registry")
    pred = _evaluate(train, test, spec, seed, threads)
    cm = confusion_matrix(test.labels, pred, class_names=test.class_names)
    return error_rate(cm), cm


def baseline_error(train, test, spec, seed, threads=1) -> float:
    """Full-sample holdout error on the repeat-0 training stream."""
    return holdout_errors(train, test, spec, fit_seed(seed, 0), threads)[0]


def default_size_grid(n: int, n_classes: int) -> list[int]:
    """Geometric default grid intersected with feasible sizes, capped by ``n``."""
    sizes = [s for s in DEFAULT_SIZES if n_classes <= s < n]
    return sizes + [n]


def learning_curve(train: Dataset, test: Dataset, spec: ClassifierSpec, sizes=None,
                   repeats: int = DEFAULT_REPEATS, seed: int = 0, threads: int = 1,
                   series: str = "") -> DiagnosticCurve:
    """Test error versus training size, by stratified proportional subsampling."""
    sizes = list(sizes) if sizes is not None else default_size_grid(train.n, train.n_classes)
    _check_increasing(sizes, "sizes")
    if repeats < 1:
        raise InvalidArgumentError("repeats must be >= 1")
    points = []
    for size in sizes:
        if size > train.n or size < 1:
            raise InfeasibleSubsampleError(f"training size {size} infeasible for n={train.n}")
        errs = []
        for r in range(repeats):
            try:
                sub = stratified_subsample(train, int(size), seed=derive_seed(seed, "size", int(size), r))
            except InfeasibleSubsampleError as exc:
                raise InfeasibleSubsampleError(f"training size {size}: {exc}") from None
            errs.append(holdout_errors(sub, test, spec, fit_seed(seed, r), threads)[0])
        points.append(_point(float(size), errs))
    return DiagnosticCurve("sample_size", "error_rate", tuple(points), series,
                           {"repeats": repeats, "classifier": spec.to_dict()})


def inject_label_noise(d: Dataset, epsilon: float, seed: int) -> Dataset:
    """Flip exactly ``round(epsilon * n)`` labels, each to a different class.

    Rows are chosen uniformly without replacement; each chosen label is
    replaced by one drawn uniformly from the other C - 1 classes.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise InvalidArgumentError(f"epsilon must lie in [0, 1], got {epsilon}")
    k = round_half_up(epsilon * d.n)
    if k == 0:
        return d
    rng = np.random.default_rng(seed)
    rows = rng.choice(d.n, size=k, replace=False)
    labels = d.labels.copy()
    labels[rows] = (labels[rows] + rng.integers(1, d.n_classes, size=k)) % d.n_classes
    return d.with_labels(labels)


def noise_curve(train: Dataset, test: Dataset, spec: ClassifierSpec, epsilons=DEFAULT_EPSILONS,
                seed: int = 0, repeats: int = DEFAULT_REPEATS, threads: int = 1,
                series: str = "") -> DiagnosticCurve:
    """Clean-test error after contaminating a fraction ``epsilon`` of training labels."""
    epsilons = [float(e) for e in epsilons]
    _check_increasing(epsilons, "epsilons")
    if epsilons and (epsilons[0] < 0 or epsilons[-1] > 1):
        raise InvalidArgumentError("epsilons must lie in [0, 1]")
    points = []
    for eps in epsilons:
        errs = []
        for r in range(repeats):
            dirty = inject_label_noise(train, eps, derive_seed(seed, "noise", eps, r))
            errs.append(holdout_errors(dirty, test, spec, fit_seed(seed, r), threads)[0])
        points.append(_point(eps, errs))
    return DiagnosticCurve("epsilon", "error_rate", tuple(points), series,
                           {"repeats": repeats, "classifier": spec.to_dict()})


def _involving(cm: ConfusionMatrix, target: int) -> int:
    """Misclassified instances whose true or predicted class is ``target``."""
    c = cm.counts
    return int(c[target, :].sum() + c[:, target].sum() - 2 * c[target, target])


def downsample_sweep(train: Dataset, test: Dataset, spec: ClassifierSpec, target_class: int,
                     ratios, seed: int = 0, repeats: int = 1, threads: int = 1):
    """Effect of thinning one class: returns ``(error_curve, involving_target_curve)``."""
    ratios = [float(r) for r in ratios]
    _check_increasing(ratios, "ratios")
    if ratios and (ratios[0] <= 0 or ratios[-1] > 1):
        raise InvalidArgumentError("ratios must lie in (0, 1]")
    err_pts, inv_pts = [], []
    for ratio in ratios:
        errs, inv = [], []
        for r in range(repeats):
            try:
                thin = downsample_class(train, target_class, ratio,
                                        derive_seed(seed, "downsample", ratio, r))
            except InfeasibleSubsampleError as exc:
                raise InfeasibleSubsampleError(f"ratio {ratio}: {exc}") from None
            e, cm = holdout_errors(thin, test, spec, fit_seed(seed, r), threads)
            errs.append(e)
            inv.append(_involving(cm, target_class))
        err_pts.append(_point(ratio, errs))
        inv_pts.append(_point(ratio, inv))
    params = {"repeats": repeats, "target_class": train.class_names[target_class],
              "classifier": spec.to_dict()}
    return (DiagnosticCurve("ratio", "error_rate", tuple(err_pts), "error_rate", params),
            DiagnosticCurve("ratio", "misclassified_involving_target", tuple(inv_pts),
                            "involving_target", params))


@dataclass(frozen=True, eq=False)
class SeparationReport:
    results: tuple
    class_names: tuple
    feature_sets: tuple

    @property
    def pairs(self) -> list[tuple[int, int]]:
        seen = []
        for r in self.results:
            if r.pair not in seen:
                seen.append(r.pair)
        return seen

    def get(self, pair, feature_set_name) -> SeparationResult:
        for r in self.results:
            if r.pair == tuple(pair) and r.feature_set.name == feature_set_name:
                return r
        raise KeyError((pair, feature_set_name))

    def ridge_flags(self) -> list[SeparationResult]:
        return [r for r in self.results if r.ridge_engaged]

    def min_separation_by_pair(self) -> dict:
        """Feature set with the smallest separation for each pair (first on ties)."""
        out = {}
        for pair in self.pairs:
            rs = [r for r in self.results if r.pair == pair]
            out[pair] = min(rs, key=lambda r: r.d).feature_set.name
        return out


def pairwise_separation_report(d: Dataset, feature_sets) -> SeparationReport:
    """Separation for every class pair (a < b) and every feature set."""
    results = []
    for a in range(d.n_classes):
        for b in range(a + 1, d.n_classes):
            for f in feature_sets:
                results.append(separation_from_data(d, (a, b), f))
    return SeparationReport(tuple(results), d.class_names, tuple(feature_sets))


def feature_set_comparison(train: Dataset, test: Dataset, spec: ClassifierSpec, feature_sets,
                           sizes=None, repeats: int = DEFAULT_REPEATS, seed: int = 0,
                           threads: int = 1) -> dict:
    """One learning curve per feature set on shared sizes and shared seeds."""
    sizes = list(sizes) if sizes is not None else default_size_grid(train.n, train.n_classes)
    out = {}
    for f in feature_sets:
        out[f.name] = learning_curve(select_features(train, f), select_features(test, f), spec,
                                     sizes, repeats, seed, threads, series=f.name)
    return out
