"""Execute a :class:`RunConfig` and assemble the report bundle.

All procedures run in memory first; files are written only once every
selected procedure has succeeded, each through an atomic rename, with
``report.json`` last.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .classifiers import (
    ForestModel,
    fit,
    oob_error,
    permutation_importance,
    predict,
)
from .config import RunConfig
from .data import Dataset, FeatureSet, derive_seed, select_features, stratified_split
from .diagnostics import (
    DEFAULT_EPSILONS,
    DEFAULT_REPEATS,
    SMALL_SAMPLE_SIZES,
    CurvePoint,
    DiagnosticCurve,
    baseline_error,
    confusion_matrix,
    default_size_grid,
    downsample_sweep,
    error_rate,
    feature_set_comparison,
    kappa,
    learning_curve,
    noise_curve,
    pairwise_separation_report,
    per_class_rates,
)
from .errors import ConfigError, NumericalFailureError, UndefinedKappaError
from .io import atomic_write_text, dataset_to_csv, format_float, load_csv, load_predictions
from .numstats import (
    CovarianceMatrix,
    bayes_error_from_separation,
    estimate_covariance,
    pooled_covariance,
    to_correlation,
)
from .synthetic import bayes_error_suite, marginal_benefit_suite, sample_mixture

__all__ = ["REPORT_SCHEMA", "REPORT_VERSION", "ReportBundle", "run", "write_bundle", "curve_csv"]

REPORT_SCHEMA = "structdiag-report"
REPORT_VERSION = 1
DEFAULT_RATIOS = (0.2, 0.4, 0.6, 0.8, 1.0)
DEFAULT_N_TRAIN = 2000
DEFAULT_N_TEST = 10000

# which part of the error each procedure speaks to
ERROR_COMPONENT = {
    "separation": "feature error: Bayes rate implied by each feature set",
    "learning-curve": "learning error: convergence with training size",
    "noise-curve": "sample error: label contamination",
    "small-sample": "learning error vs feature error at small training sizes",
    "importance": "feature error: contribution of individual features",
    "confusion": "total error: per-class decomposition",
    "downsample-sweep": "sample error: class representation",
    "compare-features": "feature error vs learning error across feature sets",
    "corr-heatmap": "feature dependence between candidate feature sets",
    "synth": "none: data generation",
    "verify-theory": "feature error: closed-form checks",
    "bayes-curve": "feature error: Bayes rate against separation",
}


@dataclass
class ReportBundle:
    report: dict
    files: dict = field(default_factory=dict)

    def payload(self) -> dict:
        """The report without its timestamp, for reproducibility comparisons."""
        out = json.loads(json.dumps(self.report))
        out["metadata"].pop("timestamp", None)
        return out


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)


def _file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def curve_csv(curves) -> str:
    """Long format: ``series,x,y,sd,repeats``; sample sizes print as integers."""
    lines = ["series,x,y,sd,repeats"]
    for c in curves:
        for pt in c.points:
            x = str(int(pt.x)) if c.control_name == "sample_size" else format_float(pt.x)
            lines.append(",".join([_csv_cell(c.series), x, format_float(pt.mean),
                                   format_float(pt.sd), str(pt.repeats)]))
    return "\n".join(lines) + "\n"


def _csv_cell(text: str) -> str:
    if any(ch in text for ch in ',"\n\r'):
        return '"' + text.replace('"', '""') + '"'
    return text


def _matrix_csv(corner: str, row_names, col_names, M) -> str:
    lines = [",".join(_csv_cell(s) for s in [corner, *col_names])]
    for name, row in zip(row_names, M):
        cells = [str(int(v)) if isinstance(v, (int, np.integer)) else format_float(v) for v in row]
        lines.append(",".join([_csv_cell(name), *cells]))
    return "\n".join(lines) + "\n"


def _curve_json(c: DiagnosticCurve) -> dict:
    return {"series": c.series, "control": c.control_name, "metric": c.metric_name,
            "points": [{"x": pt.x, "mean": pt.mean, "sd": pt.sd, "repeats": pt.repeats,
                        "values": list(pt.values)} for pt in c.points]}


class _Context:
    """Lazily loaded data shared by the procedures of one run."""

    def __init__(self, config: RunConfig, threads: int):
        self.config = config
        self.threads = threads
        self.seed = config.seed
        self._loaded = False
        self.inputs = {}

    def _load(self):
        if self._loaded:
            return
        cfg = self.config
        if cfg.input is not None:
            full = load_csv(cfg.input, cfg.label_column)
            self.inputs[cfg.input] = _file_digest(cfg.input)
            if cfg.test_input is not None:
                test = load_csv(cfg.test_input, cfg.label_column, class_names=full.class_names,
                                feature_columns=full.feature_names)
                self.inputs[cfg.test_input] = _file_digest(cfg.test_input)
                self.train, self.test = full, test
            else:
                split = stratified_split(full, cfg.test_fraction, derive_seed(self.seed, "split"))
                self.train, self.test = split.train, split.test
            self.full = full
        else:
            spec = cfg.mixture_spec()
            m = cfg.mixture
            self.train = sample_mixture(spec, m.get("n_train", DEFAULT_N_TRAIN), derive_seed(self.seed, "train"))
            self.test = sample_mixture(spec, m.get("n_test", DEFAULT_N_TEST), derive_seed(self.seed, "test"))
            self.full = self.train
        self.sets = self._resolve_sets(self.full)
        self._loaded = True

    def _resolve_sets(self, d: Dataset) -> dict:
        sets = {}
        for name, cols in self.config.feature_sets.items():
            missing = [c for c in cols if c not in d.feature_names]
            if missing:
                raise ConfigError(f"feature set {name!r} names unknown columns {missing}")
            sets[name] = d.feature_set(name, cols)
        sets.setdefault("all", d.all_features("all"))
        return sets

    def data(self):
        self._load()
        return self.full, self.train, self.test

    def feature_set(self, name) -> FeatureSet:
        self._load()
        if name is None:
            name = "all"
        if name not in self.sets:
            raise ConfigError(f"unknown feature set {name!r}; defined: {sorted(self.sets)}")
        return self.sets[name]

    def feature_sets(self, names) -> list[FeatureSet]:
        self._load()
        if names is None:
            defined = [n for n in self.config.feature_sets]
            names = defined or ["all"]
        if not names:
            raise ConfigError("feature set selection is empty")
        return [self.feature_set(n) for n in names]

    def restricted(self, fs: FeatureSet):
        _, train, test = self.data()
        return select_features(train, fs), select_features(test, fs)


def _param_list(params, key, default, kind=float):
    v = params.get(key, default)
    if v is None:
        return None
    if not isinstance(v, (list, tuple)) or not v:
        raise ConfigError(f"{key} must be a non-empty list")
    try:
        return [kind(x) for x in v]
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must hold numbers") from None


def _param_int(params, key, default, minimum=1):
    v = params.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(f"{key} must be an integer >= {minimum}")
    return v


def _sizes(params, train):
    sizes = _param_list(params, "sizes", None, int)
    return sizes if sizes is not None else default_size_grid(train.n, train.n_classes)


def _proc_separation(ctx, params, out, files):
    full, _, _ = ctx.data()
    sets = ctx.feature_sets(params.get("feature_sets"))
    rep = pairwise_separation_report(full, sets)
    names = full.class_names
    rows = []
    for r in rep.results:
        rows.append({"pair": [names[r.pair[0]], names[r.pair[1]]], "feature_set": r.feature_set.name,
                     "d": r.d, "bayes_error": r.bayes_error, "ridge": r.ridge_applied,
                     "condition_estimate": r.condition_estimate if math.isfinite(r.condition_estimate) else None})
        if r.ridge_engaged:
            warnings.warn(f"ridge {r.ridge_applied:.3g} applied for pair {names[r.pair[0]]}/"
                          f"{names[r.pair[1]]} on feature set {r.feature_set.name!r}", RuntimeWarning)
    for f in sets:
        M = np.zeros((full.n_classes, full.n_classes))
        for r in rep.results:
            if r.feature_set.name == f.name:
                a, b = r.pair
                M[a, b] = M[b, a] = r.d
        files[f"separation.{_safe(f.name)}.matrix.csv"] = _matrix_csv("class", names, names, M)
    out["results"] = {
        "pairs": rows,
        "min_separation_feature_set": [{"pair": [names[a], names[b]], "feature_set": s}
                                       for (a, b), s in rep.min_separation_by_pair().items()],
    }
    out["parameters"] = {"feature_sets": [f.name for f in sets], "n": full.n}


def _proc_learning_curve(ctx, params, out, files):
    fs = ctx.feature_set(params.get("feature_set"))
    train, test = ctx.restricted(fs)
    sizes = _sizes(params, train)
    repeats = _param_int(params, "repeats", DEFAULT_REPEATS)
    c = learning_curve(train, test, ctx.config.classifier, sizes, repeats, ctx.seed, ctx.threads, series=fs.name)
    files["learning-curve.curve.csv"] = curve_csv([c])
    out["parameters"] = {"sizes": sizes, "repeats": repeats, "feature_set": fs.name}
    out["results"] = {"curves": [_curve_json(c)]}


def _proc_noise_curve(ctx, params, out, files):
    fs = ctx.feature_set(params.get("feature_set"))
    train, test = ctx.restricted(fs)
    eps = _param_list(params, "epsilons", list(DEFAULT_EPSILONS))
    repeats = _param_int(params, "repeats", DEFAULT_REPEATS)
    spec = ctx.config.classifier
    c = noise_curve(train, test, spec, eps, ctx.seed, repeats, ctx.threads, series=fs.name)
    base = baseline_error(train, test, spec, ctx.seed, ctx.threads)
    files["noise-curve.curve.csv"] = curve_csv([c])
    out["parameters"] = {"epsilons": eps, "repeats": repeats, "feature_set": fs.name}
    out["results"] = {"baseline_error": base, "curves": [_curve_json(c)]}


def _compare(ctx, params, out, files, name, default_sizes):
    sets = ctx.feature_sets(params.get("feature_sets"))
    _, train, test = ctx.data()
    sizes = _param_list(params, "sizes", default_sizes, int) if default_sizes is not None else _sizes(params, train)
    repeats = _param_int(params, "repeats", DEFAULT_REPEATS)
    curves = feature_set_comparison(train, test, ctx.config.classifier, sets, sizes, repeats,
                                    ctx.seed, ctx.threads)
    files[f"{name}.curve.csv"] = curve_csv(list(curves.values()))
    out["parameters"] = {"sizes": sizes, "repeats": repeats, "feature_sets": [f.name for f in sets]}
    out["results"] = {"curves": [_curve_json(c) for c in curves.values()]}


def _proc_small_sample(ctx, params, out, files):
    _compare(ctx, params, out, files, "small-sample", list(SMALL_SAMPLE_SIZES))


def _proc_compare_features(ctx, params, out, files):
    _compare(ctx, params, out, files, "compare-features", None)


def _proc_importance(ctx, params, out, files):
    spec = ctx.config.classifier
    if spec.kind != "random-forest":
        raise ConfigError("importance needs the random-forest classifier")
    fs = ctx.feature_set(params.get("feature_set"))
    train, _ = ctx.restricted(fs)
    repeats = _param_int(params, "repeats", 1)
    model = fit(train, spec, derive_seed(ctx.seed, "importance-fit"), threads=ctx.threads)
    prof = permutation_importance(model, train, repeats, derive_seed(ctx.seed, "importance"), ctx.threads)
    err, covered, skipped = oob_error(model, train, return_coverage=True)
    entries = prof.entries()
    se = prof.stderr if prof.stderr is not None else [None] * len(entries)
    for e, s in zip(entries, se):
        e["stderr"] = None if s is None else float(s)
    files["importance.csv"] = _importance_csv(entries)
    out["parameters"] = {"repeats": repeats, "feature_set": fs.name, "n_train": train.n}
    out["results"] = {"oob_error": err, "oob_rows": covered, "oob_rows_skipped": skipped,
                      "features": entries}


def _importance_csv(entries) -> str:
    lines = ["feature,importance,stderr,rank"]
    for e in entries:
        lines.append(",".join([_csv_cell(e["name"]), format_float(e["importance"]),
                               format_float(e["stderr"]), str(e["rank"])]))
    return "\n".join(lines) + "\n"


def _proc_confusion(ctx, params, out, files):
    if "predictions" in params:
        y_true, y_pred, names = load_predictions(params["predictions"],
                                                 params.get("true_column", "true"),
                                                 params.get("predicted_column", "predicted"),
                                                 params.get("class_names"))
        ctx.inputs[params["predictions"]] = _file_digest(params["predictions"])
        out["parameters"] = {"source": "predictions", "predictions": params["predictions"]}
        extra = {}
    else:
        fs = ctx.feature_set(params.get("feature_set"))
        train, test = ctx.restricted(fs)
        spec = ctx.config.classifier
        model = fit(train, spec, derive_seed(ctx.seed, "fit", 0), threads=ctx.threads)
        y_pred, _ = predict(model, test.features, threads=ctx.threads)
        y_true, names = test.labels, test.class_names
        out["parameters"] = {"source": "holdout", "feature_set": fs.name, "n_train": train.n, "n_test": test.n}
        extra = {}
        if isinstance(model, ForestModel):
            extra["oob_error"] = oob_error(model, train)
    cm = confusion_matrix(y_true, y_pred, class_names=names)
    try:
        k = kappa(cm)
    except UndefinedKappaError as exc:
        warnings.warn(str(exc), RuntimeWarning)
        k = None
    correct = int(np.trace(cm.counts))
    files["confusion.matrix.csv"] = _matrix_csv("true\\predicted", names, names, cm.counts.tolist())
    out["results"] = {"orientation": "rows are true classes, columns are predicted classes",
                      "class_names": list(names), "counts": cm.counts.tolist(), "total": cm.total,
                      "correct": correct, "misclassified": cm.total - correct,
                      "error_rate": error_rate(cm), "kappa": k, "per_class": per_class_rates(cm), **extra}


def _proc_downsample(ctx, params, out, files):
    fs = ctx.feature_set(params.get("feature_set"))
    train, test = ctx.restricted(fs)
    target = params.get("target_class")
    if target is None:
        raise ConfigError("downsample-sweep needs target_class")
    if str(target) not in train.class_names:
        raise ConfigError(f"target_class {target!r} not among {list(train.class_names)}")
    tid = train.class_names.index(str(target))
    ratios = _param_list(params, "ratios", list(DEFAULT_RATIOS))
    repeats = _param_int(params, "repeats", 1)
    err, inv = downsample_sweep(train, test, ctx.config.classifier, tid, ratios, ctx.seed, repeats, ctx.threads)
    files["downsample-sweep.error_rate.curve.csv"] = curve_csv([err])
    files["downsample-sweep.involving_target.curve.csv"] = curve_csv([inv])
    out["parameters"] = {"target_class": str(target), "ratios": ratios, "repeats": repeats, "feature_set": fs.name}
    out["results"] = {"curves": [_curve_json(err), _curve_json(inv)]}


def _proc_corr_heatmap(ctx, params, out, files):
    full, _, _ = ctx.data()
    fs = ctx.feature_set(params.get("feature_set"))
    sub = select_features(full, fs)
    signed = bool(params.get("signed", False))
    kind = params.get("kind", "total")
    if kind == "total":
        S = estimate_covariance(sub.features)
    elif kind == "pooled":
        S = _pooled_all(sub)
    else:
        raise ConfigError(f"corr-heatmap kind must be 'total' or 'pooled', got {kind!r}")
    R = to_correlation(S)
    M = R.values if signed else np.abs(R.values)
    if R.degenerate:
        warnings.warn("zero-variance features: " + ", ".join(sub.feature_names[i] for i in R.degenerate),
                      RuntimeWarning)
    files["corr-heatmap.matrix.csv"] = _matrix_csv("feature", sub.feature_names, sub.feature_names, M)
    out["parameters"] = {"feature_set": fs.name, "signed": signed, "kind": kind}
    out["results"] = {"feature_names": list(sub.feature_names), "matrix": M.tolist(),
                      "degenerate_features": [sub.feature_names[i] for i in R.degenerate]}


def _pooled_all(d: Dataset):
    """Within-class covariance pooled over every class with at least two rows."""
    X, y = d.features, d.labels
    acc = np.zeros((d.p, d.p))
    dof = 0
    for c in range(d.n_classes):
        Xc = X[y == c]
        if len(Xc) >= 2:
            acc += (len(Xc) - 1) * estimate_covariance(Xc).values
            dof += len(Xc) - 1
    if dof == 0:
        return pooled_covariance(X[:0], X[:0])
    return CovarianceMatrix(acc / dof)


def _proc_synth(ctx, params, out, files):
    spec = ctx.config.mixture_spec()
    default_n = ctx.config.mixture.get("n_train", DEFAULT_N_TRAIN)
    n = _param_int(params, "n", default_n)
    d = sample_mixture(spec, n, derive_seed(ctx.seed, "synth"))
    files["synth.csv"] = dataset_to_csv(d, ctx.config.label_column)
    out["parameters"] = {"n": n, "label_column": ctx.config.label_column}
    out["results"] = {"d": spec.separation(), "bayes_error": spec.bayes_error(),
                      "class_counts": {name: int(c) for name, c in zip(d.class_names, d.class_counts())},
                      "file": "synth.csv"}


def _proc_verify_theory(ctx, params, out, files):
    n_specs = _param_int(params, "n_specs", 50)
    n_draws = _param_int(params, "n_draws", 200_000, minimum=1000)
    n_inst = _param_int(params, "n_instances", 1000)
    norms = _param_list(params, "cross_norms", [0.04, 0.02, 0.01])
    p_range = _param_list(params, "p_range", [2, 10], int)
    if len(p_range) != 2:
        raise ConfigError("p_range must be [low, high]")
    bayes = bayes_error_suite(n_specs, n_draws, derive_seed(ctx.seed, "bayes"), tuple(p_range))
    benefit = marginal_benefit_suite(n_inst, norms, derive_seed(ctx.seed, "benefit"))
    out["parameters"] = {"n_specs": n_specs, "n_draws": n_draws, "n_instances": n_inst,
                         "cross_norms": norms, "p_range": p_range,
                         "eig_range": benefit["eig_range"], "energy_floor": benefit["energy_floor"]}
    out["results"] = {
        "bayes_error": {"covered": bayes["covered"], "n_specs": n_specs, "z_limit": bayes["z_limit"],
                        "specs": bayes["specs"]},
        "marginal_benefit": {"violations": sum(lv["violations"] for lv in benefit["levels"]),
                             "levels": benefit["levels"], "residual_decreasing": benefit["residual_decreasing"]},
    }


def _proc_bayes_curve(ctx, params, out, files):
    if "d_values" in params:
        ds = _param_list(params, "d_values", None)
    else:
        lo = float(params.get("d_min", 0.0))
        hi = float(params.get("d_max", 25.0))
        step = float(params.get("d_step", 0.25))
        if not (step > 0 and hi >= lo):
            raise ConfigError("bayes-curve needs d_step > 0 and d_max >= d_min")
        k = int(math.floor((hi - lo) / step + 1e-9))
        ds = [lo + i * step for i in range(k + 1)]
    if any(d < 0 for d in ds) or any(b <= a for a, b in zip(ds, ds[1:])):
        raise ConfigError("d values must be nonnegative and strictly increasing")
    pts = tuple(CurvePoint(x=d, mean=bayes_error_from_separation(d), sd=None, repeats=1) for d in ds)
    c = DiagnosticCurve("d", "bayes_error", pts, "bayes_error")
    files["bayes-curve.curve.csv"] = curve_csv([c])
    out["parameters"] = {"d_values": ds}
    out["results"] = {"curves": [_curve_json(c)]}


_USES_CLASSIFIER = {"learning-curve", "noise-curve", "small-sample", "importance", "downsample-sweep",
                    "compare-features"}

PROCEDURE_IMPL = {
    "separation": _proc_separation,
    "learning-curve": _proc_learning_curve,
    "noise-curve": _proc_noise_curve,
    "small-sample": _proc_small_sample,
    "importance": _proc_importance,
    "confusion": _proc_confusion,
    "downsample-sweep": _proc_downsample,
    "compare-features": _proc_compare_features,
    "corr-heatmap": _proc_corr_heatmap,
    "synth": _proc_synth,
    "verify-theory": _proc_verify_theory,
    "bayes-curve": _proc_bayes_curve,
}


def _collect(name, caught, sink):
    by_key = {}
    for w in caught:
        key = (w.category.__name__, str(w.message))
        if key in by_key:
            by_key[key]["count"] += 1
        else:
            by_key[key] = {"procedure": name, "category": key[0], "message": key[1], "count": 1}
            sink.append(by_key[key])


def run(config: RunConfig, threads: int = 1, timestamp: str | None = None) -> ReportBundle:
    """Run every selected procedure; nothing touches the disk here."""
    if threads is None or threads < 1:
        raise ConfigError("threads must be >= 1")
    ctx = _Context(config, threads)
    sections = {}
    files = {}
    warn_list = []
    for name in sorted(config.procedures):
        params = config.procedures[name]
        section = {"procedure": name, "error_component": ERROR_COMPONENT[name]}
        own = {}
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            PROCEDURE_IMPL[name](ctx, params, section, own)
        _collect(name, caught, warn_list)
        if name in _USES_CLASSIFIER or section["parameters"].get("source") == "holdout":
            section["parameters"]["classifier"] = config.classifier.to_dict()
        section["files"] = sorted(own)
        files.update(own)
        sections[name] = section
    if timestamp is None:
        timestamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    report = {
        "schema": REPORT_SCHEMA,
        "schema_version": REPORT_VERSION,
        "metadata": {"tool_version": __version__, "config_hash": config.config_hash(),
                     "seed": config.seed, "inputs": dict(sorted(ctx.inputs.items())),
                     "timestamp": timestamp},
        "config": config.semantic_dict(),
        "sections": sections,
        "warnings": warn_list,
    }
    report_json(report)
    return ReportBundle(report=report, files=files)


def report_json(report: dict) -> str:
    try:
        return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"
    except ValueError as exc:
        raise NumericalFailureError(f"report contains a non-finite number: {exc}") from None


def write_bundle(bundle: ReportBundle, out_dir) -> Path:
    """Write every file then ``report.json``; returns the report path."""
    out = Path(out_dir)
    text = report_json(bundle.report)
    for name in sorted(bundle.files):
        atomic_write_text(out / name, bundle.files[name])
    atomic_write_text(out / "report.json", text)
    return out / "report.json"
