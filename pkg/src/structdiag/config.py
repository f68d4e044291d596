"""Declarative run configuration and its content hash."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .classifiers import ClassifierSpec
from .errors import ConfigError, StructDiagError
from .synthetic import GaussianMixtureSpec

__all__ = ["PROCEDURES", "PROCEDURE_PARAMS", "RunConfig", "load_config", "canonical_json"]

PROCEDURE_PARAMS = {
    "separation": {"feature_sets"},
    "learning-curve": {"sizes", "repeats", "feature_set"},
    "noise-curve": {"epsilons", "repeats", "feature_set"},
    "small-sample": {"sizes", "repeats", "feature_sets"},
    "importance": {"repeats", "feature_set"},
    "confusion": {"predictions", "true_column", "predicted_column", "class_names", "feature_set"},
    "downsample-sweep": {"target_class", "ratios", "repeats", "feature_set"},
    "compare-features": {"sizes", "repeats", "feature_sets"},
    "corr-heatmap": {"signed", "feature_set", "kind"},
    "synth": {"n"},
    "verify-theory": {"n_specs", "n_draws", "n_instances", "cross_norms", "p_range"},
    "bayes-curve": {"d_values", "d_min", "d_max", "d_step"},
}
PROCEDURES = tuple(PROCEDURE_PARAMS)

_TOP_LEVEL = {"input", "test_input", "test_fraction", "label_column", "feature_sets", "classifier",
              "procedures", "seed", "output_dir", "mixture"}
_MIXTURE_KEYS = {"mu", "sigma", "rho", "theta", "n_train", "n_test"}


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True, allow_nan=False)


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs; only ``output_dir`` is excluded from the hash.

    Data come from ``input`` (with optional ``test_input``; otherwise a
    stratified split by ``test_fraction``) or from ``mixture``, which holds a
    Gaussian mixture description plus ``n_train``/``n_test`` sizes.
    """

    seed: int
    procedures: dict
    input: str | None = None
    test_input: str | None = None
    test_fraction: float = 0.3
    label_column: str = "label"
    feature_sets: dict = field(default_factory=dict)
    classifier: ClassifierSpec = field(default_factory=ClassifierSpec)
    mixture: dict | None = None
    output_dir: str = "out"

    def __post_init__(self):
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ConfigError("seed is mandatory and must be an integer")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if not isinstance(self.procedures, dict) or not self.procedures:
            raise ConfigError("no procedures selected")
        for name, params in self.procedures.items():
            if name not in PROCEDURE_PARAMS:
                raise ConfigError(f"unknown procedure {name!r}; expected one of {list(PROCEDURES)}")
            if not isinstance(params, dict):
                raise ConfigError(f"parameters of {name!r} must be an object")
            unknown = set(params) - PROCEDURE_PARAMS[name]
            if unknown:
                raise ConfigError(f"unknown parameters for {name!r}: {sorted(unknown)}")
        if not isinstance(self.feature_sets, dict):
            raise ConfigError("feature_sets must map names to column lists")
        for name, cols in self.feature_sets.items():
            if not isinstance(cols, list) or not cols or not all(isinstance(c, str) for c in cols):
                raise ConfigError(f"feature set {name!r} must be a non-empty list of column names")
            if len(set(cols)) != len(cols):
                raise ConfigError(f"feature set {name!r} repeats a column")
        if not 0.0 < float(self.test_fraction) < 1.0:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if not isinstance(self.classifier, ClassifierSpec):
            raise ConfigError("classifier must be a ClassifierSpec")
        if self.mixture is not None:
            self._check_mixture()
        if self.input is None and self.mixture is None and self.needs_data():
            raise ConfigError("selected procedures need data: set input or mixture")
        if self.input is None and self.test_input is not None:
            raise ConfigError("test_input requires input")

    def _check_mixture(self):
        m = self.mixture
        if not isinstance(m, dict):
            raise ConfigError("mixture must be an object")
        unknown = set(m) - _MIXTURE_KEYS
        if unknown:
            raise ConfigError(f"unknown mixture fields {sorted(unknown)}")
        if "mu" not in m:
            raise ConfigError("mixture needs mu")
        try:
            GaussianMixtureSpec.from_dict(m)
        except StructDiagError as exc:
            raise ConfigError(f"mixture: {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"mixture: {exc}") from None
        for key in ("n_train", "n_test"):
            v = m.get(key, 1)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigError(f"mixture.{key} must be a positive integer")

    def needs_data(self) -> bool:
        data_free = {"verify-theory", "bayes-curve"}
        for name, params in self.procedures.items():
            if name in data_free:
                continue
            if name == "confusion" and "predictions" in params:
                continue
            if name == "synth":
                if self.mixture is None:
                    raise ConfigError("synth needs a mixture")
                continue
            return True
        return False

    def mixture_spec(self) -> GaussianMixtureSpec | None:
        return None if self.mixture is None else GaussianMixtureSpec.from_dict(self.mixture)

    def semantic_dict(self) -> dict:
        return {
            "seed": self.seed,
            "procedures": copy.deepcopy(self.procedures),
            "input": self.input,
            "test_input": self.test_input,
            "test_fraction": float(self.test_fraction),
            "label_column": self.label_column,
            "feature_sets": copy.deepcopy(self.feature_sets),
            "classifier": self.classifier.to_dict(),
            "mixture": copy.deepcopy(self.mixture),
        }

    def to_dict(self) -> dict:
        out = self.semantic_dict()
        out["output_dir"] = self.output_dir
        return out

    def config_hash(self) -> str:
        try:
            text = canonical_json(self.semantic_dict())
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config is not JSON-serializable: {exc}") from None
        return hashlib.sha256(text.encode("ascii")).hexdigest()

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(obj) - _TOP_LEVEL
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        if "seed" not in obj:
            raise ConfigError("seed is mandatory")
        kw = {k: v for k, v in obj.items() if k != "classifier"}
        clf = obj.get("classifier") or {}
        if not isinstance(clf, dict):
            raise ConfigError("classifier must be an object")
        kw["classifier"] = ClassifierSpec.from_dict(clf)
        kw.setdefault("procedures", {})
        kw.setdefault("feature_sets", {})
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return RunConfig.from_dict(obj)
