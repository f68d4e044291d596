"""Datasets, feature sets and deterministic stratified sampling.

Every sampling routine takes an explicit integer seed; nothing here reads
global random state. Derived seeds are produced with :func:`derive_seed` so
that independent grid points of a sweep never share a stream.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    InfeasibleSubsampleError,
    InvalidArgumentError,
    InvalidFeatureSetError,
    SchemaError,
)

__all__ = [
    "Dataset",
    "FeatureSet",
    "Split",
    "derive_seed",
    "round_half_up",
    "allocate_proportional",
    "select_features",
    "stratified_subsample",
    "stratified_split",
    "downsample_class",
]


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _key_to_int(key) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    if isinstance(key, float):
        return zlib.crc32(repr(key).encode("ascii"))
    return int(key)


def derive_seed(seed: int, *keys) -> int:
    """Derive a child seed from ``seed`` and a path of int/str/float keys."""
    # fixed-width words plus a nonzero length word: SeedSequence ignores
    # trailing zero words, which would make (s, k) and (s, k, 0) collide
    words = []
    for v in [int(seed)] + [_key_to_int(k) for k in keys]:
        v &= 0xFFFFFFFFFFFFFFFF
        words += [v & 0xFFFFFFFF, v >> 32]
    entropy = words + [len(keys) + 1]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0])


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """An immutable n x p feature matrix with dense integer class labels.

    ``row_ids`` records the provenance of each row (its index in the dataset
    the row was originally ingested into) so that splits can be audited for
    disjointness.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]
    class_names: tuple[str, ...]
    row_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64, order="C")
        if X.ndim != 2:
            raise SchemaError(f"features must be 2-D, got shape {X.shape}")
        y = np.asarray(self.labels)
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise SchemaError("labels must be a vector with one entry per row")
        if y.size and not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise SchemaError("labels must be integer class ids")
        y = y.astype(np.intp, copy=True)
        fn = tuple(str(s) for s in self.feature_names)
        cn = tuple(str(s) for s in self.class_names)
        n, p = X.shape
        if n < 1 or p < 1:
            raise SchemaError(f"dataset needs n >= 1 and p >= 1, got n={n}, p={p}")
        if len(cn) < 2:
            raise SchemaError("dataset needs at least two classes")
        if len(fn) != p:
            raise SchemaError(f"{len(fn)} feature names for {p} columns")
        if len(set(fn)) != p:
            raise SchemaError("feature names must be unique")
        if len(set(cn)) != len(cn):
            raise SchemaError("class names must be unique")
        if y.min() < 0 or y.max() >= len(cn):
            raise SchemaError("label outside the class registry")
        if not np.all(np.isfinite(X)):
            bad = np.argwhere(~np.isfinite(X))[0]
            raise SchemaError(f"non-finite feature value at row {bad[0]}, column {bad[1]}")
        ids = np.arange(n, dtype=np.intp) if self.row_ids is None else np.array(self.row_ids, dtype=np.intp)
        if ids.shape != (n,):
            raise SchemaError("row_ids must have one entry per row")
        object.__setattr__(self, "features", _readonly(X))
        object.__setattr__(self, "labels", _readonly(y))
        object.__setattr__(self, "feature_names", fn)
        object.__setattr__(self, "class_names", cn)
        object.__setattr__(self, "row_ids", _readonly(ids))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def take(self, rows) -> "Dataset":
        """Row subset, keeping registries and provenance."""
        rows = np.asarray(rows, dtype=np.intp)
        return Dataset(self.features[rows], self.labels[rows], self.feature_names,
                       self.class_names, self.row_ids[rows])

    def with_labels(self, labels) -> "Dataset":
        return Dataset(self.features, labels, self.feature_names, self.class_names, self.row_ids)

    def feature_set(self, name: str, column_names: Sequence[str]) -> "FeatureSet":
        index = {c: i for i, c in enumerate(self.feature_names)}
        missing = [c for c in column_names if c not in index]
        if missing:
            raise InvalidFeatureSetError(f"feature set {name!r}: unknown columns {missing}")
        return FeatureSet(name, tuple(index[c] for c in column_names))

    def all_features(self, name: str = "all") -> "FeatureSet":
        return FeatureSet(name, tuple(range(self.p)))

    def equals(self, other: "Dataset") -> bool:
        return (self.feature_names == other.feature_names
                and self.class_names == other.class_names
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels))


@dataclass(frozen=True)
class FeatureSet:
    name: str
    columns: tuple[int, ...]

    def __post_init__(self):
        cols = tuple(int(c) for c in self.columns)
        if not cols:
            raise InvalidFeatureSetError(f"feature set {self.name!r} is empty")
        if len(set(cols)) != len(cols):
            raise InvalidFeatureSetError(f"feature set {self.name!r} has duplicate columns")
        if min(cols) < 0:
            raise InvalidFeatureSetError(f"feature set {self.name!r} has a negative index")
        object.__setattr__(self, "columns", cols)

    def __len__(self):
        return len(self.columns)

    def validate(self, p: int) -> None:
        if max(self.columns) >= p:
            raise InvalidFeatureSetError(
                f"feature set {self.name!r} refers to column {max(self.columns)} but p={p}")

    def union(self, other: "FeatureSet", name: str | None = None) -> "FeatureSet":
        return FeatureSet(name or f"{self.name}+{other.name}", self.columns + other.columns)


@dataclass(frozen=True)
class Split:
    train: Dataset
    test: Dataset


def select_features(d: Dataset, f: FeatureSet) -> Dataset:
    f.validate(d.p)
    cols = list(f.columns)
    return Dataset(d.features[:, cols], d.labels, tuple(d.feature_names[c] for c in cols),
                   d.class_names, d.row_ids)


def allocate_proportional(counts: Sequence[int], n_target: int) -> np.ndarray:
    """Split ``n_target`` across classes in proportion to ``counts``.

    Largest-remainder (Hamilton) rounding: floors first, then the leftover
    units go to the largest fractional parts, lower class id first on ties.
    The result differs from the exact quota by less than one per class.
    """
    counts = np.asarray(counts, dtype=np.int64)
    n = int(counts.sum())
    if n == 0:
        if n_target:
            raise InfeasibleSubsampleError(f"cannot allocate {n_target} rows across empty classes")
        return np.zeros(counts.size, dtype=np.int64)
    quotas = [divmod(int(c) * int(n_target), n) for c in counts]
    alloc = np.array([q[0] for q in quotas], dtype=np.int64)
    left = int(n_target) - int(alloc.sum())
    # exact integer remainders avoid float ties
    order = sorted(range(len(counts)), key=lambda i: (-quotas[i][1], i))
    for i in order[:left]:
        alloc[i] += 1
    return alloc


def _sample_per_class(d: Dataset, per_class: np.ndarray, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    chosen = []
    for c in range(d.n_classes):
        members = np.flatnonzero(d.labels == c)
        k = int(per_class[c])
        if k > members.size:
            raise InfeasibleSubsampleError(
                f"class {d.class_names[c]!r} has {members.size} instances, {k} requested")
        if k:
            chosen.append(rng.permutation(members)[:k])
    rows = np.sort(np.concatenate(chosen)) if chosen else np.empty(0, dtype=np.intp)
    return rows


def stratified_subsample(d: Dataset, n_target=None, mode: str = "proportional", seed: int = 0,
                         per_class_counts: Sequence[int] | None = None) -> Dataset:
    """Stratified sample without replacement.

    In ``proportional`` mode ``n_target`` is split across classes by
    :func:`allocate_proportional`; in ``per-class-counts`` mode the counts
    are given directly. Selected rows keep their original order.
    """
    counts = d.class_counts()
    if mode == "proportional":
        if n_target is None or int(n_target) < 1:
            raise InfeasibleSubsampleError(f"n_target must be >= 1, got {n_target}")
        if int(n_target) > d.n:
            raise InfeasibleSubsampleError(f"n_target={n_target} exceeds n={d.n}")
        per_class = allocate_proportional(counts, int(n_target))
    elif mode == "per-class-counts":
        if per_class_counts is None or len(per_class_counts) != d.n_classes:
            raise InvalidArgumentError("per-class-counts mode needs one count per class")
        per_class = np.asarray(per_class_counts, dtype=np.int64)
        if per_class.sum() < 1:
            raise InfeasibleSubsampleError("empty subsample requested")
    else:
        raise InvalidArgumentError(f"unknown subsample mode {mode!r}")
    emptied = [d.class_names[c] for c in range(d.n_classes) if counts[c] > 0 and per_class[c] < 1]
    if emptied:
        raise InfeasibleSubsampleError(
            f"subsample of size {int(per_class.sum())} would empty classes {emptied}")
    return d.take(_sample_per_class(d, per_class, seed))


def stratified_split(d: Dataset, test_fraction: float, seed: int) -> Split:
    """Stratified holdout split. Each class keeps at least one row on each side."""
    if not 0.0 < test_fraction < 1.0:
        raise InvalidArgumentError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    counts = d.class_counts()
    if np.any(counts[counts > 0] < 2):
        raise InfeasibleSubsampleError("every class needs at least 2 instances to split")
    n_test = round_half_up(test_fraction * d.n)
    per_class = allocate_proportional(counts, n_test)
    present = counts > 0
    per_class[present] = np.clip(per_class[present], 1, counts[present] - 1)
    test_rows = _sample_per_class(d, per_class, seed)
    mask = np.ones(d.n, dtype=bool)
    mask[test_rows] = False
    return Split(train=d.take(np.flatnonzero(mask)), test=d.take(test_rows))


def downsample_class(d: Dataset, target_class: int, ratio: float, seed: int) -> Dataset:
    """Keep ``round(ratio * count)`` rows of ``target_class``; other classes untouched."""
    if not 0 <= target_class < d.n_classes:
        raise InvalidArgumentError(f"target_class {target_class} outside 0..{d.n_classes - 1}")
    if not 0.0 < ratio <= 1.0:
        raise InvalidArgumentError(f"ratio must lie in (0, 1], got {ratio}")
    counts = d.class_counts()
    keep = round_half_up(ratio * counts[target_class])
    if keep < 1:
        raise InfeasibleSubsampleError(
            f"ratio {ratio} would empty class {d.class_names[target_class]!r}")
    if keep == counts[target_class]:
        return d
    per_class = counts.copy()
    per_class[target_class] = keep
    return d.take(_sample_per_class(d, per_class, seed))
