"""Random Forest with out-of-bag error and permutation importance.

Each tree is grown on a bootstrap sample of size n. At every node a fresh
set of ``mtry`` features is drawn with replacement (duplicates collapse)
and the split minimising weighted Gini impurity is chosen; nodes are split
until pure or at most ``min_leaf`` rows remain. All randomness for tree
``t`` comes from ``derive_seed(seed, "tree", t)``, so forests are identical
whatever the thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import _kernels
from ..data import Dataset, derive_seed
from ..errors import DegenerateModelError, OOBUnavailableError, ShapeError
from .spec import ClassifierSpec

__all__ = [
    "Tree",
    "ForestModel",
    "ImportanceProfile",
    "train_random_forest",
    "predict_forest",
    "oob_votes",
    "oob_error",
    "permutation_importance",
]


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_class: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def arrays(self):
        return self.feature, self.threshold, self.left, self.right, self.leaf_class

    def apply(self, X, rows=None, perm_col=-1, perm_values=None) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if rows is None:
            rows = np.arange(X.shape[0], dtype=np.intp)
        return _kernels.apply_tree(*self.arrays(), X, rows, perm_col, perm_values)

    def same_structure(self, other: "Tree") -> bool:
        """Topology, split features and leaf classes agree (thresholds ignored)."""
        return (np.array_equal(self.feature, other.feature)
                and np.array_equal(self.left, other.left)
                and np.array_equal(self.right, other.right)
                and np.array_equal(self.leaf_class, other.leaf_class))

    def __eq__(self, other):
        return (isinstance(other, Tree) and self.same_structure(other)
                and np.array_equal(self.threshold, other.threshold))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: list
    oob_indices: list
    n_features: int
    class_names: tuple
    feature_names: tuple
    n_train: int
    spec: ClassifierSpec
    seed: int
    mtry: int

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


@dataclass(frozen=True, eq=False)
class ImportanceProfile:
    """Per-feature importance; rank 1 is the most important feature.

    Rank ties are broken by feature order.
    """

    feature_names: tuple
    importance: np.ndarray
    stderr: np.ndarray = field(default=None)

    @property
    def ranks(self) -> np.ndarray:
        order = np.lexsort((np.arange(self.importance.size), -self.importance))
        ranks = np.empty(self.importance.size, dtype=np.intp)
        ranks[order] = np.arange(1, self.importance.size + 1)
        return ranks

    def entries(self) -> list[dict]:
        ranks = self.ranks
        return [{"name": n, "importance": float(v), "rank": int(r)}
                for n, v, r in zip(self.feature_names, self.importance, ranks)]


def _grow_one(X, y, n_classes, mtry, min_leaf, seed, t):
    n, p = X.shape
    rng = np.random.default_rng(derive_seed(seed, "tree", t))
    bag = rng.integers(0, n, size=n)
    draws = rng.integers(0, p, size=(2 * n - 1, mtry))
    tree = Tree(*_kernels.build_tree(X, y, bag, draws, n_classes, min_leaf))
    in_bag = np.zeros(n, dtype=bool)
    in_bag[bag] = True
    return tree, np.flatnonzero(~in_bag)


def _map_ordered(fn, items, threads):
    """Apply ``fn`` over items, results in item order regardless of scheduling."""
    if threads is None or threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def train_random_forest(d: Dataset, spec: ClassifierSpec | None = None, seed: int = 0,
                        threads: int = 1) -> ForestModel:
    spec = spec or ClassifierSpec()
    if d.n < 2:
        raise DegenerateModelError("random forest needs at least 2 rows")
    if np.count_nonzero(d.class_counts()) < 2:
        raise DegenerateModelError("training data contains a single class")
    mtry = spec.resolved_mtry(d.p)
    X, y = d.features, d.labels
    grown = _map_ordered(
        lambda t: _grow_one(X, y, d.n_classes, mtry, spec.min_leaf, seed, t),
        range(spec.n_trees), threads)
    return ForestModel(trees=[g[0] for g in grown], oob_indices=[g[1] for g in grown],
                       n_features=d.p, class_names=d.class_names,
                       feature_names=d.feature_names, n_train=d.n, spec=spec,
                       seed=seed, mtry=mtry)


def _check_X(model: ForestModel, X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1 and X.size == 0:
        X = X.reshape(0, model.n_features)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ShapeError(f"model expects {model.n_features} features, got shape {X.shape}")
    return X


def predict_forest(model: ForestModel, X, threads: int = 1):
    """Majority vote over trees; returns ``(labels, vote_fractions)``."""
    X = _check_X(model, X)
    k = X.shape[0]
    votes = np.zeros((k, model.n_classes), dtype=np.int64)
    if k:
        rows = np.arange(k, dtype=np.intp)
        preds = _map_ordered(lambda t: model.trees[t].apply(X, rows), range(len(model.trees)), threads)
        for pred in preds:
            votes[rows, pred] += 1
    labels = np.argmax(votes, axis=1).astype(np.intp) if k else np.empty(0, dtype=np.intp)
    return labels, votes / len(model.trees)


def _check_training_data(model: ForestModel, d: Dataset):
    if d.n != model.n_train or d.p != model.n_features:
        raise ShapeError("dataset does not match the data the forest was trained on")


def oob_votes(model: ForestModel, d: Dataset) -> np.ndarray:
    """Vote counts from trees whose bag excludes each row."""
    _check_training_data(model, d)
    votes = np.zeros((d.n, model.n_classes), dtype=np.int64)
    for tree, oob in zip(model.trees, model.oob_indices):
        if oob.size:
            votes[oob, tree.apply(d.features, oob)] += 1
    return votes


def oob_error(model: ForestModel, d: Dataset, return_coverage: bool = False):
    """Out-of-bag error over rows that are out of bag for at least one tree.

    With ``return_coverage`` also returns ``(n_covered, n_skipped)``.
    """
    votes = oob_votes(model, d)
    covered = votes.sum(axis=1) > 0
    n_cov = int(covered.sum())
    if n_cov == 0:
        raise OOBUnavailableError("no row is out of bag for any tree")
    pred = np.argmax(votes[covered], axis=1)
    err = float(np.mean(pred != d.labels[covered]))
    if return_coverage:
        return err, n_cov, d.n - n_cov
    return err


def _tree_drops(tree, oob, X, y, p, repeats, seed, t):
    base = np.mean(tree.apply(X, oob) == y[oob])
    drops = np.zeros((repeats, p))
    rng = np.random.default_rng(derive_seed(seed, "perm", t))
    for r in range(repeats):
        for j in range(p):
            perm = rng.permutation(X[oob, j])
            acc = np.mean(tree.apply(X, oob, j, perm) == y[oob])
            drops[r, j] = base - acc
    return drops


def permutation_importance(model: ForestModel, d: Dataset, repeats: int = 1, seed: int = 0,
                           threads: int = 1) -> ImportanceProfile:
    """Mean per-tree drop in OOB accuracy after permuting one feature.

    For each tree, feature column j is permuted among that tree's out-of-bag
    rows only; drops are averaged over trees and ``repeats``. Negative
    values are kept.
    """
    _check_training_data(model, d)
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    usable = [t for t, oob in enumerate(model.oob_indices) if oob.size]
    if not usable:
        raise OOBUnavailableError("no tree has out-of-bag rows")
    X, y, p = d.features, d.labels, d.p
    per_tree = _map_ordered(
        lambda t: _tree_drops(model.trees[t], model.oob_indices[t], X, y, p, repeats, seed, t),
        usable, threads)
    stacked = np.concatenate(per_tree, axis=0)
    se = stacked.std(axis=0, ddof=1) / np.sqrt(stacked.shape[0]) if stacked.shape[0] > 1 else None
    return ImportanceProfile(d.feature_names, stacked.mean(axis=0), se)
