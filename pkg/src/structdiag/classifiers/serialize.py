"""Versioned JSON documents for trained models."""

from __future__ import annotations

import json

import numpy as np

from ..errors import SchemaError
from .forest import ForestModel, Tree
from .logistic import LogitModel
from .spec import ClassifierSpec

FORMAT = "structdiag-model"
VERSION = 1


def model_to_dict(model) -> dict:
    doc = {"format": FORMAT, "version": VERSION}
    if isinstance(model, ForestModel):
        doc.update({
            "kind": "random-forest",
            "spec": model.spec.to_dict(),
            "seed": int(model.seed),
            "mtry": int(model.mtry),
            "n_train": int(model.n_train),
            "class_names": list(model.class_names),
            "feature_names": list(model.feature_names),
            "trees": [{
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "leaf_class": t.leaf_class.tolist(),
                "oob": oob.tolist(),
            } for t, oob in zip(model.trees, model.oob_indices)],
        })
    elif isinstance(model, LogitModel):
        doc.update({
            "kind": "l1-logistic",
            "lambda": model.lam,
            "converged": bool(model.converged),
            "objective": model.objective,
            "n_iter": int(model.n_iter),
            "class_names": list(model.class_names),
            "feature_names": list(model.feature_names),
            "weights": model.weights.tolist(),
            "intercepts": model.intercepts.tolist(),
        })
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return doc


def model_from_dict(doc: dict):
    if doc.get("format") != FORMAT:
        raise SchemaError("not a structdiag model document")
    if doc.get("version") != VERSION:
        raise SchemaError(f"unsupported model document version {doc.get('version')!r}")
    kind = doc.get("kind")
    if kind == "random-forest":
        trees, oobs = [], []
        for t in doc["trees"]:
            trees.append(Tree(np.asarray(t["feature"], dtype=np.intp),
                              np.asarray(t["threshold"], dtype=np.float64),
                              np.asarray(t["left"], dtype=np.intp),
                              np.asarray(t["right"], dtype=np.intp),
                              np.asarray(t["leaf_class"], dtype=np.intp)))
            oobs.append(np.asarray(t["oob"], dtype=np.intp))
        return ForestModel(trees=trees, oob_indices=oobs, n_features=len(doc["feature_names"]),
                           class_names=tuple(doc["class_names"]),
                           feature_names=tuple(doc["feature_names"]), n_train=doc["n_train"],
                           spec=ClassifierSpec.from_dict(doc["spec"]), seed=doc["seed"],
                           mtry=doc["mtry"])
    if kind == "l1-logistic":
        return LogitModel(weights=np.asarray(doc["weights"], dtype=np.float64),
                          intercepts=np.asarray(doc["intercepts"], dtype=np.float64),
                          lam=doc["lambda"], converged=doc["converged"],
                          objective=doc["objective"], n_iter=doc["n_iter"],
                          class_names=tuple(doc["class_names"]),
                          feature_names=tuple(doc["feature_names"]))
    raise SchemaError(f"unknown model kind {kind!r}")


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
