"""Built-in classifiers behind a uniform fit/predict contract."""

from .forest import (
    ForestModel,
    ImportanceProfile,
    Tree,
    oob_error,
    oob_votes,
    permutation_importance,
    predict_forest,
    train_random_forest,
)
from .logistic import LogitModel, logistic_loss, predict_logit, train_l1_logistic
from .serialize import load_model, model_from_dict, model_to_dict, save_model
from .spec import ClassifierSpec

__all__ = [
    "ClassifierSpec",
    "ForestModel",
    "ImportanceProfile",
    "LogitModel",
    "Tree",
    "fit",
    "predict",
    "logistic_loss",
    "oob_error",
    "oob_votes",
    "permutation_importance",
    "predict_forest",
    "predict_logit",
    "train_l1_logistic",
    "train_random_forest",
    "load_model",
    "save_model",
    "model_from_dict",
    "model_to_dict",
]


def fit(d, spec: ClassifierSpec, seed: int, threads: int = 1):
    if spec.kind == "random-forest":
        return train_random_forest(d, spec, seed, threads=threads)
    return train_l1_logistic(d, spec, seed)


def predict(model, X, threads: int = 1):
    """Predicted labels plus per-class vote fractions or probabilities."""
    if isinstance(model, ForestModel):
        return predict_forest(model, X, threads=threads)
    if isinstance(model, LogitModel):
        return predict_logit(model, X)
    raise TypeError(f"unsupported model type {type(model).__name__}")
