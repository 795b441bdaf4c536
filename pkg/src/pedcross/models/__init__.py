"""From-scratch model families: logistic/linear regression, linear SVM, random forest, MLP."""
from .base import (
    ALIASES,
    DEFAULT_HYPERPARAMS,
    FAMILIES,
    FORMAT_VERSION,
    SHORT_NAMES,
    ModelSpec,
    TrainedModel,
    classify,
    feature_importance,
    load_model,
    mlp_gradient,
    predict,
    resolve_family,
    save_model,
    train,
)
from .forest import DecisionTree

__all__ = [
    "ALIASES", "DEFAULT_HYPERPARAMS", "FAMILIES", "FORMAT_VERSION", "SHORT_NAMES",
    "DecisionTree", "ModelSpec", "TrainedModel", "classify", "feature_importance",
    "load_model", "mlp_gradient", "predict", "resolve_family", "save_model", "train",
]
