"""Model specs, training dispatch, prediction, importance and serialization."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from ..errors import (
    ConfigError,
    ModelFileError,
    ModelVersionError,
    ShapeError,
    UnsupportedFamilyError,
)
from ..features import ColumnMeta, DesignMatrix
from . import forest, linear, mlp, svm

log = logging.getLogger(__name__)

FAMILIES = ("logistic_or_linear", "svm_linear", "random_forest", "mlp")
ALIASES = {"lr": "logistic_or_linear", "svm": "svm_linear", "rf": "random_forest", "mlp": "mlp"}
SHORT_NAMES = {v: k for k, v in ALIASES.items()}
MODEL_TASKS = ("classify", "regress")

DEFAULT_HYPERPARAMS: dict[str, dict[str, Any]] = {
    "logistic_or_linear": {"l2": 1e-4, "learning_rate": 0.1, "max_iter": 2000, "tol": 1e-8},
    "svm_linear": {"C": 1.0, "epochs": 2000},
    "random_forest": {
        "n_estimators": 100, "max_depth": 5, "max_features": None,
        "min_samples_leaf": 1, "bootstrap": True,
    },
    "mlp": {
        "hidden": [16, 4], "learning_rate": 0.01, "epochs": 500,
        "beta1": 0.9, "beta2": 0.999, "eps": 1e-8,
    },
}

FORMAT_NAME = "pedcross-model"
FORMAT_VERSION = 1


def resolve_family(name: str) -> str:
    fam = ALIASES.get(name, name)
    if fam not in FAMILIES:
        raise ConfigError("family", f"unknown model family {name!r}")
    return fam


@dataclass(frozen=True)
class ModelSpec:
    family: str
    task: str
    hyperparams: Mapping[str, Any] = field(default_factory=dict)
    rng_seed: int = 0

    def __post_init__(self):
        fam = resolve_family(self.family)
        object.__setattr__(self, "family", fam)
        if self.task not in MODEL_TASKS:
            raise ConfigError("task", f"must be one of {MODEL_TASKS}, got {self.task!r}")
        if fam == "svm_linear" and self.task != "classify":
            raise ConfigError("task", "svm_linear supports classification only")
        unknown = set(self.hyperparams) - set(DEFAULT_HYPERPARAMS[fam])
        if unknown:
            raise ConfigError("hyperparams", f"unknown keys for {fam}: {sorted(unknown)}")
        hp = {**DEFAULT_HYPERPARAMS[fam], **self.hyperparams}
        if fam == "random_forest":
            if hp["n_estimators"] < 1:
                raise ConfigError("hyperparams.n_estimators", "must be >= 1")
            if hp["max_depth"] < 1:
                raise ConfigError("hyperparams.max_depth", "must be >= 1")
        if fam == "mlp":
            hp["hidden"] = [int(h) for h in hp["hidden"]]
            if any(h < 1 for h in hp["hidden"]):
                raise ConfigError("hyperparams.hidden", "all hidden sizes must be >= 1")
        object.__setattr__(self, "hyperparams", hp)
        if not (0 <= int(self.rng_seed) < 2**64):
            raise ConfigError("rng_seed", "must be an unsigned 64-bit integer")

    @property
    def classify(self) -> bool:
        return self.task == "classify"

    def to_dict(self) -> dict:
        return {"family": self.family, "task": self.task,
                "hyperparams": dict(self.hyperparams), "rng_seed": int(self.rng_seed)}

    @classmethod
    def from_dict(cls, d) -> "ModelSpec":
        return cls(d["family"], d["task"], dict(d.get("hyperparams", {})), int(d.get("rng_seed", 0)))


@dataclass
class TrainedModel:
    spec: ModelSpec
    parameters: dict
    metadata: dict
    column_meta: tuple[ColumnMeta, ...]


def _as_arrays(X):
    if isinstance(X, DesignMatrix):
        return X.rows
    return np.asarray(X, dtype=float)


def train(spec: ModelSpec, X: DesignMatrix, y) -> TrainedModel:
    """Fit ``spec`` on ``X``; classification targets must be 0/1."""
    Xa = _as_arrays(X)
    y = np.asarray(y, dtype=float)
    if Xa.shape[0] == 0:
        raise ValueError("cannot train on an empty design matrix")
    if y.shape != (Xa.shape[0],):
        raise ShapeError(f"target length {y.shape} does not match {Xa.shape[0]} rows")
    if spec.classify:
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("classification targets must be 0 or 1")
        if np.unique(y).size < 2:
            log.warning("training data for %s contains a single class", spec.family)
    elif not np.all(np.isfinite(y)):
        raise ValueError("regression targets must be finite")
    hp = dict(spec.hyperparams)
    fam = spec.family
    if fam == "logistic_or_linear":
        w, b, info = linear.fit(Xa, y, classify=spec.classify, **hp)
        params = {"weights": w, "bias": b}
    elif fam == "svm_linear":
        w, b, info = svm.fit(Xa, y, **hp)
        params = {"weights": w, "bias": b}
    elif fam == "random_forest":
        trees, info = forest.fit(Xa, y, classify=spec.classify, seed=int(spec.rng_seed), **hp)
        params = {"trees": trees}
    else:
        hidden = hp.pop("hidden")
        layers, info = mlp.fit(Xa, y, classify=spec.classify, seed=int(spec.rng_seed),
                               hidden=tuple(hidden), **hp)
        params = {"layers": layers}
    meta = X.column_meta if isinstance(X, DesignMatrix) else tuple(ColumnMeta(f"x{j}") for j in range(Xa.shape[1]))
    return TrainedModel(spec, params, info, tuple(meta))


def _check_columns(model: TrainedModel, X):
    if isinstance(X, DesignMatrix):
        if tuple(X.column_meta) != tuple(model.column_meta):
            raise ShapeError("design matrix columns do not match the model's training columns")
    elif np.asarray(X).shape[1] != len(model.column_meta):
        raise ShapeError("input width does not match the model's training columns")


def predict(model: TrainedModel, X) -> np.ndarray:
    """P(cross) for classifiers, real-valued predictions for regressors."""
    _check_columns(model, X)
    Xa = _as_arrays(X)
    p = model.parameters
    fam = model.spec.family
    if fam in ("logistic_or_linear", "svm_linear"):
        z = linear.decision_function(Xa, p["weights"], p["bias"])
        # SVM margins are mapped through the logistic link so 0.5 <=> margin 0
        return linear.sigmoid(z) if model.spec.classify else z
    if fam == "random_forest":
        return forest.predict(p["trees"], Xa)
    out, _ = mlp.forward(p["layers"], Xa)
    return linear.sigmoid(out) if model.spec.classify else out


def classify(model: TrainedModel, X, threshold: float = 0.5) -> np.ndarray:
    """Hard labels: 1 iff score > threshold (ties go to 0, i.e. wait)."""
    if not model.spec.classify:
        raise ValueError("classify() needs a classification model")
    return (predict(model, X) > threshold).astype(int)


def mlp_gradient(model: TrainedModel, X, y):
    """Exact gradient of the MLP's mean training loss at its current parameters."""
    if model.spec.family != "mlp":
        raise UnsupportedFamilyError("mlp_gradient requires an mlp model")
    _, grads = mlp.loss_and_gradient(model.parameters["layers"], _as_arrays(X), y, model.spec.classify)
    return grads


def feature_importance(model: TrainedModel) -> list[tuple[str, float]]:
    """Per-source-feature importance shares (sum 1), ranked high to low.

    Linear families use ``|coefficient|`` on standardized inputs, taking the
    max over a one-hot group; forests use mean decrease in impurity summed
    over a group. Ties keep column order.
    """
    fam = model.spec.family
    if fam == "mlp":
        raise UnsupportedFamilyError("feature importance is not defined for mlp models")
    meta = model.column_meta
    if fam == "random_forest":
        per_col = forest.impurity_importance(model.parameters["trees"], len(meta))
        combine = lambda a, b: a + b  # noqa: E731
    else:
        per_col = np.abs(model.parameters["weights"])
        combine = max
    agg: dict[str, float] = {}
    for m, v in zip(meta, per_col):
        agg[m.source] = combine(agg[m.source], float(v)) if m.source in agg else float(v)
    total = sum(agg.values())
    if total > 0:
        agg = {k: v / total for k, v in agg.items()}
    else:
        agg = {k: 1.0 / len(agg) for k in agg}
    return sorted(agg.items(), key=lambda kv: -kv[1])


# Serialization -------------------------------------------------------------------

def _params_to_json(model: TrainedModel) -> dict:
    p = model.parameters
    fam = model.spec.family
    if fam in ("logistic_or_linear", "svm_linear"):
        return {"weights": np.asarray(p["weights"]).tolist(), "bias": float(p["bias"])}
    if fam == "random_forest":
        return {"trees": [t.to_dict() for t in p["trees"]]}
    return {"layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in p["layers"]]}


def _params_from_json(family: str, d: dict) -> dict:
    if family in ("logistic_or_linear", "svm_linear"):
        return {"weights": np.asarray(d["weights"], dtype=float), "bias": float(d["bias"])}
    if family == "random_forest":
        return {"trees": [forest.DecisionTree.from_dict(t) for t in d["trees"]]}
    layers = []
    for layer in d["layers"]:
        W = np.asarray(layer["W"], dtype=float)
        b = np.asarray(layer["b"], dtype=float)
        if W.ndim != 2 or b.shape != (W.shape[1],):
            raise ModelFileError("inconsistent MLP layer shapes")
        layers.append((W, b))
    return {"layers": layers}


def model_to_dict(model: TrainedModel) -> dict:
    return {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "spec": model.spec.to_dict(),
        "column_meta": [m.to_dict() for m in model.column_meta],
        "parameters": _params_to_json(model),
        "metadata": model.metadata,
    }


def save_model(model: TrainedModel, path) -> None:
    from ..util import dumps

    Path(path).write_text(dumps(model_to_dict(model)), encoding="utf-8")


def load_model(path) -> TrainedModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}: corrupt model file ({exc})") from None
    except UnicodeDecodeError:
        raise ModelFileError(f"{path}: corrupt model file (not UTF-8)") from None
    if not isinstance(d, dict) or d.get("format") != FORMAT_NAME:
        raise ModelFileError(f"{path}: not a {FORMAT_NAME} file")
    version = d.get("format_version")
    if not isinstance(version, int):
        raise ModelFileError(f"{path}: missing format_version")
    if version != FORMAT_VERSION:
        raise ModelVersionError(
            f"{path}: format_version {version} is not supported (this build reads {FORMAT_VERSION})"
        )
    try:
        spec = ModelSpec.from_dict(d["spec"])
        meta = tuple(ColumnMeta.from_dict(m) for m in d["column_meta"])
        params = _params_from_json(spec.family, d["parameters"])
        metadata = dict(d.get("metadata", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"{path}: malformed model file ({exc})") from None
    return TrainedModel(spec, params, metadata, meta)
