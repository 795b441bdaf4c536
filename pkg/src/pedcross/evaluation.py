"""K-fold cross-validation, the four outcome metrics, and stratified reports."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .domain import FeatureSetSpec, Trial, target_value
from .features import apply_standardizer, encode, fit_standardizer
from .models import ModelSpec, SHORT_NAMES, TrainedModel, classify, predict, train

log = logging.getLogger(__name__)

TASK_KIND = {"decision": "classify", "cit": "regress", "cd": "regress"}
CLASSIFY_METRICS = ("acc", "f1")
REGRESS_METRICS = ("mae", "rmse")


# Metrics ----------------------------------------------------------------------

def _pair(a, b):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0:
        raise ValueError("metric inputs must be non-empty")
    if a.shape != b.shape:
        raise ValueError(f"metric inputs differ in length ({a.size} vs {b.size})")
    return a, b


def _labels(a, b):
    a, b = _pair(a, b)
    for v in (a, b):
        if not np.all((v == 0) | (v == 1)):
            raise ValueError("labels must be 0 or 1")
    return a.astype(bool), b.astype(bool)


def accuracy(labels, predictions) -> float:
    y, p = _labels(labels, predictions)
    return float(np.mean(y == p))


def f1(labels, predictions) -> float:
    """2TP / (2TP + FP + FN); 1.0 when there are no positives at all."""
    y, p = _labels(labels, predictions)
    tp = int(np.sum(y & p))
    fp = int(np.sum(~y & p))
    fn = int(np.sum(y & ~p))
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 1.0
    return 2 * tp / denom


def mae(truth, predictions) -> float:
    y, p = _pair(truth, predictions)
    return float(np.mean(np.abs(p - y)))


def rmse(truth, predictions) -> float:
    y, p = _pair(truth, predictions)
    d = np.abs(p - y)
    scale = d.max()
    if scale == 0.0 or not np.isfinite(scale):
        return float(scale)
    # scaling by the largest error keeps squares clear of underflow and overflow
    return float(scale * np.sqrt(np.mean((d / scale) ** 2)))


def task_metrics(task: str, y, pred) -> dict:
    if TASK_KIND[task] == "classify":
        return {"acc": accuracy(y, pred), "f1": f1(y, pred)}
    return {"mae": mae(y, pred), "rmse": rmse(y, pred)}


# Folds --------------------------------------------------------------------------

@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: tuple[int, ...]
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.assignments) == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.assignments) != fold)

    def sizes(self) -> list[int]:
        return np.bincount(np.asarray(self.assignments), minlength=self.k).tolist()


def make_folds(n: int, k: int = 5, seed: int = 0, groups: Optional[Sequence] = None) -> FoldPlan:
    """Seeded shuffle then round-robin fold assignment.

    With ``groups`` the shuffle and assignment run over distinct group labels,
    so every member of a group shares a fold (sizes may then differ by more
    than one).
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if n < k:
        raise ValueError(f"need at least k={k} items, got n={n}")
    rng = np.random.default_rng(seed)
    if groups is None:
        perm = rng.permutation(n)
        assign = np.empty(n, dtype=int)
        assign[perm] = np.arange(n) % k
    else:
        groups = list(groups)
        if len(groups) != n:
            raise ValueError("groups must have one label per item")
        uniq = sorted(set(groups))
        if len(uniq) < k:
            raise ValueError(f"need at least k={k} groups, got {len(uniq)}")
        order = rng.permutation(len(uniq))
        gfold = {uniq[g]: i % k for i, g in enumerate(order)}
        assign = np.array([gfold[g] for g in groups], dtype=int)
    return FoldPlan(k, tuple(int(a) for a in assign), seed)


# Cross-validation ---------------------------------------------------------------

@dataclass
class EvaluationReport:
    task: str
    feature_set: str
    model: str
    k: int
    seed: int
    per_fold: list
    aggregate: dict
    strata: dict
    by_tta: list
    counts: dict
    # pooled out-of-fold predictions, not serialized
    truth: np.ndarray = field(repr=False, default=None)
    scores: np.ndarray = field(repr=False, default=None)
    predictions: np.ndarray = field(repr=False, default=None)
    locations: np.ndarray = field(repr=False, default=None)
    ttas: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "feature_set": self.feature_set,
            "model": self.model,
            "k": self.k,
            "seed": self.seed,
            "per_fold": self.per_fold,
            "aggregate": self.aggregate,
            "strata": self.strata,
            "by_tta": self.by_tta,
            "counts": self.counts,
        }


def task_targets(trials: Sequence[Trial], task: str) -> np.ndarray:
    vals = [target_value(t, task) for t in trials]
    if any(v is None for v in vals):
        raise ValueError(f"task {task!r} needs every trial to carry the target; filter to crossing trials first")
    return np.asarray(vals, dtype=float)


def fit_fold(design, y, train_idx, model_spec: ModelSpec):
    """Standardize on ``train_idx`` rows and train. Returns ``(model, scaled_matrix)``.

    Only training rows and training targets are read.
    """
    std = fit_standardizer(design, train_idx)
    scaled = apply_standardizer(std, design)
    train_idx = np.asarray(train_idx, dtype=int)
    model = train(model_spec, scaled.take(train_idx), np.asarray(y)[train_idx])
    return model, scaled


def _stratum(task, y, pred, mask) -> dict:
    n = int(mask.sum())
    out = {"n": n}
    if TASK_KIND[task] == "classify":
        out["positives"] = int(y[mask].sum())
        names = CLASSIFY_METRICS
    else:
        names = REGRESS_METRICS
    if n == 0:
        out.update({m: math.nan for m in names})
    else:
        out.update(task_metrics(task, y[mask], pred[mask]))
    return out


def cross_validate(trials: Sequence[Trial], spec: FeatureSetSpec, model_spec: ModelSpec,
                   task: str, plan: FoldPlan, threshold: float = 0.5) -> EvaluationReport:
    """Out-of-fold evaluation of one (features, model, task) cell.

    Headline ``aggregate`` is the unweighted mean of per-fold test metrics;
    ``strata`` and ``by_tta`` are computed on pooled out-of-fold predictions.
    """
    if task not in TASK_KIND:
        raise ValueError(f"unknown task {task!r}")
    if model_spec.task != TASK_KIND[task]:
        raise ValueError(f"model task {model_spec.task!r} does not fit outcome {task!r}")
    if len(plan.assignments) != len(trials):
        raise ValueError("fold plan size does not match number of trials")
    y = task_targets(trials, task)
    design = encode(trials, spec)
    n = len(trials)
    scores = np.full(n, np.nan)
    per_fold = []
    for fold in range(plan.k):
        tr, te = plan.train_indices(fold), plan.test_indices(fold)
        if TASK_KIND[task] == "classify" and np.unique(y[tr]).size < 2:
            log.warning("fold %d training data has a single class", fold)
        model, scaled = fit_fold(design, y, tr, model_spec)
        test = scaled.take(te)
        s = predict(model, test)
        scores[te] = s
        pred = classify(model, test, threshold) if model_spec.classify else s
        entry = {"fold": fold, "n_train": int(tr.size), "n_test": int(te.size)}
        entry.update(task_metrics(task, y[te], pred))
        per_fold.append(entry)

    names = CLASSIFY_METRICS if model_spec.classify else REGRESS_METRICS
    aggregate = {m: float(np.mean([f[m] for f in per_fold])) for m in names}
    pred_all = (scores > threshold).astype(float) if model_spec.classify else scores
    locs = np.array([t.location for t in trials])
    ttas = np.array([t.tta for t in trials], dtype=float)
    strata = {
        "zebra": _stratum(task, y, pred_all, locs == "zebra"),
        "non_zebra": _stratum(task, y, pred_all, locs == "non_zebra"),
        "total": _stratum(task, y, pred_all, np.ones(n, dtype=bool)),
    }
    by_tta = []
    for level in sorted(set(ttas.tolist())):
        entry = {"tta": level}
        entry.update(_stratum(task, y, pred_all, ttas == level))
        by_tta.append(entry)
    counts = {"n": n}
    if model_spec.classify:
        counts["positives"] = int(y.sum())
    return EvaluationReport(
        task=task,
        feature_set=spec.name,
        model=SHORT_NAMES[model_spec.family],
        k=plan.k,
        seed=plan.seed,
        per_fold=per_fold,
        aggregate=aggregate,
        strata=strata,
        by_tta=by_tta,
        counts=counts,
        truth=y,
        scores=scores,
        predictions=pred_all,
        locations=locs,
        ttas=ttas,
    )
