import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_trial
from pedcross.domain import FeatureSetSpec, Participant
from pedcross.evaluation import (
    accuracy,
    cross_validate,
    f1,
    fit_fold,
    mae,
    make_folds,
    rmse,
    task_metrics,
)
from pedcross.features import encode
from pedcross.models import ModelSpec


def test_accuracy_examples():
    assert accuracy([1, 1, 0, 0], [1, 1, 0, 0]) == 1.0
    assert accuracy([1, 0], [0, 1]) == 0.0
    assert accuracy([1, 1, 1, 0], [1, 0, 1, 0]) == 0.75


def test_f1_examples():
    # TP=2, FP=1, FN=1
    assert f1([1, 1, 0, 1, 0], [1, 1, 1, 0, 0]) == pytest.approx(2 / 3, abs=1e-15)
    assert f1([1, 0, 1], [1, 0, 1]) == 1.0
    assert f1([0, 0], [0, 0]) == 1.0
    assert f1([0, 0], [1, 0]) == 0.0


def test_regression_metric_examples():
    assert mae([1, 2], [1, 3]) == 0.5
    assert mae([4, 5], [4, 5]) == 0.0
    assert mae([0], [-2]) == 2.0
    assert rmse([0, 0], [3, 4]) == pytest.approx(math.sqrt(12.5), abs=1e-15)
    assert rmse([1, 2], [1, 2]) == 0.0
    assert rmse([1, 2, 3], [1.5, 2.5, 3.5]) == mae([1, 2, 3], [1.5, 2.5, 3.5]) == 0.5


@pytest.mark.parametrize("fn", [accuracy, f1, mae, rmse])
def test_metric_input_errors(fn):
    with pytest.raises(ValueError):
        fn([], [])
    with pytest.raises(ValueError):
        fn([1, 0], [1])


def test_label_metrics_reject_non_binary():
    with pytest.raises(ValueError):
        accuracy([0, 2], [0, 1])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6)), min_size=1, max_size=50))
def test_rmse_never_below_mae(pairs):
    y, p = zip(*pairs)
    assert rmse(y, p) >= mae(y, p) * (1 - 1e-12)


def test_fold_sizes():
    assert make_folds(10, 5, 0).sizes() == [2] * 5
    assert sorted(make_folds(1279, 5, 0).sizes()) == [255, 256, 256, 256, 256]
    assert make_folds(50, 5, 3) == make_folds(50, 5, 3)
    assert make_folds(50, 5, 3).assignments != make_folds(50, 5, 4).assignments
    with pytest.raises(ValueError):
        make_folds(3, 5, 0)
    with pytest.raises(ValueError):
        make_folds(10, 1, 0)


def test_folds_partition_without_overlap():
    plan = make_folds(97, 5, 1)
    seen = np.concatenate([plan.test_indices(f) for f in range(5)])
    assert sorted(seen.tolist()) == list(range(97))
    for f in range(5):
        assert not set(plan.test_indices(f)) & set(plan.train_indices(f))


def test_grouped_folds_keep_pairs_together(small_trials):
    groups = [t.pair_id for t in small_trials]
    plan = make_folds(len(groups), 4, 0, groups=groups)
    fold_of = {}
    for g, a in zip(groups, plan.assignments):
        assert fold_of.setdefault(g, a) == a


def _planted_trials(trials):
    return [make_trial(pair_id=t.pair_id, tta=t.tta, waiting_time=t.waiting_time, location=t.location,
                       decision=int(t.tta >= 5), driver=t.driver, pedestrian=t.pedestrian)
            for t in trials]


def test_report_structure_and_aggregation(small_trials):
    plan = make_folds(len(small_trials), 5, 0)
    r = cross_validate(small_trials, FeatureSetSpec.named("ours"), ModelSpec("lr", "classify"), "decision", plan)
    assert r.strata["zebra"]["n"] + r.strata["non_zebra"]["n"] == r.strata["total"]["n"] == len(small_trials)
    for m in ("acc", "f1"):
        vals = [f[m] for f in r.per_fold]
        assert min(vals) <= r.aggregate[m] <= max(vals)
    assert r.strata["total"]["acc"] == accuracy(r.truth, r.predictions)
    assert [e["tta"] for e in r.by_tta] == [3.0, 4.0, 5.0, 6.0, 7.0]
    assert sum(e["n"] for e in r.by_tta) == len(small_trials)
    d = r.to_dict()
    assert set(d) == {"task", "feature_set", "model", "k", "seed", "per_fold", "aggregate", "strata", "by_tta", "counts"}
    assert d["model"] == "lr" and d["counts"]["positives"] == int(r.truth.sum())


def test_majority_predictor_matches_majority_fraction():
    rng = np.random.default_rng(5)
    trials = [make_trial(decision=int(rng.random() < 0.7)) for _ in range(200)]
    plan = make_folds(len(trials), 5, 0)
    r = cross_validate(trials, FeatureSetSpec.named("subset4"), ModelSpec("lr", "classify"), "decision", plan)
    majority = max(np.mean(r.truth), 1 - np.mean(r.truth))
    assert abs(r.aggregate["acc"] - majority) <= 0.01


def test_regression_needs_crossing_trials(small_trials):
    plan = make_folds(len(small_trials), 5, 0)
    with pytest.raises(ValueError, match="crossing"):
        cross_validate(small_trials, FeatureSetSpec.named("ours"), ModelSpec("lr", "regress"), "cit", plan)
    with pytest.raises(ValueError):
        cross_validate(small_trials, FeatureSetSpec.named("ours"), ModelSpec("lr", "regress"), "decision", plan)


def test_regression_report(small_trials):
    crossing = [t for t in small_trials if t.outcome.decision == 1]
    plan = make_folds(len(crossing), 5, 0)
    r = cross_validate(crossing, FeatureSetSpec.named("ours_delta"), ModelSpec("rf", "regress"), "cd", plan)
    assert set(r.aggregate) == {"mae", "rmse"}
    assert r.strata["total"]["mae"] == task_metrics("cd", r.truth, r.scores)["mae"]
    assert "positives" not in r.counts


@pytest.mark.parametrize("family", ["lr", "svm", "rf", "mlp"])
def test_test_fold_targets_do_not_reach_training(small_trials, family):
    design = encode(small_trials, FeatureSetSpec.named("ours"))
    y = np.array([t.outcome.decision for t in small_trials], dtype=float)
    plan = make_folds(len(y), 5, 0)
    tr, te = plan.train_indices(0), plan.test_indices(0)
    spec = ModelSpec(family, "classify", {"epochs": 50} if family in ("mlp", "svm") else {}, 1)
    model_a, _ = fit_fold(design, y, tr, spec)
    y_mut = y.copy()
    y_mut[te] = 1 - y_mut[te]
    model_b, _ = fit_fold(design, y_mut, tr, spec)
    pa = model_a.parameters
    pb = model_b.parameters
    if family == "rf":
        for ta, tb in zip(pa["trees"], pb["trees"]):
            assert ta.to_dict() == tb.to_dict()
    elif family == "mlp":
        for (wa, ba), (wb, bb) in zip(pa["layers"], pb["layers"]):
            assert np.array_equal(wa, wb) and np.array_equal(ba, bb)
    else:
        assert np.array_equal(pa["weights"], pb["weights"]) and pa["bias"] == pb["bias"]


def test_planted_tta_rule_is_recovered(small_trials):
    trials = _planted_trials(small_trials)
    plan = make_folds(len(trials), 5, 0)
    r = cross_validate(trials, FeatureSetSpec.named("subset4"), ModelSpec("rf", "classify"), "decision", plan)
    assert r.strata["total"]["acc"] >= 0.99
