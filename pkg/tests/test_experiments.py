import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pedcross import experiments
from pedcross.errors import ConfigError
from pedcross.experiments import (
    DECISION_TABLE_HEADER,
    DEFAULT_GRID,
    Cell,
    ExperimentPlan,
    FigureData,
    box_stats,
    describe_grid,
    histogram_density,
    load_plan,
    plan_from_dict,
    run_ablation,
    run_plan,
)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_default_grid_matches_published_rows():
    by_task = {}
    for c in DEFAULT_GRID:
        by_task.setdefault(c.task, []).append(c.label)
    assert by_task["decision"] == ["lr/baseline", "lr/ours", "svm/ours", "rf/ours", "mlp/ours"]
    assert by_task["cit"] == ["lr/baseline", "rf/ours_delta", "mlp/ours_delta"]
    assert by_task["cd"] == ["lr/baseline", "rf/ours", "mlp/ours"]


def test_bundled_plan_is_the_default_grid():
    plan = load_plan()
    assert plan.grid == DEFAULT_GRID
    assert len(plan.cells()) == 11
    assert plan.ablation


def test_svm_regression_cell_is_rejected():
    with pytest.raises(ConfigError):
        Cell("cit", "svm", "ours")
    with pytest.raises(ConfigError):
        Cell("decision", "knn", "ours")
    with pytest.raises(ConfigError):
        Cell("decision", "lr", "all")


def test_ablation_cells():
    cells = ExperimentPlan().ablation_cells()
    assert len(cells) == 5 * 3 * 3
    subset_cells = [c for c in cells if c.features.startswith("subset")]
    assert len(subset_cells) == 4 * 3 * 3
    assert {c.features for c in cells if c.task == "cit"} - {"subset1", "subset2", "subset3", "subset4"} == {"ours_delta"}
    assert ExperimentPlan(tasks=("decision",)).ablation_cells()[0] == Cell("decision", "lr", "ours")


def test_plan_parsing(tmp_path):
    d = {"tasks": ["decision"], "dataset": {"csv": "data.csv"}, "cv": {"k": 3, "seed": 4},
         "models": {"seed": 2, "hyperparams": {"rf": {"n_estimators": 7}}},
         "grid": [{"task": "decision", "model": "rf", "features": "subset4"}]}
    plan = plan_from_dict(d, base_dir=tmp_path)
    assert plan.data_path == str(tmp_path / "data.csv")
    assert plan.k == 3 and plan.cv_seed == 4 and plan.model_seed == 2
    assert plan.model_spec(plan.grid[0]).hyperparams["n_estimators"] == 7
    with pytest.raises(ConfigError):
        plan_from_dict({"colour": 1})
    with pytest.raises(ConfigError):
        plan_from_dict({"format_version": 2})
    with pytest.raises(ConfigError):
        plan_from_dict({"grid": [{"task": "decision"}]})
    # the serialised form parses back to the same plan
    assert plan_from_dict(plan.to_dict()) == plan


def test_box_stats_examples():
    fig = box_stats(list(range(1, 10)))
    s = fig.groups["all"]
    assert (s["median"], s["q1"], s["q3"], s["outliers"]) == (5.0, 3.0, 7.0, [])
    assert (s["whisker_low"], s["whisker_high"]) == (1.0, 9.0)
    s = box_stats([1, 1, 1, 1, 100]).groups["all"]
    assert s["outliers"] == [100.0] and s["whisker_high"] == 1.0
    s = box_stats([4.2]).groups["all"]
    assert s["median"] == s["q1"] == s["q3"] == 4.2


def test_box_stats_groups_keep_order():
    fig = box_stats([1, 2, 3, 10, 20], ["b", "a", "b", "a", "b"])
    assert list(fig.groups) == ["b", "a"]
    assert fig.groups["a"]["median"] == 6.0
    with pytest.raises(ValueError):
        box_stats([], [])
    with pytest.raises(ValueError):
        box_stats([1, 2], ["a"])


def test_histogram_examples():
    rng = np.random.default_rng(0)
    h = histogram_density(rng.uniform(0, 1, 100), 10)
    assert len(h.series["density"]) == 10
    width = np.diff(h.series["edges"])[0]
    # mean density is 1 / (observed range), close to 1 for uniform [0, 1]
    assert np.mean(h.series["density"]) == pytest.approx(1.0 / (10 * width), rel=1e-12)
    # bin density sd is about 0.03 at n = 10000; allow five of them
    big = histogram_density(rng.uniform(0, 1, 10000), 10)
    assert all(abs(d - 1.0) < 0.15 for d in big.series["density"])
    one = histogram_density([3.0], 10)
    assert one.series["edges"] == [2.5, 3.5] and one.series["density"] == [1.0]
    with pytest.raises(ValueError):
        histogram_density([], 3)
    with pytest.raises(ValueError):
        histogram_density([1, 2], 0)
    with pytest.raises(ValueError):
        histogram_density([1, 5], 2, value_range=(2, 4))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=80), st.integers(1, 30))
def test_histogram_area_is_one(values, n_bins):
    h = histogram_density(values, n_bins)
    area = float(np.sum(np.array(h.series["density"]) * np.diff(h.series["edges"])))
    assert abs(area - 1.0) <= 1e-9


def test_figure_kind_is_checked():
    with pytest.raises(ValueError):
        FigureData("pie")


@pytest.fixture(scope="module")
def small_run(tmp_path_factory, small_trials):
    out = tmp_path_factory.mktemp("run")
    plan = ExperimentPlan(out_dir=str(out), ablation=False, cv_seed=1, model_seed=1)
    return out, run_plan(plan, small_trials)


def test_run_plan_emits_reports_tables_and_figures(small_run):
    out, result = small_run
    assert result.ok
    reports = sorted(p.name for p in (out / "reports").glob("*.json"))
    assert len(reports) == 11
    assert "cit_rf_ours_delta.json" in reports and "decision_lr_baseline.json" in reports
    table = read_csv(out / "tables" / "decision_main.csv")
    assert tuple(table[0]) == DECISION_TABLE_HEADER
    assert [r[0] for r in table[1:]] == ["lr/baseline", "lr/ours", "svm/ours", "rf/ours", "mlp/ours"]
    assert read_csv(out / "tables" / "cit_main.csv")[0] == ["Model (features)", "MAE [s]", "RMSE [s]"]
    ranks = read_csv(out / "tables" / "decision_feature_importance.csv")
    assert {r[0] for r in ranks[1:]} == {"lr", "svm", "rf"}
    figures = {p.stem for p in (out / "figures").glob("*.json")}
    assert figures == {"decision_by_tta", "cit_box_by_location", "cd_box_by_location",
                       "cit_histogram", "cd_histogram"}
    box = json.loads((out / "figures" / "cd_box_by_location.json").read_text())
    assert set(box["groups"]) == {f"{s}/{l}" for s in ("GT", "LR", "RF", "MLP") for l in ("zebra", "non_zebra")}
    hist = json.loads((out / "figures" / "cit_histogram.json").read_text())
    widths = np.diff(hist["series"]["edges"])
    for key in ("GT:density", "RF:density", "MLP:density"):
        assert abs(np.sum(np.array(hist["series"][key]) * widths) - 1.0) < 1e-9
    ref = json.loads((out / "paper_reference.json").read_text())
    assert ref["assertable"] is False
    summary = json.loads((out / "summary.json").read_text())
    assert summary["failures"] == {} and len(summary["cells"]) == 11


def test_report_json_matches_table(small_run):
    out, result = small_run
    rep = json.loads((out / "reports" / "decision_rf_ours.json").read_text())
    row = next(r for r in read_csv(out / "tables" / "decision_main.csv") if r[0] == "rf/ours")
    assert float(row[5]) == pytest.approx(rep["strata"]["total"]["acc"], abs=1e-6)


def test_failed_cell_is_recorded_and_others_run(tmp_path, small_trials, monkeypatch):
    real = experiments.cross_validate

    def flaky(trials, spec, model_spec, task, plan, threshold=0.5):
        if spec.name == "baseline":
            raise RuntimeError("boom")
        return real(trials, spec, model_spec, task, plan, threshold)

    monkeypatch.setattr(experiments, "cross_validate", flaky)
    grid = (Cell("decision", "lr", "baseline"), Cell("decision", "lr", "subset4"))
    plan = ExperimentPlan(tasks=("decision",), grid=grid, out_dir=str(tmp_path), ablation=False)
    result = run_plan(plan, small_trials)
    assert not result.ok
    assert "boom" in result.failures["decision_lr_baseline"]
    assert "decision_lr_subset4" in result.reports
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert "decision_lr_baseline" in summary["failures"]


def test_ablation_table_layout(tmp_path, small_trials):
    plan = ExperimentPlan(tasks=("cd",), out_dir=str(tmp_path), hyperparams={"mlp": {"epochs": 100}})
    result = run_ablation(plan, small_trials)
    assert result.ok and len(result.reports) == 15
    rows = read_csv(tmp_path / "tables" / "cd_ablation.csv")
    assert rows[0] == ["Features", "LR MAE", "LR RMSE", "RF MAE", "RF RMSE", "MLP MAE", "MLP RMSE"]
    assert [r[0] for r in rows[1:]] == ["All", "Subset 1", "Subset 2", "Subset 3", "Subset 4"]
    assert not (tmp_path / "tables" / "cd_main.csv").exists()


def test_parallel_run_matches_serial(tmp_path, small_trials):
    grid = (Cell("decision", "lr", "ours"), Cell("decision", "rf", "subset4"))
    outs = []
    for jobs in (1, 2):
        out = tmp_path / f"j{jobs}"
        plan = ExperimentPlan(tasks=("decision",), grid=grid, out_dir=str(out), ablation=False, jobs=jobs)
        run_plan(plan, small_trials)
        outs.append({p.name: p.read_bytes() for p in (out / "reports").iterdir()})
    assert outs[0] == outs[1]


def test_describe_grid_counts_distinct_cells():
    plan = ExperimentPlan()
    assert len(describe_grid(plan, ablation=False)) == 11
    # the ablation reuses rf/ours, mlp/ours etc. from the main grid
    assert len(describe_grid(plan)) == 11 + 45 - 7
