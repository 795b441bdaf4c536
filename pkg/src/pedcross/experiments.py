"""Experiment grid runner: main tables, subset ablation and plot-ready figure data.

A plan names a dataset (generated or CSV), the tasks, and a grid of
``(task, model, feature set)`` cells. Every cell is a 5-fold
cross-validation; outputs are written as JSON reports, CSV tables and JSON
figure data. Nothing depends on wall-clock time, so reruns with the same plan
and seeds are byte-identical.
"""
from __future__ import annotations

import csv
import io
import logging
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .csvio import load_trials
from .domain import FEATURE_SETS, TASKS, FeatureSetSpec, Trial
from .errors import ConfigError
from .evaluation import TASK_KIND, EvaluationReport, cross_validate, make_folds
from .features import apply_standardizer, encode, fit_standardizer
from .models import ALIASES, DEFAULT_HYPERPARAMS, ModelSpec, feature_importance, train
from .synthgen import config_from_dict, generate_dataset
from .util import read_structured, write_json

log = logging.getLogger(__name__)

PLAN_FORMAT_VERSION = 1
ABLATION_FAMILIES = ("lr", "rf", "mlp")
ABLATION_SUBSETS = ("subset1", "subset2", "subset3", "subset4")
# Feature set standing in for "all features" in each task's ablation table
ABLATION_FULL_SET = {"decision": "ours", "cit": "ours_delta", "cd": "ours"}
IMPORTANCE_FAMILIES = ("lr", "svm", "rf")
HISTOGRAM_BINS = 20
FIGURE_KINDS = ("by_tta_curve", "box_stats", "histogram")

DECISION_TABLE_HEADER = (
    "Model (features)", "Zebra ACC", "Zebra F1", "Non-zebra ACC", "Non-zebra F1", "Total ACC", "Total F1",
)


@dataclass(frozen=True)
class Cell:
    task: str
    model: str      # short family name: lr, svm, rf, mlp
    features: str

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError("grid.task", f"unknown task {self.task!r}")
        if self.model not in ALIASES:
            raise ConfigError("grid.model", f"unknown model {self.model!r}; expected one of {sorted(ALIASES)}")
        if self.features not in FEATURE_SETS:
            raise ConfigError("grid.features", f"unknown feature set {self.features!r}")
        if self.model == "svm" and TASK_KIND[self.task] != "classify":
            raise ConfigError("grid.model", f"svm is classification only; cannot run task {self.task!r}")

    @property
    def key(self) -> str:
        return f"{self.task}_{self.model}_{self.features}"

    @property
    def label(self) -> str:
        return f"{self.model}/{self.features}"


DEFAULT_GRID = (
    Cell("decision", "lr", "baseline"),
    Cell("decision", "lr", "ours"),
    Cell("decision", "svm", "ours"),
    Cell("decision", "rf", "ours"),
    Cell("decision", "mlp", "ours"),
    Cell("cit", "lr", "baseline"),
    Cell("cit", "rf", "ours_delta"),
    Cell("cit", "mlp", "ours_delta"),
    Cell("cd", "lr", "baseline"),
    Cell("cd", "rf", "ours"),
    Cell("cd", "mlp", "ours"),
)


@dataclass(frozen=True)
class ExperimentPlan:
    """What to run and where to write it.

    ``data_path`` selects an ingested CSV; otherwise data is generated from
    ``generator`` (a config mapping, defaults when empty) with
    ``generator_seed``.
    """

    tasks: tuple = TASKS
    grid: tuple = DEFAULT_GRID
    data_path: Optional[str] = None
    generator: Mapping = field(default_factory=dict)
    generator_seed: int = 0
    k: int = 5
    cv_seed: int = 0
    group_by_pair: bool = False
    model_seed: int = 0
    hyperparams: Mapping = field(default_factory=dict)
    out_dir: str = "pedcross_out"
    ablation: bool = True
    jobs: int = 1

    def __post_init__(self):
        tasks = tuple(self.tasks)
        for t in tasks:
            if t not in TASKS:
                raise ConfigError("tasks", f"unknown task {t!r}")
        object.__setattr__(self, "tasks", tasks)
        grid = tuple(c if isinstance(c, Cell) else Cell(**c) for c in self.grid)
        object.__setattr__(self, "grid", grid)
        if not any(c.task in tasks for c in grid) and not self.ablation:
            raise ConfigError("grid", "no grid cell matches the selected tasks")
        if self.k < 2:
            raise ConfigError("cv.k", "must be >= 2")
        if self.jobs < 1:
            raise ConfigError("jobs", "must be >= 1")
        for fam in self.hyperparams:
            if fam not in ALIASES:
                raise ConfigError(f"hyperparams.{fam}", "unknown model family")
        for name in ("generator_seed", "cv_seed", "model_seed"):
            v = getattr(self, name)
            if not (isinstance(v, int) and 0 <= v < 2**64):
                raise ConfigError(name, "must be an unsigned 64-bit integer")

    def cells(self) -> list[Cell]:
        return [c for c in self.grid if c.task in self.tasks]

    def ablation_cells(self) -> list[Cell]:
        out = []
        for task in self.tasks:
            for fs in (ABLATION_FULL_SET[task],) + ABLATION_SUBSETS:
                for fam in ABLATION_FAMILIES:
                    out.append(Cell(task, fam, fs))
        return out

    def model_spec(self, cell: Cell) -> ModelSpec:
        return ModelSpec(cell.model, TASK_KIND[cell.task], dict(self.hyperparams.get(cell.model, {})),
                         self.model_seed)

    def with_overrides(self, **kw) -> "ExperimentPlan":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentPlan(**d)

    def to_dict(self) -> dict:
        return {
            "format_version": PLAN_FORMAT_VERSION,
            "tasks": list(self.tasks),
            "out_dir": self.out_dir,
            "ablation": self.ablation,
            "jobs": self.jobs,
            "dataset": (
                {"csv": self.data_path} if self.data_path
                else {"generate": True, "seed": self.generator_seed, "config": dict(self.generator)}
            ),
            "cv": {"k": self.k, "seed": self.cv_seed, "group_by_pair": self.group_by_pair},
            "models": {"seed": self.model_seed, "hyperparams": {k: dict(v) for k, v in self.hyperparams.items()}},
            "grid": [{"task": c.task, "model": c.model, "features": c.features} for c in self.grid],
        }


def plan_from_dict(d: Mapping, base_dir: Optional[Path] = None) -> ExperimentPlan:
    """Build a plan from a parsed plan file; relative CSV paths resolve against ``base_dir``."""
    known = {"format_version", "tasks", "out_dir", "ablation", "jobs", "dataset", "cv", "models", "grid"}
    for k in d:
        if k not in known:
            raise ConfigError(k, "unknown plan field")
    version = d.get("format_version", PLAN_FORMAT_VERSION)
    if version != PLAN_FORMAT_VERSION:
        raise ConfigError("format_version", f"unsupported plan version {version!r}")
    kw: dict = {}
    for name in ("tasks", "out_dir", "ablation", "jobs"):
        if name in d:
            kw[name] = d[name]
    ds = d.get("dataset", {})
    if "csv" in ds:
        p = Path(ds["csv"])
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        kw["data_path"] = str(p)
    else:
        kw["generator"] = dict(ds.get("config", {}))
        kw["generator_seed"] = int(ds.get("seed", 0))
    cv = d.get("cv", {})
    kw["k"] = int(cv.get("k", 5))
    kw["cv_seed"] = int(cv.get("seed", 0))
    kw["group_by_pair"] = bool(cv.get("group_by_pair", False))
    models = d.get("models", {})
    kw["model_seed"] = int(models.get("seed", 0))
    kw["hyperparams"] = {k: dict(v) for k, v in models.get("hyperparams", {}).items()}
    if "grid" in d:
        try:
            kw["grid"] = tuple(Cell(c["task"], c["model"], c["features"]) for c in d["grid"])
        except (KeyError, TypeError):
            raise ConfigError("grid", "each cell needs task, model and features") from None
    return ExperimentPlan(**kw)


def load_plan(path=None) -> ExperimentPlan:
    """Read a TOML/JSON plan; ``None`` loads the bundled paper grid."""
    if path is None:
        text = resources.files("pedcross").joinpath("data/paper_grid.toml").read_text(encoding="utf-8")
        from .util import tomllib

        return plan_from_dict(tomllib.loads(text))
    path = Path(path)
    return plan_from_dict(read_structured(path), base_dir=path.parent)


def load_dataset(plan: ExperimentPlan) -> list[Trial]:
    if plan.data_path:
        return load_trials(plan.data_path)
    cfg = config_from_dict({**plan.generator, "seed": plan.generator_seed})
    return generate_dataset(cfg)


def task_trials(trials: Sequence[Trial], task: str) -> list[Trial]:
    """Regression targets exist only for crossing trials; decision uses all."""
    if TASK_KIND[task] == "classify":
        return list(trials)
    return [t for t in trials if t.outcome.decision == 1]


# Figure data ------------------------------------------------------------------------

@dataclass
class FigureData:
    """Plot-ready numbers for one figure.

    ``series`` maps names to numeric lists. ``box_stats`` figures also fill
    ``groups`` with one summary per group.
    """

    kind: str
    name: str = ""
    series: dict = field(default_factory=dict)
    groups: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}")

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "name": self.name, "series": self.series}
        if self.groups:
            d["groups"] = self.groups
        return d


def box_summary(values) -> dict:
    """Tukey box-plot numbers for one sample (quartiles by linear interpolation)."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("box_stats group is empty")
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    return {
        "n": int(v.size),
        "median": float(med),
        "q1": float(q1),
        "q3": float(q3),
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
        "outliers": sorted(float(x) for x in v[(v < lo_fence) | (v > hi_fence)]),
    }


def box_stats(values, groups=None, name: str = "") -> FigureData:
    """Per-group box-plot summaries; groups keep first-appearance order."""
    v = np.asarray(values, dtype=float).ravel()
    if groups is None:
        groups = ["all"] * v.size
    groups = list(groups)
    if len(groups) != v.size:
        raise ValueError("values and groups differ in length")
    if v.size == 0:
        raise ValueError("box_stats needs at least one value")
    order = list(dict.fromkeys(groups))
    labels = np.asarray(groups, dtype=object)
    out = {str(g): box_summary(v[labels == g]) for g in order}
    return FigureData("box_stats", name, {}, out)


def histogram_density(values, n_bins: int, value_range=None, name: str = "") -> FigureData:
    """Equal-width histogram normalised to unit area.

    Bins span ``[min, max]`` (or ``value_range``, which must cover every
    value). When that span is empty a single bin of width 1 centred on the
    value is returned.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("histogram needs at least one value")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    lo, hi = (float(v.min()), float(v.max())) if value_range is None else map(float, value_range)
    if v.min() < lo or v.max() > hi:
        raise ValueError("value_range does not cover all values")
    if hi <= lo:
        edges = np.array([lo - 0.5, lo + 0.5])
    else:
        edges = np.linspace(lo, hi, n_bins + 1)
    counts, edges = np.histogram(v, bins=edges)
    widths = np.diff(edges)
    density = counts / (v.size * widths)
    return FigureData("histogram", name, {
        "edges": edges.tolist(),
        "counts": counts.tolist(),
        "density": density.tolist(),
    })


def by_tta_curves(reports: Sequence[EvaluationReport], name: str = "decision_by_tta") -> FigureData:
    """ACC/F1 per TTA level for each report, both locations pooled."""
    if not reports:
        raise ValueError("no reports to plot")
    levels = [e["tta"] for e in reports[0].by_tta]
    series = {"tta": levels}
    for r in reports:
        label = f"{r.model}/{r.feature_set}"
        for metric in ("acc", "f1") if TASK_KIND[r.task] == "classify" else ("mae", "rmse"):
            series[f"{label}:{metric}"] = [e[metric] for e in r.by_tta]
    return FigureData("by_tta_curve", name, series)


# Running cells ------------------------------------------------------------------------

@dataclass
class RunResult:
    reports: dict = field(default_factory=dict)       # cell key -> EvaluationReport
    failures: dict = field(default_factory=dict)      # cell key -> error message
    figures: dict = field(default_factory=dict)       # name -> FigureData
    tables: dict = field(default_factory=dict)        # file name -> list of rows (header first)
    cells: list = field(default_factory=list)         # main grid cells, in order
    ablation_cells: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def _fold_plan(plan: ExperimentPlan, trials: Sequence[Trial]):
    groups = [t.pair_id for t in trials] if plan.group_by_pair else None
    return make_folds(len(trials), plan.k, plan.cv_seed, groups=groups)


def run_cell(plan: ExperimentPlan, cell: Cell, trials: Sequence[Trial]) -> EvaluationReport:
    rows = task_trials(trials, cell.task)
    return cross_validate(rows, FeatureSetSpec.named(cell.features), plan.model_spec(cell),
                          cell.task, _fold_plan(plan, rows))


def _run_cell_job(args):
    plan, cell, trials = args
    try:
        return cell.key, run_cell(plan, cell, trials), None
    except Exception as exc:  # recorded per cell; the remaining cells still run
        return cell.key, None, f"{type(exc).__name__}: {exc}"


def run_cells(plan: ExperimentPlan, cells: Sequence[Cell], trials: Sequence[Trial],
              result: Optional[RunResult] = None) -> RunResult:
    """Cross-validate each distinct cell once, in order; failures are recorded, not raised."""
    result = result or RunResult()
    todo = []
    for c in cells:
        if c.key not in result.reports and c.key not in result.failures and c not in todo:
            todo.append(c)
    jobs = [(plan, c, trials) for c in todo]
    if plan.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=plan.jobs) as pool:
            outcomes = list(pool.map(_run_cell_job, jobs))
    else:
        outcomes = [_run_cell_job(j) for j in jobs]
    for key, report, err in outcomes:
        if err is None:
            result.reports[key] = report
            log.info("cell %s done", key)
        else:
            result.failures[key] = err
            log.error("cell %s failed: %s", key, err)
    return result


def _fmt(v) -> str:
    return "" if v is None or (isinstance(v, float) and not np.isfinite(v)) else f"{v:.6f}"


def decision_table(reports: Sequence[EvaluationReport]) -> list[list[str]]:
    """Zebra / non-zebra / total ACC and F1 from pooled out-of-fold predictions."""
    rows = [list(DECISION_TABLE_HEADER)]
    for r in reports:
        row = [f"{r.model}/{r.feature_set}"]
        for stratum in ("zebra", "non_zebra", "total"):
            row += [_fmt(r.strata[stratum]["acc"]), _fmt(r.strata[stratum]["f1"])]
        rows.append(row)
    return rows


def regression_table(reports: Sequence[EvaluationReport]) -> list[list[str]]:
    rows = [["Model (features)", "MAE [s]", "RMSE [s]"]]
    for r in reports:
        rows.append([f"{r.model}/{r.feature_set}", _fmt(r.aggregate["mae"]), _fmt(r.aggregate["rmse"])])
    return rows


def ablation_table(task: str, reports: Mapping[str, EvaluationReport]) -> list[list[str]]:
    """One row per feature set (all, subsets 1-4), two metric columns per family."""
    metrics = ("acc", "f1") if TASK_KIND[task] == "classify" else ("mae", "rmse")
    header = ["Features"] + [f"{fam.upper()} {m.upper()}" for fam in ABLATION_FAMILIES for m in metrics]
    rows = [header]
    for fs in (ABLATION_FULL_SET[task],) + ABLATION_SUBSETS:
        label = "All" if fs == ABLATION_FULL_SET[task] else fs.replace("subset", "Subset ")
        row = [label]
        for fam in ABLATION_FAMILIES:
            r = reports.get(Cell(task, fam, fs).key)
            if r is None:
                row += ["", ""]
            elif TASK_KIND[task] == "classify":
                row += [_fmt(r.strata["total"]["acc"]), _fmt(r.strata["total"]["f1"])]
            else:
                row += [_fmt(r.aggregate["mae"]), _fmt(r.aggregate["rmse"])]
        rows.append(row)
    return rows


def importance_table(plan: ExperimentPlan, trials: Sequence[Trial], features: str = "ours") -> list[list[str]]:
    """Rank source features for LR, SVM and RF fitted on every decision trial."""
    rows = [["model", "rank", "feature", "importance"]]
    design = encode(trials, FeatureSetSpec.named(features))
    scaled = apply_standardizer(fit_standardizer(design), design)
    y = np.array([t.outcome.decision for t in trials], dtype=float)
    for fam in IMPORTANCE_FAMILIES:
        model = train(ModelSpec(fam, "classify", dict(plan.hyperparams.get(fam, {})), plan.model_seed), scaled, y)
        for rank, (feat, share) in enumerate(feature_importance(model), start=1):
            rows.append([fam, str(rank), feat, _fmt(share)])
    return rows


def _regression_figures(task: str, reports: Sequence[EvaluationReport]) -> dict:
    """Box stats by location (GT + each model) and unit-area histograms (GT + RF + MLP)."""
    figs = {}
    if not reports:
        return figs
    truth = reports[0].truth
    locs = reports[0].locations
    values, groups = [truth], [[f"GT/{l}" for l in locs]]
    for r in reports:
        values.append(r.scores)
        groups.append([f"{r.model.upper()}/{l}" for l in locs])
    figs[f"{task}_box_by_location"] = box_stats(np.concatenate(values), sum(groups, []),
                                                name=f"{task}_box_by_location")
    hist_src = [("GT", truth)] + [(r.model.upper(), r.scores) for r in reports if r.model in ("rf", "mlp")]
    lo = min(float(np.min(s)) for _, s in hist_src)
    hi = max(float(np.max(s)) for _, s in hist_src)
    series = {}
    for label, s in hist_src:
        h = histogram_density(s, HISTOGRAM_BINS, (lo, hi))
        series[f"{label}:density"] = h.series["density"]
        series.setdefault("edges", h.series["edges"])
    figs[f"{task}_histogram"] = FigureData("histogram", f"{task}_histogram", series)
    return figs


def _assemble(plan: ExperimentPlan, result: RunResult, trials: Sequence[Trial]) -> None:
    rep = result.reports
    main = {t: [rep[c.key] for c in result.cells if c.task == t and c.key in rep] for t in TASKS}
    if main["decision"]:
        result.tables["decision_main.csv"] = decision_table(main["decision"])
        result.figures["decision_by_tta"] = by_tta_curves(main["decision"])
        try:
            result.tables["decision_feature_importance.csv"] = importance_table(plan, task_trials(trials, "decision"))
        except Exception as exc:
            result.failures["decision_feature_importance"] = f"{type(exc).__name__}: {exc}"
    for task in ("cit", "cd"):
        if main[task]:
            result.tables[f"{task}_main.csv"] = regression_table(main[task])
            result.figures.update(_regression_figures(task, main[task]))
    if result.ablation_cells:
        for task in plan.tasks:
            result.tables[f"{task}_ablation.csv"] = ablation_table(task, rep)


def run_plan(plan: ExperimentPlan, trials: Optional[Sequence[Trial]] = None,
             ablation: Optional[bool] = None, main: bool = True, write: bool = True) -> RunResult:
    """Run the main grid (and the ablation when enabled), then emit outputs.

    Cell failures are collected in ``result.failures``; callers decide the
    exit status.
    """
    trials = load_dataset(plan) if trials is None else list(trials)
    do_ablation = plan.ablation if ablation is None else ablation
    result = RunResult()
    if main:
        result.cells = plan.cells()
    if do_ablation:
        result.ablation_cells = plan.ablation_cells()
    run_cells(plan, result.cells + result.ablation_cells, trials, result)
    _assemble(plan, result, trials)
    if write:
        write_outputs(plan, result, trials)
    return result


def run_ablation(plan: ExperimentPlan, trials: Optional[Sequence[Trial]] = None, write: bool = True) -> RunResult:
    """Only the subset ablation: 5 feature sets x {LR, RF, MLP} per task."""
    return run_plan(plan, trials, ablation=True, main=False, write=write)


# Output ------------------------------------------------------------------------------

def _write_csv(path: Path, rows) -> None:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def write_outputs(plan: ExperimentPlan, result: RunResult, trials: Sequence[Trial]) -> Path:
    out = Path(plan.out_dir)
    for sub in ("reports", "tables", "figures"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    for key in sorted(result.reports):
        write_json(out / "reports" / f"{key}.json", result.reports[key].to_dict())
    for name in sorted(result.tables):
        _write_csv(out / "tables" / name, result.tables[name])
    for name in sorted(result.figures):
        write_json(out / "figures" / f"{name}.json", result.figures[name].to_dict())
    ref = resources.files("pedcross").joinpath("data/paper_reference.json")
    with resources.as_file(ref) as src:
        shutil.copyfile(src, out / "paper_reference.json")
    n_cross = sum(t.outcome.decision for t in trials)
    write_json(out / "summary.json", {
        "plan": plan.to_dict(),
        "dataset": {"n_trials": len(trials), "n_crossing": int(n_cross)},
        "cells": [c.key for c in result.cells],
        "ablation_cells": [c.key for c in result.ablation_cells],
        "failures": dict(sorted(result.failures.items())),
    })
    return out


def describe_grid(plan: ExperimentPlan, ablation: Optional[bool] = None, main: bool = True) -> list[str]:
    """Human-readable listing of the cells a run would execute."""
    do_ablation = plan.ablation if ablation is None else ablation
    lines = []
    seen = set()
    cells = (plan.cells() if main else []) + (plan.ablation_cells() if do_ablation else [])
    for c in cells:
        if c.key in seen:
            continue
        seen.add(c.key)
        hp = {**DEFAULT_HYPERPARAMS[ALIASES[c.model]], **plan.hyperparams.get(c.model, {})}
        lines.append(f"{c.task:8s} {c.model:4s} {c.features:10s} {hp}")
    return lines
