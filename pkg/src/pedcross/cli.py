"""Command-line interface.

Exit codes: 0 success, 1 experiment or validation failure, 2 usage, config
or IO error. Every command that writes output also writes a provenance file
holding its resolved configuration.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .csvio import RowError, SchemaError, read_trials, write_trials
from .domain import FEATURE_SETS, TASKS, FeatureSetSpec
from .errors import ConfigError, EncodingError, ModelFileError, PedcrossError
from .evaluation import TASK_KIND, cross_validate, make_folds, task_metrics
from .experiments import (
    describe_grid,
    load_plan,
    run_plan,
    task_trials,
)
from .features import apply_standardizer, dump_matrix, encode, encode_with_meta, fit_standardizer
from .models import ALIASES, ModelSpec, classify, load_model, predict, save_model, train
from .synthgen import GeneratorConfig, config_from_dict, generate_dataset
from .util import dumps, read_structured, write_json

log = logging.getLogger("pedcross")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad input that should end the run with exit code 2."""


# Helpers ------------------------------------------------------------------------

def _provenance(command: str, args: argparse.Namespace, resolved: dict) -> dict:
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
    return {"tool": "pedcross", "version": __version__, "command": command,
            "arguments": flags, "resolved": resolved}


def _write_provenance(target: Path, is_dir: bool, payload: dict) -> Path:
    path = target / "provenance.json" if is_dir else target.with_name(target.name + ".provenance.json")
    write_json(path, payload)
    return path


def _read_data(path, strict: bool = True):
    if path is None:
        raise UsageError("--data is required")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"data file not found: {p}")
    trials, rejects = read_trials(p)
    if rejects and strict:
        line, reasons = rejects[0]
        raise RowError(f"{p}: {len(rejects)} rejected rows; first at line {line}: {'; '.join(reasons)}")
    return trials, rejects


def _read_hyperparams(path, family: str) -> dict:
    if path is None:
        return {}
    d = read_structured(path)
    # accept either a flat mapping or one keyed by family name
    if family in d or ALIASES.get(family, family) in d:
        d = d.get(family, d.get(ALIASES.get(family, family)))
    return dict(d)


def _check_out(path) -> Path:
    if path is None:
        raise UsageError("--out is required")
    p = Path(path)
    if p.parent and not p.parent.exists():
        raise UsageError(f"output directory does not exist: {p.parent}")
    return p


# Commands ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    raw = read_structured(args.config) if args.config else {}
    if args.seed is not None:
        raw = {**raw, "seed": args.seed}
    cfg = config_from_dict(raw) if raw else GeneratorConfig()
    out = _check_out(args.out)
    trials = generate_dataset(cfg)
    write_trials(trials, out)
    _write_provenance(out, False, _provenance("generate", args, {"generator": cfg.to_dict()}))
    print(f"wrote {len(trials)} trials to {out}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    trials, rejects = _read_data(args.data, strict=False)
    for line, reasons in rejects:
        print(f"line {line}: {'; '.join(reasons)}", file=sys.stderr)
    print(f"{len(trials)} accepted, {len(rejects)} rejected")
    if args.out:
        out = _check_out(args.out)
        write_trials(trials, out)
        _write_provenance(out, False, _provenance("ingest", args, {
            "accepted": len(trials), "rejected": [{"line": l, "reasons": r} for l, r in rejects],
        }))
    if rejects and args.strict:
        return EXIT_FAIL
    return EXIT_OK


def _model_spec(args, task: str) -> ModelSpec:
    hp = _read_hyperparams(args.config, args.model)
    return ModelSpec(args.model, TASK_KIND[task], hp, args.seed or 0)


def cmd_train(args) -> int:
    trials, _ = _read_data(args.data)
    rows = task_trials(trials, args.task)
    if not rows:
        raise UsageError(f"no trials carry a {args.task} target")
    spec = _model_spec(args, args.task)
    design = encode(rows, FeatureSetSpec.named(args.features))
    scaled = apply_standardizer(fit_standardizer(design), design)
    if args.dump_matrix:
        dump_matrix(scaled, args.dump_matrix)
    y = np.array([getattr(t.outcome, args.task) for t in rows], dtype=float)
    out = _check_out(args.out)
    model = train(spec, scaled, y)
    model.metadata = {**model.metadata, "task": args.task, "feature_set": args.features, "n_train": len(rows)}
    save_model(model, out)
    _write_provenance(out, False, _provenance("train", args, {"model": spec.to_dict()}))
    print(f"trained {args.model} on {len(rows)} trials -> {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    trials, _ = _read_data(args.data)
    rows = task_trials(trials, args.task)
    if args.model_file:
        model = load_model(args.model_file)
        task = model.metadata.get("task", args.task)
        if TASK_KIND[task] != model.spec.task:
            raise UsageError(f"model file was trained for {model.spec.task}, not task {task!r}")
        rows = task_trials(trials, task)
        X = encode_with_meta(rows, model.column_meta)
        y = np.array([getattr(t.outcome, task) for t in rows], dtype=float)
        pred = classify(model, X) if model.spec.classify else predict(model, X)
        result = {"task": task, "model_file": str(args.model_file), "n": len(rows),
                  "metrics": task_metrics(task, y, pred)}
    else:
        spec = _model_spec(args, args.task)
        groups = [t.pair_id for t in rows] if args.group_by_pair else None
        plan = make_folds(len(rows), args.k, args.seed or 0, groups=groups)
        report = cross_validate(rows, FeatureSetSpec.named(args.features), spec, args.task, plan)
        result = report.to_dict()
    text = dumps(result)
    if args.out:
        out = _check_out(args.out)
        out.write_text(text, encoding="utf-8")
        _write_provenance(out, False, _provenance("evaluate", args, {}))
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _resolve_plan(args):
    plan = load_plan(args.plan)
    over = {}
    if args.data:
        if not Path(args.data).is_file():
            raise UsageError(f"data file not found: {args.data}")
        over["data_path"] = str(args.data)
    if args.seed is not None:
        over.update(generator_seed=args.seed, cv_seed=args.seed, model_seed=args.seed)
    if args.out:
        over["out_dir"] = str(args.out)
    if args.jobs:
        over["jobs"] = args.jobs
    return plan.with_overrides(**over)


def _run(args, command: str, ablation_only: bool) -> int:
    plan = _resolve_plan(args)
    main = not ablation_only
    ablation = True if ablation_only else (False if args.no_ablation else None)
    if args.dry_run:
        for line in describe_grid(plan, ablation=ablation, main=main):
            print(line)
        return EXIT_OK
    if plan.data_path:
        _read_data(plan.data_path)  # validate before any work starts
    result = run_plan(plan, ablation=ablation, main=main)
    _write_provenance(Path(plan.out_dir), True, _provenance(command, args, {"plan": plan.to_dict()}))
    print(f"{len(result.reports)} reports written to {plan.out_dir}")
    for key, err in sorted(result.failures.items()):
        print(f"FAILED {key}: {err}", file=sys.stderr)
    return EXIT_OK if result.ok else EXIT_FAIL


def cmd_run(args) -> int:
    return _run(args, "run", ablation_only=False)


def cmd_ablate(args) -> int:
    return _run(args, "ablate", ablation_only=True)


def _markdown(rows) -> str:
    head, *body = rows
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    lines += ["| " + " | ".join(r) + " |" for r in body]
    return "\n".join(lines)


def cmd_report(args) -> int:
    import csv

    root = Path(args.dir)
    tables = root / "tables"
    if not tables.is_dir():
        raise UsageError(f"no tables/ directory under {root}")
    parts = [f"# pedcross results ({root})", ""]
    for path in sorted(tables.glob("*.csv")):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if rows:
            parts += [f"## {path.stem}", "", _markdown(rows), ""]
    ref = root / "paper_reference.json"
    if ref.is_file():
        parts += ["Published reference numbers (context only, different data): paper_reference.json", ""]
    text = "\n".join(parts)
    if args.out:
        out = _check_out(args.out)
        out.write_text(text, encoding="utf-8")
        _write_provenance(out, False, _provenance("report", args, {}))
    else:
        sys.stdout.write(text)
    return EXIT_OK


# Parser -------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed for every random draw in this command")
    common.add_argument("--out", default=None, help="output file or directory")
    common.add_argument("--verbose", "-v", action="count", default=0, help="more logging (repeatable)")
    common.add_argument("--config", default=None, help="config file (.toml or .json)")

    parser = argparse.ArgumentParser(prog="pedcross", description="Pedestrian crossing outcome prediction.")
    parser.add_argument("--version", action="version", version=f"pedcross {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write a synthetic trial CSV",
                       description="Generate synthetic trials. --config holds generator settings.")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ingest", parents=[common], help="validate a trial CSV and write it back canonically")
    p.add_argument("--data", required=True, help="input trial CSV")
    p.add_argument("--strict", action="store_true", help="exit 1 when any row is rejected")
    p.set_defaults(func=cmd_ingest)

    def cell_args(p, model_required=True):
        p.add_argument("--data", required=True, help="trial CSV")
        p.add_argument("--task", choices=TASKS, default="decision")
        p.add_argument("--model", choices=sorted(ALIASES), required=model_required, default=None)
        p.add_argument("--features", choices=sorted(FEATURE_SETS), default="ours")

    p = sub.add_parser("train", parents=[common], help="fit one model on all rows and save it",
                       description="Train one model. --config holds hyperparameters.")
    cell_args(p)
    p.add_argument("--dump-matrix", default=None, help="also write the standardized design matrix as CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="cross-validate one cell or score a saved model",
                       description="Cross-validate one (task, model, features) cell, or score --model-file.")
    cell_args(p, model_required=False)
    p.add_argument("--model-file", default=None, help="saved model to score instead of cross-validating")
    p.add_argument("--k", type=int, default=5, help="number of folds")
    p.add_argument("--group-by-pair", action="store_true", help="keep each participant pair in one fold")
    p.set_defaults(func=cmd_evaluate)

    for name, func, text in (("run", cmd_run, "run the experiment grid (and ablation)"),
                             ("ablate", cmd_ablate, "run only the feature-subset ablation")):
        p = sub.add_parser(name, parents=[common], help=text,
                           description=f"{text[0].upper()}{text[1:]}. --seed sets generator, fold and model seeds.")
        p.add_argument("--plan", default=None, help="plan file (default: bundled paper grid)")
        p.add_argument("--data", default=None, help="trial CSV (default: generate per plan)")
        p.add_argument("--jobs", type=int, default=None, help="parallel worker processes")
        p.add_argument("--dry-run", action="store_true", help="print the grid and write nothing")
        if name == "run":
            p.add_argument("--no-ablation", action="store_true", help="skip the ablation cells")
        p.set_defaults(func=func)

    p = sub.add_parser("report", parents=[common], help="render tables of a finished run as markdown")
    p.add_argument("--dir", required=True, help="output directory of a run")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "evaluate" and not args.model_file and not args.model:
        parser.error("evaluate needs --model or --model-file")
    try:
        return args.func(args)
    except (UsageError, ConfigError, SchemaError, ModelFileError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RowError, EncodingError, PedcrossError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        # covers malformed TOML and invalid flag combinations surfaced by the library
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
