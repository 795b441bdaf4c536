"""Read and write trials in the comma-separated trial schema."""
from __future__ import annotations

import csv
import logging
import math
from pathlib import Path

from .domain import Outcome, Participant, Trial, validate_trial

log = logging.getLogger(__name__)

COLUMNS = (
    "pair_id",
    "driver_age", "driver_gender", "driver_svo", "driver_aiss",
    "ped_age", "ped_gender", "ped_svo", "ped_aiss",
    "tta", "waiting_time", "location", "decision", "cit", "cd",
)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def trial_to_row(t: Trial) -> list[str]:
    return [
        t.pair_id,
        _fmt(t.driver.age), t.driver.gender, _fmt(t.driver.svo), _fmt(t.driver.aiss),
        _fmt(t.pedestrian.age), t.pedestrian.gender, _fmt(t.pedestrian.svo), _fmt(t.pedestrian.aiss),
        _fmt(t.tta), _fmt(t.waiting_time), t.location, _fmt(t.outcome.decision),
        _fmt(t.outcome.cit), _fmt(t.outcome.cd),
    ]


def write_trials(trials, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for t in trials:
            w.writerow(trial_to_row(t))


class RowError(ValueError):
    pass


class SchemaError(RowError):
    """The file header does not carry the required columns."""


def _age(raw: str, field: str) -> int:
    v = float(raw)
    if not math.isfinite(v):
        raise RowError(f"{field} must be finite")
    if v != int(v):
        log.warning("%s=%s is not an integer; truncating to %d", field, raw, int(v))
    return int(v)


def _opt_float(raw: str):
    raw = raw.strip()
    return None if raw == "" else float(raw)


def row_to_trial(row: dict) -> Trial:
    """Parse one CSV record. Raises :class:`RowError` on unparseable fields."""
    try:
        pair = row["pair_id"].strip()
        decision_raw = row["decision"].strip()
        if decision_raw not in ("0", "1"):
            raise RowError(f"decision must be 0 or 1, got {decision_raw!r}")
        driver = Participant(
            id=f"{pair}-D", role="driver",
            age=_age(row["driver_age"], "driver_age"),
            gender=row["driver_gender"].strip(),
            svo=float(row["driver_svo"]), aiss=float(row["driver_aiss"]),
        )
        ped = Participant(
            id=f"{pair}-P", role="pedestrian",
            age=_age(row["ped_age"], "ped_age"),
            gender=row["ped_gender"].strip(),
            svo=float(row["ped_svo"]), aiss=float(row["ped_aiss"]),
        )
        return Trial(
            pair_id=pair, driver=driver, pedestrian=ped,
            tta=float(row["tta"]), waiting_time=float(row["waiting_time"]),
            location=row["location"].strip(),
            outcome=Outcome(int(decision_raw), _opt_float(row["cit"]), _opt_float(row["cd"])),
        )
    except KeyError as exc:
        raise RowError(f"missing column {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, RowError):
            raise
        raise RowError(str(exc)) from None


def read_trials(path) -> tuple[list[Trial], list[tuple[int, list[str]]]]:
    """Read a trial CSV.

    Returns the valid trials and a list of ``(line_number, reasons)`` for
    rejected rows. Line numbers are 1-based file lines (header is line 1).
    """
    path = Path(path)
    trials, rejects = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        for i, row in enumerate(reader):
            line = i + 2
            try:
                t = row_to_trial(row)
            except RowError as exc:
                rejects.append((line, [str(exc)]))
                continue
            problems = validate_trial(t)
            if problems:
                rejects.append((line, problems))
            else:
                trials.append(t)
    return trials, rejects


def load_trials(path) -> list[Trial]:
    """Read a CSV and fail on the first rejected row."""
    trials, rejects = read_trials(path)
    if rejects:
        line, reasons = rejects[0]
        raise RowError(f"{path}: line {line}: {'; '.join(reasons)} ({len(rejects)} rejected rows)")
    return trials
