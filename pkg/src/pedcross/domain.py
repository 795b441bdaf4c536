"""Core vocabulary: participants, trials, outcomes and the named feature sets.

All types are frozen dataclasses. Constructors do not validate; use
:func:`validate_trial` to collect invariant violations as data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

ROLES = ("driver", "pedestrian")
GENDERS = ("F", "M")
LOCATIONS = ("zebra", "non_zebra")

AGE_MIN, AGE_MAX = 18, 100


@dataclass(frozen=True)
class Participant:
    id: str
    role: str
    age: int
    gender: str
    svo: float
    aiss: float


@dataclass(frozen=True)
class Outcome:
    """Crossing decision (1 = cross, 0 = wait) plus timing for crossing trials."""

    decision: int
    cit: Optional[float] = None
    cd: Optional[float] = None


@dataclass(frozen=True)
class Trial:
    pair_id: str
    driver: Participant
    pedestrian: Participant
    tta: float
    waiting_time: float
    location: str
    outcome: Outcome


def _participant_violations(p: Participant, expected_role: str) -> list[str]:
    who = expected_role
    out = []
    if p.role != expected_role:
        out.append(f"{who}.role must be {expected_role!r}, got {p.role!r}")
    if not (AGE_MIN <= p.age <= AGE_MAX):
        out.append(f"{who}.age must be in [{AGE_MIN}, {AGE_MAX}], got {p.age}")
    if p.gender not in GENDERS:
        out.append(f"{who}.gender must be one of {GENDERS}, got {p.gender!r}")
    if not math.isfinite(p.svo):
        out.append(f"{who}.svo must be finite")
    if not math.isfinite(p.aiss):
        out.append(f"{who}.aiss must be finite")
    return out


def validate_trial(trial: Trial) -> list[str]:
    """Return every violated invariant of ``trial``; an empty list means valid."""
    out = _participant_violations(trial.driver, "driver")
    out += _participant_violations(trial.pedestrian, "pedestrian")
    if not (math.isfinite(trial.tta) and trial.tta > 0):
        out.append("tta must be positive")
    if not (math.isfinite(trial.waiting_time) and trial.waiting_time > 0):
        out.append("waiting_time must be positive")
    if trial.location not in LOCATIONS:
        out.append(f"location must be one of {LOCATIONS}, got {trial.location!r}")

    oc = trial.outcome
    if oc.decision not in (0, 1):
        out.append(f"decision must be 0 or 1, got {oc.decision!r}")
    elif oc.decision == 0:
        if oc.cit is not None:
            out.append("cit present for waiting trial")
        if oc.cd is not None:
            out.append("cd present for waiting trial")
    else:
        if oc.cit is None:
            out.append("cit missing for crossing trial")
        if oc.cd is None:
            out.append("cd missing for crossing trial")
    for name in ("cit", "cd"):
        v = getattr(oc, name)
        if v is not None and not (math.isfinite(v) and v > 0):
            out.append(f"{name} must be positive and finite")
    return out


def derive_delta_features(trial: Trial) -> tuple[float, float]:
    """Pedestrian-minus-driver differences ``(dSVO, dAISS)``."""
    return (
        trial.pedestrian.svo - trial.driver.svo,
        trial.pedestrian.aiss - trial.driver.aiss,
    )


# Feature identifiers ---------------------------------------------------------

NUMERIC_FEATURES = (
    "T_a", "T_w", "A_d", "A_p", "SVO_d", "SVO_p", "AISS_d", "AISS_p", "dSVO", "dAISS",
)
CATEGORICAL_FEATURES = ("L", "G_d", "G_p", "pair_id")
ALL_FEATURES = NUMERIC_FEATURES + CATEGORICAL_FEATURES

# Fixed category order for enum-valued features; open-ended ones sort lexicographically.
ENUM_CATEGORIES = {"L": LOCATIONS, "G_d": GENDERS, "G_p": GENDERS}

_ACCESSORS = {
    "T_a": lambda t: t.tta,
    "T_w": lambda t: t.waiting_time,
    "L": lambda t: t.location,
    "A_d": lambda t: t.driver.age,
    "A_p": lambda t: t.pedestrian.age,
    "G_d": lambda t: t.driver.gender,
    "G_p": lambda t: t.pedestrian.gender,
    "SVO_d": lambda t: t.driver.svo,
    "SVO_p": lambda t: t.pedestrian.svo,
    "AISS_d": lambda t: t.driver.aiss,
    "AISS_p": lambda t: t.pedestrian.aiss,
    "dSVO": lambda t: derive_delta_features(t)[0],
    "dAISS": lambda t: derive_delta_features(t)[1],
    "pair_id": lambda t: t.pair_id,
}


def feature_value(trial: Trial, feature: str):
    """Raw value of ``feature`` for ``trial`` (float for numeric, str for categorical)."""
    try:
        acc = _ACCESSORS[feature]
    except KeyError:
        raise KeyError(f"unknown feature identifier {feature!r}") from None
    v = acc(trial)
    return v if feature in CATEGORICAL_FEATURES else float(v)


FEATURE_SETS: dict[str, tuple[str, ...]] = {
    "baseline": ("T_a", "T_w", "L", "A_p", "G_p", "dSVO", "dAISS", "pair_id"),
    "ours": ("T_a", "T_w", "L", "A_d", "A_p", "G_d", "G_p", "SVO_d", "SVO_p", "AISS_d", "AISS_p"),
    "ours_delta": (
        "T_a", "T_w", "L", "A_d", "A_p", "G_d", "G_p",
        "SVO_d", "SVO_p", "AISS_d", "AISS_p", "dSVO", "dAISS",
    ),
    "subset1": ("T_a", "T_w", "L", "A_d", "A_p", "G_d", "G_p"),
    "subset2": ("T_a", "T_w", "L", "A_d", "G_d"),
    "subset3": ("T_a", "T_w", "L", "A_p", "G_p"),
    "subset4": ("T_a", "T_w", "L"),
}


@dataclass(frozen=True)
class FeatureSetSpec:
    """One of the seven named feature sets.

    Build with ``FeatureSetSpec.named("ours")``; direct construction is
    accepted only when ``columns`` equals the registered list for ``name``.
    """

    name: str
    columns: tuple[str, ...]

    def __post_init__(self):
        if self.name not in FEATURE_SETS:
            raise ValueError(
                f"unknown feature set {self.name!r}; expected one of {sorted(FEATURE_SETS)}"
            )
        if tuple(self.columns) != FEATURE_SETS[self.name]:
            raise ValueError(f"columns for feature set {self.name!r} do not match its definition")
        object.__setattr__(self, "columns", tuple(self.columns))

    @classmethod
    def named(cls, name: str) -> "FeatureSetSpec":
        if name not in FEATURE_SETS:
            raise ValueError(
                f"unknown feature set {name!r}; expected one of {sorted(FEATURE_SETS)}"
            )
        return cls(name, FEATURE_SETS[name])


def target_value(trial: Trial, task: str) -> Optional[float]:
    """Outcome variable for ``task`` in {decision, cit, cd}."""
    if task == "decision":
        return float(trial.outcome.decision)
    if task in ("cit", "cd"):
        return getattr(trial.outcome, task)
    raise ValueError(f"unknown task {task!r}")


TASKS = ("decision", "cit", "cd")
