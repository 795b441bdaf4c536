"""Synthetic stand-in for the paired simulator study.

Every participant pair runs ``blocks`` repetitions of the full
TTA x crossing-site design in a seeded random order. Participant attributes
are drawn once per pair from truncated normals matching the published
sample statistics; outcomes come from a configurable ground-truth behavior
model (:class:`BehaviorModelParams`).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from typing import Mapping

import numpy as np

from .domain import LOCATIONS, Outcome, Participant, Trial
from .errors import ConfigError

BEHAVIOR_TERMS = (
    "tta", "zebra", "waiting_time", "ped_aiss", "dsvo", "tta_zebra", "aiss_zebra",
)
CD_FLOOR = 0.1  # seconds; additive CD noise is clipped here to keep durations positive


@dataclass(frozen=True)
class TruncNormal:
    mean: float
    sd: float
    low: float
    high: float

    def check(self, name: str) -> None:
        for k in ("mean", "sd", "low", "high"):
            if not math.isfinite(getattr(self, k)):
                raise ConfigError(f"{name}.{k}", "must be finite")
        if not self.sd > 0:
            raise ConfigError(f"{name}.sd", f"must be > 0, got {self.sd}")
        if not self.low < self.high:
            raise ConfigError(f"{name}.low", f"must be < high ({self.low} >= {self.high})")


@dataclass(frozen=True)
class RolePair:
    """A per-role pair of distributions (or scalars)."""

    driver: object
    pedestrian: object


def _load_default_behavior() -> dict:
    text = resources.files("pedcross").joinpath("data/default_behavior.json").read_text("utf-8")
    return json.loads(text)


@dataclass(frozen=True)
class BehaviorModelParams:
    """Ground-truth outcome model.

    Terms (see :data:`BEHAVIOR_TERMS`) are computed per trial by
    :func:`behavior_features`: centred TTA, zebra indicator, standardized
    waiting time, standardized pedestrian AISS, scaled SVO difference, and
    the TTA x zebra and AISS x zebra interactions.

    decision: ``P(cross) = sigmoid(intercept + coeffs . x + N(0, decision_noise_sd))``
    cit: ``cit_base * exp(cit_coeffs . x + N(0, cit_noise))``
    cd: ``cd_base[location] + cd_coeffs . x + N(0, cd_noise_sd)``, floored at ``CD_FLOOR``.
    """

    decision_intercept: float
    decision_coeffs: Mapping[str, float]
    decision_noise_sd: float
    cit_base: float
    cit_coeffs: Mapping[str, float]
    cit_noise: float
    cd_base_zebra: float
    cd_base_nonzebra: float
    cd_coeffs: Mapping[str, float]
    cd_noise_sd: float
    tta_center: float = 5.0

    @classmethod
    def default(cls) -> "BehaviorModelParams":
        return behavior_from_dict(_load_default_behavior())

    def check(self) -> None:
        for name in ("decision_coeffs", "cit_coeffs", "cd_coeffs"):
            coeffs = getattr(self, name)
            for k, v in coeffs.items():
                if k not in BEHAVIOR_TERMS:
                    raise ConfigError(f"behavior.{name}.{k}", f"unknown term; expected {BEHAVIOR_TERMS}")
                if not math.isfinite(v):
                    raise ConfigError(f"behavior.{name}.{k}", "must be finite")
        for name in ("decision_noise_sd", "cit_noise", "cd_noise_sd"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"behavior.{name}", f"must be >= 0, got {v}")
        for name in ("cit_base", "cd_base_zebra", "cd_base_nonzebra"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"behavior.{name}", f"must be > 0, got {v}")
        if not math.isfinite(self.decision_intercept):
            raise ConfigError("behavior.decision_intercept", "must be finite")


def behavior_from_dict(d: Mapping) -> BehaviorModelParams:
    known = {f.name for f in fields(BehaviorModelParams)}
    for k in d:
        if k not in known:
            raise ConfigError(f"behavior.{k}", "unknown field")
    kw = dict(d)
    for name in ("decision_coeffs", "cit_coeffs", "cd_coeffs"):
        kw[name] = {k: float(v) for k, v in dict(kw.get(name, {})).items()}
    try:
        params = BehaviorModelParams(**kw)
    except TypeError as exc:
        raise ConfigError("behavior", str(exc)) from None
    params.check()
    return params


def _default_sites():
    return (
        ("zebra_1", "zebra"), ("zebra_2", "zebra"),
        ("non_zebra_1", "non_zebra"), ("non_zebra_2", "non_zebra"),
    )


@dataclass(frozen=True)
class GeneratorConfig:
    n_pairs: int = 32
    tta_levels: tuple = (3.0, 4.0, 5.0, 6.0, 7.0)
    locations: tuple = field(default_factory=_default_sites)
    blocks: int = 2
    waiting_time_dist: TruncNormal = TruncNormal(52.71, 19.04, 13.8, 106.98)
    svo_dist: RolePair = RolePair(
        TruncNormal(53.17, 8.35, 45.00, 78.38), TruncNormal(53.67, 7.82, 43.92, 75.26)
    )
    aiss_dist: RolePair = RolePair(
        TruncNormal(53.78, 6.70, 43.00, 69.00), TruncNormal(50.47, 7.17, 27.00, 61.00)
    )
    age_dist: RolePair = RolePair(
        TruncNormal(31.53, 7.0, 21, 50), TruncNormal(25.09, 4.0, 19, 34)
    )
    female_prob: RolePair = RolePair(0.5, 0.5)
    behavior: BehaviorModelParams = field(default_factory=BehaviorModelParams.default)
    seed: int = 0

    def check(self) -> None:
        if not (isinstance(self.n_pairs, int) and self.n_pairs >= 1):
            raise ConfigError("n_pairs", f"must be an integer >= 1, got {self.n_pairs!r}")
        if not (isinstance(self.blocks, int) and self.blocks >= 1):
            raise ConfigError("blocks", f"must be an integer >= 1, got {self.blocks!r}")
        if not self.tta_levels or any(not (math.isfinite(t) and t > 0) for t in self.tta_levels):
            raise ConfigError("tta_levels", "must be a non-empty list of positive reals")
        if not self.locations:
            raise ConfigError("locations", "must list at least one site")
        for site, kind in self.locations:
            if kind not in LOCATIONS:
                raise ConfigError("locations", f"site {site!r} has type {kind!r}; expected {LOCATIONS}")
        self.waiting_time_dist.check("waiting_time_dist")
        for name in ("svo_dist", "aiss_dist", "age_dist"):
            pair = getattr(self, name)
            pair.driver.check(f"{name}.driver")
            pair.pedestrian.check(f"{name}.pedestrian")
        for role in ("driver", "pedestrian"):
            p = getattr(self.female_prob, role)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"female_prob.{role}", f"must be in [0, 1], got {p}")
        for role in ("driver", "pedestrian"):
            d = getattr(self.age_dist, role)
            if d.low < 18 or d.high > 100:
                raise ConfigError(f"age_dist.{role}", "bounds must lie within [18, 100]")
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2**64):
            raise ConfigError("seed", f"must be an unsigned 64-bit integer, got {self.seed!r}")
        self.behavior.check()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tta_levels"] = list(self.tta_levels)
        d["locations"] = [{"site": s, "type": k} for s, k in self.locations]
        return d


def _trunc_from(d, name) -> TruncNormal:
    try:
        return TruncNormal(float(d["mean"]), float(d["sd"]), float(d["low"]), float(d["high"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(name, f"expected mean/sd/low/high ({exc})") from None


def config_from_dict(d: Mapping) -> GeneratorConfig:
    """Build and validate a :class:`GeneratorConfig` from a plain mapping.

    Missing fields take defaults; unknown fields are rejected.
    """
    known = {f.name for f in fields(GeneratorConfig)}
    for k in d:
        if k not in known:
            raise ConfigError(k, "unknown field")
    kw = {}
    if "n_pairs" in d:
        kw["n_pairs"] = d["n_pairs"]
    if "blocks" in d:
        kw["blocks"] = d["blocks"]
    if "seed" in d:
        kw["seed"] = d["seed"]
    if "tta_levels" in d:
        try:
            kw["tta_levels"] = tuple(float(t) for t in d["tta_levels"])
        except (TypeError, ValueError):
            raise ConfigError("tta_levels", "must be a list of numbers") from None
    if "locations" in d:
        try:
            kw["locations"] = tuple((str(s["site"]), str(s["type"])) for s in d["locations"])
        except (KeyError, TypeError):
            raise ConfigError("locations", "expected a list of {site, type} records") from None
    if "waiting_time_dist" in d:
        kw["waiting_time_dist"] = _trunc_from(d["waiting_time_dist"], "waiting_time_dist")
    for name in ("svo_dist", "aiss_dist", "age_dist"):
        if name in d:
            sub = d[name]
            if not isinstance(sub, Mapping):
                raise ConfigError(name, "expected {driver, pedestrian}")
            base = getattr(GeneratorConfig, name)
            kw[name] = RolePair(
                _trunc_from(sub["driver"], f"{name}.driver") if "driver" in sub else base.driver,
                _trunc_from(sub["pedestrian"], f"{name}.pedestrian") if "pedestrian" in sub else base.pedestrian,
            )
    if "female_prob" in d:
        sub = d["female_prob"]
        kw["female_prob"] = RolePair(float(sub.get("driver", 0.5)), float(sub.get("pedestrian", 0.5)))
    if "behavior" in d:
        merged = {**_load_default_behavior(), **d["behavior"]}
        kw["behavior"] = behavior_from_dict(merged)
    cfg = GeneratorConfig(**kw)
    cfg.check()
    return cfg


def load_config(path) -> GeneratorConfig:
    """Read a generator config from a ``.json`` or ``.toml`` file."""
    from .util import read_structured

    return config_from_dict(read_structured(path))


# Behavior model ---------------------------------------------------------------

def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def behavior_features(tta, zebra, waiting_time, ped_aiss, dsvo, config: GeneratorConfig) -> dict:
    """Ground-truth covariates for one trial, standardized with the config's distributions."""
    b = config.behavior
    t = tta - b.tta_center
    z = 1.0 if zebra else 0.0
    aiss = (ped_aiss - config.aiss_dist.pedestrian.mean) / config.aiss_dist.pedestrian.sd
    dsvo_scale = math.hypot(config.svo_dist.driver.sd, config.svo_dist.pedestrian.sd)
    return {
        "tta": t,
        "zebra": z,
        "waiting_time": (waiting_time - config.waiting_time_dist.mean) / config.waiting_time_dist.sd,
        "ped_aiss": aiss,
        "dsvo": dsvo / dsvo_scale,
        "tta_zebra": t * z,
        "aiss_zebra": aiss * z,
    }


def trial_behavior_features(trial: Trial, config: GeneratorConfig) -> dict:
    return behavior_features(
        trial.tta, trial.location == "zebra", trial.waiting_time,
        trial.pedestrian.aiss, trial.pedestrian.svo - trial.driver.svo, config,
    )


def _linear(coeffs: Mapping[str, float], x: Mapping[str, float]) -> float:
    return sum(coeffs.get(k, 0.0) * x[k] for k in BEHAVIOR_TERMS)


def ground_truth_crossing_probability(params: BehaviorModelParams, features: Mapping[str, float]) -> float:
    """Noise-free crossing probability ``sigmoid(intercept + coeffs . x)``."""
    return sigmoid(params.decision_intercept + _linear(params.decision_coeffs, features))


# Sampling ----------------------------------------------------------------------

def sample_truncnorm(rng: np.random.Generator, dist: TruncNormal, size: int) -> np.ndarray:
    """Rejection sampling from the untruncated normal."""
    out = np.empty(size)
    filled = 0
    while filled < size:
        draw = rng.normal(dist.mean, dist.sd, size=max(size - filled, 8))
        ok = draw[(draw >= dist.low) & (draw <= dist.high)]
        take = min(ok.size, size - filled)
        out[filled:filled + take] = ok[:take]
        filled += take
    return out


def _participant(rng, config: GeneratorConfig, role: str, pair_id: str) -> Participant:
    age = sample_truncnorm(rng, getattr(config.age_dist, role), 1)[0]
    svo = sample_truncnorm(rng, getattr(config.svo_dist, role), 1)[0]
    aiss = sample_truncnorm(rng, getattr(config.aiss_dist, role), 1)[0]
    female = rng.random() < getattr(config.female_prob, role)
    return Participant(
        id=f"{pair_id}-{'D' if role == 'driver' else 'P'}",
        role=role,
        age=int(round(age)),
        gender="F" if female else "M",
        svo=round(float(svo), 2),
        aiss=round(float(aiss), 2),
    )


def generate_dataset(config: GeneratorConfig | None = None) -> list[Trial]:
    """Generate ``n_pairs * len(tta_levels) * len(locations) * blocks`` trials.

    Fully determined by ``config`` (including ``config.seed``).
    """
    config = config or GeneratorConfig()
    config.check()
    rng = np.random.default_rng(config.seed)
    b = config.behavior
    width = len(str(config.n_pairs))
    conditions = [
        (tta, kind)
        for _ in range(config.blocks)
        for tta in config.tta_levels
        for _, kind in config.locations
    ]
    trials = []
    for p in range(config.n_pairs):
        pair_id = f"P{p + 1:0{width}d}"
        driver = _participant(rng, config, "driver", pair_id)
        ped = _participant(rng, config, "pedestrian", pair_id)
        order = rng.permutation(len(conditions))
        for idx in order:
            tta, kind = conditions[idx]
            tw = round(float(sample_truncnorm(rng, config.waiting_time_dist, 1)[0]), 2)
            # fixed draw order per trial keeps the stream independent of outcomes
            eps_d, eps_cit, eps_cd = rng.normal(size=3)
            u = rng.random()
            x = behavior_features(tta, kind == "zebra", tw, ped.aiss, ped.svo - driver.svo, config)
            logit = b.decision_intercept + _linear(b.decision_coeffs, x) + b.decision_noise_sd * eps_d
            if u < sigmoid(logit):
                cit = b.cit_base * math.exp(_linear(b.cit_coeffs, x) + b.cit_noise * eps_cit)
                base = b.cd_base_zebra if kind == "zebra" else b.cd_base_nonzebra
                cd = max(base + _linear(b.cd_coeffs, x) + b.cd_noise_sd * eps_cd, CD_FLOOR)
                outcome = Outcome(1, round(float(cit), 3), round(float(cd), 3))
            else:
                outcome = Outcome(0)
            trials.append(Trial(pair_id, driver, ped, float(tta), tw, kind, outcome))
    return trials
