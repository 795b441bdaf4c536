"""Design-matrix construction: one-hot groups, derived deltas, z-scoring.

The standardizer is fitted on training rows only and must be applied once;
applying it to an already-scaled matrix is rejected as a column mismatch.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .domain import (
    CATEGORICAL_FEATURES,
    ENUM_CATEGORIES,
    FeatureSetSpec,
    Trial,
    feature_value,
)
from .errors import EncodingError, ShapeError

EPS = 1e-12


@dataclass(frozen=True)
class ColumnMeta:
    source: str
    category: Optional[str] = None
    mean: Optional[float] = None
    sd: Optional[float] = None

    @property
    def one_hot(self) -> bool:
        return self.category is not None

    @property
    def name(self) -> str:
        return self.source if self.category is None else f"{self.source}={self.category}"

    def to_dict(self) -> dict:
        return {"source": self.source, "category": self.category, "mean": self.mean, "sd": self.sd}

    @classmethod
    def from_dict(cls, d) -> "ColumnMeta":
        return cls(d["source"], d.get("category"), d.get("mean"), d.get("sd"))


@dataclass(frozen=True)
class DesignMatrix:
    rows: np.ndarray
    column_meta: tuple[ColumnMeta, ...]
    row_index: tuple[int, ...]

    def __post_init__(self):
        rows = np.array(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != len(self.column_meta):
            raise ShapeError(f"rows shape {rows.shape} does not match {len(self.column_meta)} columns")
        if rows.shape[0] != len(self.row_index):
            raise ShapeError("row_index length does not match number of rows")
        if not np.all(np.isfinite(rows)):
            raise EncodingError("design matrix contains NaN or Inf")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "column_meta", tuple(self.column_meta))
        object.__setattr__(self, "row_index", tuple(self.row_index))

    @property
    def shape(self):
        return self.rows.shape

    @property
    def column_names(self) -> list[str]:
        return [m.name for m in self.column_meta]

    def take(self, idx) -> "DesignMatrix":
        idx = np.asarray(idx, dtype=int)
        return DesignMatrix(self.rows[idx], self.column_meta, tuple(self.row_index[i] for i in idx))

    def one_hot_groups(self) -> dict[str, list[int]]:
        groups: dict[str, list[int]] = {}
        for j, m in enumerate(self.column_meta):
            if m.one_hot:
                groups.setdefault(m.source, []).append(j)
        return groups

    def decode(self, source: str) -> list[str]:
        """Recover the category of one-hot group ``source`` for every row."""
        cols = [j for j, m in enumerate(self.column_meta) if m.source == source and m.one_hot]
        if not cols:
            raise KeyError(f"no one-hot group {source!r}")
        labels = [self.column_meta[j].category for j in cols]
        return [labels[k] for k in np.argmax(self.rows[:, cols], axis=1)]


class Encoder:
    """Learns the category vocabulary of each one-hot group, then encodes trials.

    Enum-valued features (location, gender) keep the domain's declared order;
    open-ended ones (pair_id) are sorted lexicographically. Only categories
    seen during :meth:`fit` get a column.
    """

    def __init__(self, spec: FeatureSetSpec):
        self.spec = spec
        self.categories: dict[str, tuple[str, ...]] = {}

    def fit(self, trials: Sequence[Trial]) -> "Encoder":
        for f in self.spec.columns:
            if f in CATEGORICAL_FEATURES:
                seen = {feature_value(t, f) for t in trials}
                if f in ENUM_CATEGORIES:
                    cats = tuple(c for c in ENUM_CATEGORIES[f] if c in seen)
                    cats += tuple(sorted(seen - set(cats)))
                else:
                    cats = tuple(sorted(seen))
                self.categories[f] = cats
        return self

    def column_meta(self) -> tuple[ColumnMeta, ...]:
        meta = []
        for f in self.spec.columns:
            if f in CATEGORICAL_FEATURES:
                meta.extend(ColumnMeta(f, c) for c in self.categories[f])
            else:
                meta.append(ColumnMeta(f))
        return tuple(meta)

    def transform(self, trials: Sequence[Trial]) -> DesignMatrix:
        meta = self.column_meta()
        out = np.zeros((len(trials), len(meta)))
        j = 0
        for f in self.spec.columns:
            if f in CATEGORICAL_FEATURES:
                cats = self.categories[f]
                pos = {c: k for k, c in enumerate(cats)}
                for i, t in enumerate(trials):
                    v = feature_value(t, f)
                    if v not in pos:
                        raise EncodingError(f"unknown category {v!r} for feature {f}")
                    out[i, j + pos[v]] = 1.0
                j += len(cats)
            else:
                out[:, j] = [feature_value(t, f) for t in trials]
                j += 1
        return DesignMatrix(out, meta, tuple(range(len(trials))))


def encode(trials: Sequence[Trial], spec: FeatureSetSpec) -> DesignMatrix:
    """Encode ``trials`` under feature set ``spec`` (vocabulary taken from ``trials``)."""
    return Encoder(spec).fit(trials).transform(trials)


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    sd: np.ndarray
    scaled: np.ndarray  # bool mask; one-hot columns are False
    column_meta: tuple[ColumnMeta, ...]

    @classmethod
    def identity(cls, column_meta) -> "Standardizer":
        d = len(column_meta)
        mask = np.array([not m.one_hot for m in column_meta])
        return cls(np.zeros(d), np.ones(d), mask, tuple(column_meta))


def fit_standardizer(matrix: DesignMatrix, rows=None) -> Standardizer:
    """Per-column mean and population sd over ``rows`` (default: all rows)."""
    X = matrix.rows if rows is None else matrix.rows[np.asarray(rows, dtype=int)]
    if X.shape[0] == 0:
        raise ValueError("cannot fit a standardizer on zero rows")
    mask = np.array([not m.one_hot for m in matrix.column_meta])
    mean = np.where(mask, X.mean(axis=0), 0.0)
    sd = np.where(mask, np.maximum(X.std(axis=0), EPS), 1.0)
    return Standardizer(mean, sd, mask, matrix.column_meta)


def apply_standardizer(std: Standardizer, matrix: DesignMatrix) -> DesignMatrix:
    """``(x - mean) / sd`` on scaled columns; records the statistics in column_meta."""
    if tuple(matrix.column_meta) != tuple(std.column_meta):
        raise ShapeError("matrix columns do not match the standardizer's columns")
    X = (matrix.rows - std.mean) / std.sd
    X = np.where(std.scaled, X, matrix.rows)
    meta = tuple(
        replace(m, mean=float(mu), sd=float(s)) if flag else m
        for m, mu, s, flag in zip(matrix.column_meta, std.mean, std.sd, std.scaled)
    )
    return DesignMatrix(X, meta, matrix.row_index)


def encode_with_meta(trials: Sequence[Trial], column_meta: Sequence[ColumnMeta]) -> DesignMatrix:
    """Encode and scale ``trials`` exactly as a trained model's ``column_meta`` records.

    Used to apply a saved model to new data: categories come from the stored
    one-hot columns and numeric columns reuse the stored mean and sd.
    """
    meta = tuple(column_meta)
    known: dict[str, set] = {}
    for m in meta:
        if m.one_hot:
            known.setdefault(m.source, set()).add(m.category)
    out = np.zeros((len(trials), len(meta)))
    for i, t in enumerate(trials):
        for src, cats in known.items():
            v = feature_value(t, src)
            if v not in cats:
                raise EncodingError(f"unknown category {v!r} for feature {src}")
        for j, m in enumerate(meta):
            v = feature_value(t, m.source)
            if m.one_hot:
                out[i, j] = float(v == m.category)
            elif m.mean is not None and m.sd is not None:
                out[i, j] = (float(v) - m.mean) / m.sd
            else:
                out[i, j] = float(v)
    return DesignMatrix(out, meta, tuple(range(len(trials))))


def dump_matrix(matrix: DesignMatrix, path) -> None:
    """Write the matrix as CSV; the first row holds column names."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row"] + matrix.column_names)
        for rid, row in zip(matrix.row_index, matrix.rows):
            w.writerow([rid] + [repr(float(v)) for v in row])
