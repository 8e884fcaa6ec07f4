"""CSV ingestion and the preprocessing pipeline.

Feature columns above a missing-rate threshold are dropped, categoricals are
one-hot encoded with lexicographically ordered levels, and missing cells get
a sentinel below the observed minimum plus a 0/1 indicator column.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional

import numpy as np

from .survival import InvalidTimeError, ObservationGrid, SurvivalDataset, map_to_periods

NUMERIC = "numeric"
CATEGORICAL = "categorical"
TIME_LABEL = "time-label"
EVENT_LABEL = "event-label"
IGNORE = "ignore"
KINDS = (NUMERIC, CATEGORICAL, TIME_LABEL, EVENT_LABEL, IGNORE)

NA_VALUES = frozenset({"", "NA", "NaN", "nan", "null", "NULL"})


class DataError(ValueError):
    """Malformed input data."""


class SchemaError(DataError):
    pass


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")


@dataclass
class Table:
    """Typed columns: float arrays (NaN = missing) or object arrays (None = missing)."""

    columns: dict[str, np.ndarray]
    kinds: dict[str, str]

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def column_of_kind(self, kind: str) -> Optional[str]:
        names = [n for n, k in self.kinds.items() if k == kind]
        return names[0] if names else None


def _parse_float(cell: str) -> Optional[float]:
    try:
        return float(cell)
    except ValueError:
        return None


def _normalize_schema(schema) -> dict[str, str]:
    if schema is None:
        return {}
    if isinstance(schema, Mapping):
        items = [ColumnSchema(str(k), str(v)) for k, v in schema.items()]
    else:
        items = list(schema)
    return {c.name: c.kind for c in items}


def load_table(path, schema=None, require_labels: bool = True,
               na_values=NA_VALUES) -> Table:
    """Read a CSV with a header row into a typed :class:`Table`.

    ``schema`` maps column names to kinds (or is a list of
    :class:`ColumnSchema`). Undeclared columns are numeric when every
    non-missing cell parses as a number, categorical otherwise.
    """
    declared = _normalize_schema(schema)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise DataError(f"{path}: empty file")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
                rows.append(row)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    header = [h.strip() for h in header]
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names")

    label_kinds = (TIME_LABEL, EVENT_LABEL)
    for name, kind in declared.items():
        if name in header or kind == IGNORE or (kind in label_kinds and not require_labels):
            continue
        raise SchemaError(f"declared {kind} column {name!r} missing from {path}")
    if require_labels:
        for kind in label_kinds:
            n = sum(1 for v in declared.values() if v == kind)
            if n != 1:
                raise SchemaError(f"schema must declare exactly one {kind} column, found {n}")

    columns, kinds = {}, {}
    for c, name in enumerate(header):
        raw = [row[c].strip() for row in rows]
        missing = [cell in na_values for cell in raw]
        kind = declared.get(name)
        parsed = [None if m else _parse_float(cell) for cell, m in zip(raw, missing)]
        numeric_ok = all(p is not None for p, m in zip(parsed, missing) if not m)
        if kind is None:
            kind = NUMERIC if numeric_ok else CATEGORICAL
        if kind == IGNORE:
            continue
        if kind == CATEGORICAL:
            columns[name] = np.array([None if m else cell for cell, m in zip(raw, missing)],
                                     dtype=object)
        else:
            if not numeric_ok:
                bad = next(cell for cell, p, m in zip(raw, parsed, missing) if not m and p is None)
                raise DataError(f"column {name!r} ({kind}) has non-numeric value {bad!r}")
            columns[name] = np.array([np.nan if p is None else p for p in parsed], dtype=float)
        kinds[name] = kind
    return Table(columns, kinds)


@dataclass
class PreprocessPlan:
    """Frozen preprocessing recipe; applies identically to any later table."""

    numeric: list[dict] = field(default_factory=list)
    categorical: list[dict] = field(default_factory=list)
    dropped: dict[str, str] = field(default_factory=dict)
    schema: dict[str, str] = field(default_factory=dict)
    missing_rate_threshold: float = 0.8
    time_unit: float = 1.0

    @property
    def feature_names(self) -> list[str]:
        names = [c["name"] for c in self.numeric]
        names += [f"{c['name']}__missing" for c in self.numeric if c["indicator"]]
        names += [f"{c['name']}__missing" for c in self.categorical if c["indicator"]]
        for c in self.categorical:
            names += [f"{c['name']}={lvl}" for lvl in c["levels"]]
        return names

    @property
    def width(self) -> int:
        return len(self.feature_names)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["feature_names"] = self.feature_names
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, doc: dict) -> "PreprocessPlan":
        doc = {k: v for k, v in doc.items() if k != "feature_names"}
        return cls(**doc)

    @classmethod
    def from_json(cls, text: str) -> "PreprocessPlan":
        return cls.from_dict(json.loads(text))


def build_plan(table: Table, missing_rate_threshold: float = 0.8,
               time_unit: float = 1.0) -> PreprocessPlan:
    """Derive a plan from a training table.

    Feature columns whose missing share exceeds ``missing_rate_threshold``
    are dropped. ``time_unit`` is recorded for :func:`bind_labels`.
    """
    plan = PreprocessPlan(schema=dict(table.kinds), missing_rate_threshold=missing_rate_threshold,
                          time_unit=time_unit)
    n = table.n_rows
    for name, kind in table.kinds.items():
        if kind not in (NUMERIC, CATEGORICAL):
            continue
        col = table.columns[name]
        miss = _missing(col)
        rate = float(miss.mean()) if n else 1.0
        if rate > missing_rate_threshold:
            plan.dropped[name] = f"missing rate {rate:.3f} > {missing_rate_threshold}"
            continue
        has_missing = bool(miss.any())
        if kind == NUMERIC:
            observed = col[~miss]
            sentinel = float(observed.min()) - 1.0 if observed.size else -1.0
            plan.numeric.append({"name": name, "sentinel": sentinel, "indicator": has_missing})
        else:
            levels = sorted({str(v) for v in col[~miss]})
            plan.categorical.append({"name": name, "levels": levels, "indicator": has_missing})
    return plan


def _missing(col: np.ndarray) -> np.ndarray:
    if col.dtype == object:
        return np.array([v is None for v in col], dtype=bool)
    return np.isnan(col)


def apply_plan(plan: PreprocessPlan, table: Table) -> tuple[np.ndarray, list[str]]:
    """Feature matrix in the plan's column order: numerics, indicators, one-hot blocks."""
    n = table.n_rows
    blocks, indicators = [], []
    for entry in plan.numeric:
        col = _get(table, entry["name"])
        if col.dtype == object:
            raise DataError(f"column {entry['name']!r} is not numeric")
        miss = np.isnan(col)
        blocks.append(np.where(miss, entry["sentinel"], col))
        if entry["indicator"]:
            indicators.append(miss.astype(float))
    onehot = []
    for entry in plan.categorical:
        col = _get(table, entry["name"])
        values = np.array([None if _isna(v) else _level(v) for v in col], dtype=object)
        miss = np.array([v is None for v in values], dtype=bool)
        if entry["indicator"]:
            indicators.append(miss.astype(float))
        for lvl in entry["levels"]:
            onehot.append((values == lvl).astype(float))
    cols = blocks + indicators + onehot
    X = np.column_stack(cols) if cols else np.empty((n, 0))
    return X, plan.feature_names


def _isna(v) -> bool:
    return v is None or (isinstance(v, float) and math.isnan(v))


def _level(v) -> str:
    # categoricals read back as numbers keep their original spelling where possible
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return str(v)


def _get(table: Table, name: str) -> np.ndarray:
    if name not in table.columns:
        raise SchemaError(f"column {name!r} required by the plan is missing")
    return table.columns[name]


def bind_labels(table: Table, grid: ObservationGrid, plan: PreprocessPlan,
                time_unit: Optional[float] = None) -> SurvivalDataset:
    """Attach ``(event_period, event)`` labels to the plan's feature matrix.

    Times are divided by ``time_unit`` (default: the plan's) before mapping
    onto ``grid``.
    """
    if time_unit is None:
        time_unit = plan.time_unit
    time_col = table.column_of_kind(TIME_LABEL)
    event_col = table.column_of_kind(EVENT_LABEL)
    if time_col is None or event_col is None:
        raise SchemaError("table lacks a time-label or event-label column")
    times = table.columns[time_col]
    events = table.columns[event_col]
    if np.any(np.isnan(times)):
        raise DataError(f"{int(np.isnan(times).sum())} records have a missing time label")
    if np.any(times <= 0):
        raise DataError("time labels must be positive")
    if np.any(np.isnan(events)) or not np.all((events == 0) | (events == 1)):
        raise DataError("event labels must be 0 or 1")
    try:
        periods = map_to_periods(times / time_unit, grid)
    except InvalidTimeError as exc:
        raise DataError(str(exc)) from exc
    X, names = apply_plan(plan, table)
    return SurvivalDataset(X, periods, events.astype(np.int64), grid, names)
