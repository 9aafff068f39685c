"""Tabular ingestion and the validated Dataset container.

A Dataset is immutable after construction: arrays are copied and marked
read-only, so instances are safe to share across threads and across the
resampling engine's workers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    EmptyAfterFiltering,
    ParseError,
)

# Cell values treated as missing during ingestion. Non-finite numerics
# (inf, nan) are also dropped: the Dataset contract forbids propagating them.
MISSING_TOKENS = frozenset({"", ".", "na", "n/a", "nan", "null", "none"})

INTERCEPT_NAME = "const"


def _is_missing(token: str) -> bool:
    return token.strip().lower() in MISSING_TOKENS


@dataclass(frozen=True)
class Dataset:
    """Columnar regression data: outcome, design matrix, and optional labels.

    ``covariates`` is the full design matrix (intercept column included when
    requested at build time). ``cluster_labels`` maps a dimension name to a
    dense integer label vector (0..C-1). ``treatment`` mirrors the design
    column named ``treatment_name`` and must be binary.
    """

    outcome: np.ndarray
    covariates: np.ndarray
    column_names: tuple[str, ...]
    cluster_labels: dict[str, np.ndarray] = field(default_factory=dict)
    treatment: np.ndarray | None = None
    treatment_name: str | None = None

    def __post_init__(self):
        y = np.ascontiguousarray(np.asarray(self.outcome, dtype=np.float64))
        X = np.ascontiguousarray(np.asarray(self.covariates, dtype=np.float64))
        if X.ndim != 2:
            raise DataError("covariates must be a 2-d matrix")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise DataError(
                f"outcome length {y.shape[0]} != covariate row count {X.shape[0]}"
            )
        if len(self.column_names) != X.shape[1]:
            raise DataError("column_names length must match covariate columns")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
            raise DataError("non-finite values in outcome or covariates")
        labels: dict[str, np.ndarray] = {}
        for name, lab in self.cluster_labels.items():
            lv = np.ascontiguousarray(np.asarray(lab, dtype=np.int64))
            if lv.shape[0] != y.shape[0]:
                raise DataError(f"cluster dimension {name!r} has wrong length")
            if lv.size and (lv.min() < 0 or not np.array_equal(
                np.unique(lv), np.arange(lv.max() + 1)
            )):
                raise DataError(f"cluster dimension {name!r} labels are not dense 0..C-1")
            lv.setflags(write=False)
            labels[name] = lv
        t = self.treatment
        if t is not None:
            t = np.ascontiguousarray(np.asarray(t, dtype=np.float64))
            if t.shape[0] != y.shape[0]:
                raise DataError("treatment vector has wrong length")
            if not np.all((t == 0.0) | (t == 1.0)):
                raise DataError("treatment vector must be binary 0/1")
            if self.treatment_name is None:
                raise DataError("treatment vector requires treatment_name")
            if self.treatment_name not in self.column_names:
                raise DataError(
                    f"treatment column {self.treatment_name!r} is not in the design"
                )
            j = self.column_names.index(self.treatment_name)
            if not np.array_equal(X[:, j], t):
                raise DataError("treatment vector does not match its design column")
            t.setflags(write=False)
        y.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "outcome", y)
        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "column_names", tuple(self.column_names))
        object.__setattr__(self, "cluster_labels", labels)
        object.__setattr__(self, "treatment", t)

    @property
    def n_rows(self) -> int:
        return self.outcome.shape[0]

    @property
    def n_columns(self) -> int:
        return self.covariates.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.covariates[:, self.column_names.index(name)]


def build_dataset(
    outcome,
    covariates,
    column_names=None,
    *,
    add_intercept: bool = True,
    cluster_labels=None,
    treatment=None,
    treatment_name: str | None = None,
) -> Dataset:
    """Assemble a Dataset from plain arrays, prepending an intercept column.

    ``covariates`` here excludes the intercept; pass ``add_intercept=False``
    to suppress it (the design is then exactly what was given).
    """
    X = np.asarray(covariates, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    k = X.shape[1]
    if column_names is None:
        column_names = [f"x{j}" for j in range(1, k + 1)]
    names = list(column_names)
    if add_intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
        names = [INTERCEPT_NAME] + names
    return Dataset(
        outcome=np.asarray(outcome, dtype=np.float64),
        covariates=X,
        column_names=tuple(names),
        cluster_labels=dict(cluster_labels or {}),
        treatment=treatment,
        treatment_name=treatment_name,
    )


@dataclass(frozen=True)
class IngestReport:
    """Bookkeeping from CSV ingestion: what was read, kept, and dropped."""

    n_rows_read: int
    n_rows_used: int
    n_dropped: int
    dropped_by_column: dict[str, int]
    label_maps: dict[str, dict[str, int]]


def read_csv_columns(path) -> dict[str, list[str]]:
    """Read an RFC-4180 CSV with a header row into raw string columns."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column names in header")
        columns: dict[str, list[str]] = {h: [] for h in header}
        for line_no, row in enumerate(reader, start=2):
            if not row or all(cell.strip() == "" for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: line {line_no} has {len(row)} fields, expected {len(header)}"
                )
            for h, cell in zip(header, row):
                columns[h].append(cell)
    return columns


def ingest_csv(
    path,
    *,
    outcome: str,
    covariates,
    cluster_columns=(),
    treatment: str | None = None,
    add_intercept: bool = True,
) -> tuple[Dataset, IngestReport]:
    """Ingest a CSV into a typed Dataset with listwise deletion.

    Rows missing any required field (outcome, covariates, treatment, cluster
    labels) are dropped and counted per column; unparseable non-missing cells
    raise :class:`ParseError` with the 1-based data line and column name.
    Cluster columns may be categorical; labels are densified in first
    appearance order and the mapping is reported.
    """
    return dataset_from_columns(
        read_csv_columns(path),
        outcome=outcome,
        covariates=covariates,
        cluster_columns=cluster_columns,
        treatment=treatment,
        add_intercept=add_intercept,
        source=str(path),
    )


def dataset_from_columns(
    columns: dict[str, list[str]],
    *,
    outcome: str,
    covariates,
    cluster_columns=(),
    treatment: str | None = None,
    add_intercept: bool = True,
    source: str = "<columns>",
) -> tuple[Dataset, IngestReport]:
    """Typed-Dataset construction from raw string columns (see ingest_csv)."""
    path = source
    covariates = list(covariates)
    if treatment is not None and treatment not in covariates:
        covariates = covariates + [treatment]
    required = [outcome] + covariates + list(cluster_columns)
    for name in required:
        if name not in columns:
            raise ConfigError(f"column {name!r} not found in {path}")

    n_read = len(columns[outcome])
    numeric_cols = [outcome] + covariates
    parsed: dict[str, np.ndarray] = {}
    row_ok = np.ones(n_read, dtype=bool)
    dropped_by_column: dict[str, int] = {}

    for name in numeric_cols:
        vals = np.empty(n_read, dtype=np.float64)
        missing = np.zeros(n_read, dtype=bool)
        for i, token in enumerate(columns[name]):
            if _is_missing(token):
                missing[i] = True
                continue
            try:
                v = float(token)
            except ValueError:
                raise ParseError(line=i + 2, column=name, value=token) from None
            if not math.isfinite(v):
                missing[i] = True
            else:
                vals[i] = v
        parsed[name] = vals
        newly = missing & row_ok
        if newly.any():
            dropped_by_column[name] = int(newly.sum())
        row_ok &= ~missing

    label_maps: dict[str, dict[str, int]] = {}
    raw_labels: dict[str, list[str]] = {}
    for name in cluster_columns:
        toks = columns[name]
        missing = np.array([_is_missing(t) for t in toks], dtype=bool)
        newly = missing & row_ok
        if newly.any():
            dropped_by_column[name] = dropped_by_column.get(name, 0) + int(newly.sum())
        row_ok &= ~missing
        raw_labels[name] = toks

    keep = np.flatnonzero(row_ok)
    if keep.size == 0:
        raise EmptyAfterFiltering(f"{path}: no rows left after dropping incomplete rows")

    cluster_labels: dict[str, np.ndarray] = {}
    for name in cluster_columns:
        mapping: dict[str, int] = {}
        lab = np.empty(keep.size, dtype=np.int64)
        for out_i, i in enumerate(keep):
            token = raw_labels[name][i].strip()
            if token not in mapping:
                mapping[token] = len(mapping)
            lab[out_i] = mapping[token]
        cluster_labels[name] = lab
        label_maps[name] = mapping

    y = parsed[outcome][keep]
    X = np.column_stack([parsed[c][keep] for c in covariates])
    t_vec = parsed[treatment][keep] if treatment is not None else None

    data = build_dataset(
        y,
        X,
        covariates,
        add_intercept=add_intercept,
        cluster_labels=cluster_labels,
        treatment=t_vec,
        treatment_name=treatment,
    )
    report = IngestReport(
        n_rows_read=n_read,
        n_rows_used=keep.size,
        n_dropped=n_read - keep.size,
        dropped_by_column=dropped_by_column,
        label_maps=label_maps,
    )
    return data, report


@dataclass(frozen=True)
class CollapseReport:
    n_units: int
    units_dropped_one_sided: int
    columns_dropped: tuple[str, ...]


def collapse_periods(
    columns: dict[str, list[str]],
    *,
    unit: str,
    period: str,
    cutoff: float,
) -> tuple[dict[str, list[str]], CollapseReport]:
    """Average a panel into one pre-cutoff and one post-cutoff row per unit.

    Rows with period <= cutoff form the pre side. Numeric columns are
    averaged per unit-side (missing cells excluded from the mean); the unit
    column is carried through and the period column becomes 0 (pre) / 1
    (post). Other non-numeric columns are kept only when constant within a
    unit, otherwise the whole column is dropped. Units lacking a pre or a
    post row are dropped and counted.
    """
    for name in (unit, period):
        if name not in columns:
            raise ConfigError(f"column {name!r} not found in input")
    n = len(columns[unit])

    period_vals = np.empty(n, dtype=np.float64)
    for i, token in enumerate(columns[period]):
        if _is_missing(token):
            raise DataError(f"missing period value at data line {i + 2}")
        try:
            period_vals[i] = float(token)
        except ValueError:
            raise ParseError(line=i + 2, column=period, value=token) from None

    numeric: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    categorical: list[str] = []
    for name, toks in columns.items():
        if name in (unit, period):
            continue
        vals = np.full(n, np.nan)
        ok = True
        for i, token in enumerate(toks):
            if _is_missing(token):
                continue
            try:
                vals[i] = float(token)
            except ValueError:
                ok = False
                break
        if ok:
            numeric[name] = (vals, ~np.isnan(vals))
        else:
            categorical.append(name)

    units = list(dict.fromkeys(columns[unit]))
    side = period_vals > cutoff
    unit_rows: dict[str, list[int]] = {u: [] for u in units}
    for i, u in enumerate(columns[unit]):
        unit_rows[u].append(i)

    out: dict[str, list[str]] = {unit: [], period: []}
    kept_categorical = []
    for name in categorical:
        toks = columns[name]
        if all(len({toks[i] for i in rows}) == 1 for rows in unit_rows.values()):
            kept_categorical.append(name)
            out[name] = []
    for name in numeric:
        out[name] = []

    dropped = 0
    n_units = 0
    for u in units:
        rows = np.array(unit_rows[u])
        pre = rows[~side[rows]]
        post = rows[side[rows]]
        if pre.size == 0 or post.size == 0:
            dropped += 1
            continue
        n_units += 1
        for flag, chunk in ((0, pre), (1, post)):
            out[unit].append(u)
            out[period].append(str(flag))
            for name in kept_categorical:
                out[name].append(columns[name][chunk[0]])
            for name, (vals, valid) in numeric.items():
                sel = chunk[valid[chunk]]
                out[name].append(repr(float(vals[sel].mean())) if sel.size else "")
    if n_units == 0:
        raise EmptyAfterFiltering("no unit has rows on both sides of the cutoff")

    dropped_cols = tuple(c for c in categorical if c not in kept_categorical)
    return out, CollapseReport(
        n_units=n_units,
        units_dropped_one_sided=dropped,
        columns_dropped=dropped_cols,
    )
