"""Survival data ingestion and design-matrix encoding.

A :class:`Dataset` holds right-censored observations ``(time, status)`` and
named covariate columns. :func:`encode_design` turns a dataset and a
:class:`ModelSpec` into the two design matrices used by the scale and shape
linear predictors.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, NamedTuple, Sequence

import numpy as np
import scipy.linalg

from .exceptions import DataError, RankDeficiencyError

MISSING = "Missing"
INTERCEPT = "(Intercept)"
RANK_TOL = 1e-10


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Covariate:
    """One covariate column.

    ``levels`` is empty for numeric columns. For categorical columns it lists
    the observed levels in first-encountered order, with ``"Missing"`` last
    when present.
    """

    name: str
    values: np.ndarray
    levels: tuple = ()

    @property
    def is_categorical(self) -> bool:
        return self.values.dtype.kind in "OUS"


@dataclass(frozen=True)
class Dataset:
    time: np.ndarray
    status: np.ndarray
    covariates: Mapping[str, Covariate] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "time", _frozen(self.time, float))
        object.__setattr__(self, "status", _frozen(self.status, np.int8))
        object.__setattr__(self, "covariates", MappingProxyType(dict(self.covariates)))
        check_survival_arrays(self.time, self.status)
        for name, cov in self.covariates.items():
            if len(cov.values) != self.n:
                raise DataError(
                    f"covariate {name!r} has {len(cov.values)} rows, expected {self.n}"
                )

    @property
    def n(self) -> int:
        return len(self.time)

    @property
    def names(self) -> tuple:
        return tuple(self.covariates)

    def __getitem__(self, name):
        return self.covariates[name]

    @classmethod
    def from_columns(cls, time, status, covariates=None, categorical=None):
        """Build a dataset from in-memory columns.

        Parameters
        ----------
        time, status : array-like
            Follow-up times and event indicators (1 = event, 0 = censored).
        covariates : mapping of str to array-like, optional
            Covariate columns. Columns with a non-numeric dtype are treated
            as categorical; ``None``/NaN/empty-string entries in categorical
            columns become the level ``"Missing"``.
        categorical : iterable of str, optional
            Names of numeric-looking columns to treat as categorical anyway.
        """
        categorical = set(categorical or ())
        covs = {}
        for name, col in (covariates or {}).items():
            arr = np.asarray(col)
            if name in categorical or arr.dtype.kind not in "biuf":
                covs[name] = _categorical(name, [_as_label(v) for v in arr])
            else:
                values = _frozen(arr, float)
                if not np.all(np.isfinite(values)):
                    raise DataError(f"numeric covariate {name!r} has non-finite values")
                covs[name] = Covariate(name, values)
        return cls(time, status, covs)

    def subset(self, rows) -> "Dataset":
        """Return the dataset restricted to ``rows`` (indices or boolean mask)."""
        rows = np.asarray(rows)
        covs = {}
        for name, cov in self.covariates.items():
            if cov.is_categorical:
                covs[name] = _categorical(name, list(cov.values[rows]), order=cov.levels)
            else:
                covs[name] = Covariate(name, _frozen(cov.values[rows]))
        return Dataset(self.time[rows], self.status[rows], covs)


def _as_label(v) -> str:
    if v is None:
        return MISSING
    if isinstance(v, float) and math.isnan(v):
        return MISSING
    s = str(v).strip()
    return s if s else MISSING


def _categorical(name, labels, order=()):
    seen = {}
    for lab in labels:
        seen.setdefault(lab, None)
    levels = [lv for lv in order if lv in seen]
    levels += [lv for lv in seen if lv not in levels and lv != MISSING]
    if MISSING in seen and MISSING not in levels:
        levels.append(MISSING)
    return Covariate(name, _frozen(labels, object), tuple(levels))


def check_survival_arrays(time, status):
    """Validate right-censored survival arrays and return them as numpy arrays.

    Raises
    ------
    DataError
        On length mismatch, non-positive or non-finite times, status values
        outside {0, 1}, or when no events are observed.
    """
    time = np.asarray(time, dtype=float)
    status = np.asarray(status)
    if time.ndim != 1 or status.ndim != 1:
        raise DataError("time and status must be one-dimensional")
    if len(time) != len(status):
        raise DataError(f"time has {len(time)} rows but status has {len(status)}")
    if len(time) == 0:
        raise DataError("dataset is empty")
    if not np.all(np.isfinite(time)):
        raise DataError("non-finite time")
    bad = np.flatnonzero(time <= 0)
    if bad.size:
        raise DataError(f"non-positive time at row {bad[0]}")
    if not np.all((status == 0) | (status == 1)):
        raise DataError("status values must be 0 or 1")
    if not np.any(status == 1):
        raise DataError("no events observed (all status values are 0)")
    return time, status.astype(np.int8)


def read_csv_table(csv_text: str):
    """Parse CSV text into ``(header, rows)`` with strict header checks."""
    reader = csv.reader(io.StringIO(csv_text.lstrip("﻿")))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError("CSV input is empty") from None
    if any(not h for h in header):
        raise DataError("missing header name")
    dupes = sorted({h for h in header if header.count(h) > 1})
    if dupes:
        raise DataError(f"duplicate header names: {', '.join(dupes)}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        rows.append([c.strip() for c in row])
    return header, rows


def _parse_float(cell, column, lineno):
    if cell == "":
        raise DataError(f"line {lineno}: empty cell in numeric column {column!r}")
    try:
        value = float(cell)
    except ValueError:
        raise DataError(
            f"line {lineno}: cannot parse {cell!r} as a number in column {column!r}"
        ) from None
    if not math.isfinite(value):
        raise DataError(f"line {lineno}: non-finite value in column {column!r}")
    return value


def _looks_numeric(cells):
    if not all(cells):
        return False
    try:
        return all(math.isfinite(float(c)) for c in cells)
    except ValueError:
        return False


def parse_dataset(csv_text: str, time_col: str, status_col: str, type_hints=None) -> Dataset:
    """Parse CSV text into a :class:`Dataset`.

    Every column other than ``time_col`` and ``status_col`` becomes a
    covariate. ``type_hints`` maps column names to ``"numeric"`` or
    ``"categorical"``; unhinted columns are numeric when every cell parses
    as a finite number and categorical otherwise. Empty categorical cells
    become the level ``"Missing"``; empty numeric cells are an error.
    """
    type_hints = dict(type_hints or {})
    header, rows = read_csv_table(csv_text)
    for col in (time_col, status_col):
        if col not in header:
            raise DataError(f"column {col!r} not found in header")
    unknown = set(type_hints) - set(header)
    if unknown:
        raise DataError(f"type hints for unknown columns: {', '.join(sorted(unknown))}")
    columns = {h: [r[j] for r in rows] for j, h in enumerate(header)}

    time = [_parse_float(c, time_col, i + 2) for i, c in enumerate(columns[time_col])]
    for i, t in enumerate(time):
        if t <= 0:
            raise DataError(f"line {i + 2}: non-positive time {t!r}")
    status = []
    for i, c in enumerate(columns[status_col]):
        if c not in ("0", "1"):
            raise DataError(f"line {i + 2}: status must be 0 or 1, got {c!r}")
        status.append(int(c))

    covs = {}
    for name in header:
        if name in (time_col, status_col):
            continue
        cells = columns[name]
        kind = type_hints.get(name)
        if kind is None:
            kind = "numeric" if _looks_numeric(cells) else "categorical"
        if kind == "numeric":
            covs[name] = Covariate(
                name, _frozen([_parse_float(c, name, i + 2) for i, c in enumerate(cells)])
            )
        elif kind == "categorical":
            covs[name] = _categorical(name, [_as_label(c) for c in cells])
        else:
            raise DataError(f"unknown type hint {kind!r} for column {name!r}")
    return Dataset(time, status, covs)


def read_dataset(path, time_col, status_col, type_hints=None) -> Dataset:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_dataset(fh.read(), time_col, status_col, type_hints)


@dataclass(frozen=True)
class ModelSpec:
    """Scale and shape term lists plus optional reference levels."""

    scale_terms: tuple = ()
    shape_terms: tuple = ()
    reference_levels: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for attr in ("scale_terms", "shape_terms"):
            terms = tuple(getattr(self, attr))
            if len(set(terms)) != len(terms):
                raise DataError(f"duplicate names in {attr}")
            object.__setattr__(self, attr, terms)
        object.__setattr__(self, "reference_levels", MappingProxyType(dict(self.reference_levels)))

    def with_terms(self, scale_terms=None, shape_terms=None) -> "ModelSpec":
        return ModelSpec(
            self.scale_terms if scale_terms is None else tuple(scale_terms),
            self.shape_terms if shape_terms is None else tuple(shape_terms),
            self.reference_levels,
        )

    def is_nested_in(self, other: "ModelSpec") -> bool:
        return set(self.scale_terms) <= set(other.scale_terms) and set(
            self.shape_terms
        ) <= set(other.shape_terms)

    def __hash__(self):
        return hash((self.scale_terms, self.shape_terms, tuple(sorted(self.reference_levels.items()))))

    def __eq__(self, other):
        if not isinstance(other, ModelSpec):
            return NotImplemented
        return (
            self.scale_terms == other.scale_terms
            and self.shape_terms == other.shape_terms
            and dict(self.reference_levels) == dict(other.reference_levels)
        )


class Column(NamedTuple):
    """A design-matrix column: its label and the (covariate, level) it encodes."""

    label: str
    covariate: str | None
    level: str | None


INTERCEPT_COLUMN = Column(INTERCEPT, None, None)


@dataclass(frozen=True)
class Encoding:
    """How one covariate is turned into columns: levels and reference, or numeric."""

    name: str
    levels: tuple = ()
    reference: str | None = None

    @property
    def is_categorical(self) -> bool:
        return bool(self.levels)

    def columns(self) -> list:
        if not self.is_categorical:
            return [Column(self.name, self.name, None)]
        return [
            Column(f"{self.name}[{lv}]", self.name, lv)
            for lv in self.levels
            if lv != self.reference
        ]

    def block(self, values) -> np.ndarray:
        if not self.is_categorical:
            return np.asarray(values, dtype=float).reshape(-1, 1)
        values = np.asarray([_as_label(v) for v in np.atleast_1d(values)], dtype=object)
        unknown = set(values) - set(self.levels)
        if unknown:
            raise DataError(f"unknown levels for {self.name!r}: {sorted(unknown)}")
        return np.column_stack(
            [(values == c.level).astype(float) for c in self.columns()]
        ) if len(self.levels) > 1 else np.empty((len(values), 0))


def covariate_encoding(cov: Covariate, reference=None) -> Encoding:
    if not cov.is_categorical:
        if reference is not None:
            raise DataError(f"reference level given for numeric covariate {cov.name!r}")
        return Encoding(cov.name)
    ref = cov.levels[0] if reference is None else reference
    if ref not in cov.levels:
        raise DataError(f"reference level {ref!r} not a level of {cov.name!r}")
    return Encoding(cov.name, cov.levels, ref)


@dataclass(frozen=True)
class DesignMatrices:
    X: np.ndarray
    Z: np.ndarray
    scale_columns: tuple
    shape_columns: tuple
    time: np.ndarray
    status: np.ndarray
    encodings: Mapping[str, Encoding] = field(default_factory=dict)
    spec: ModelSpec = field(default_factory=ModelSpec)

    @property
    def n(self) -> int:
        return len(self.time)

    @property
    def p(self) -> int:
        """Number of non-intercept scale columns."""
        return self.X.shape[1] - 1

    @property
    def q(self) -> int:
        """Number of non-intercept shape columns."""
        return self.Z.shape[1] - 1

    @property
    def n_params(self) -> int:
        return self.X.shape[1] + self.Z.shape[1]

    @property
    def column_labels(self) -> tuple:
        return tuple(f"scale:{c.label}" for c in self.scale_columns) + tuple(
            f"shape:{c.label}" for c in self.shape_columns
        )


def design_block(terms, encodings, values: Mapping, n=None) -> np.ndarray:
    """Design matrix (with leading intercept column) for ``terms``.

    ``values`` maps covariate names to raw columns (numbers or level labels).
    """
    if n is None:
        n = len(next(iter(values.values()))) if terms else 1
    blocks = [np.ones((n, 1))]
    for term in terms:
        if term not in values:
            raise DataError(f"no value supplied for covariate {term!r}")
        col = np.atleast_1d(np.asarray(values[term], dtype=object if encodings[term].is_categorical else float))
        if len(col) != n:
            if len(col) == 1:
                col = np.repeat(col, n)
            else:
                raise DataError(f"covariate {term!r} has {len(col)} rows, expected {n}")
        blocks.append(encodings[term].block(col))
    return np.column_stack(blocks)


def check_full_rank(M: np.ndarray, columns, component: str, tol: float = RANK_TOL):
    """Raise :class:`RankDeficiencyError` naming collinear columns of ``M``."""
    if M.shape[1] > M.shape[0]:
        raise RankDeficiencyError(
            f"{component} design has more columns ({M.shape[1]}) than rows ({M.shape[0]})",
            [c.label for c in columns],
        )
    _, R, piv = scipy.linalg.qr(M, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0:
        return
    deficient = diag < tol * diag[0]
    if np.any(deficient):
        bad = [columns[j].label for j in piv[deficient]]
        raise RankDeficiencyError(
            f"{component} design is rank deficient; collinear columns: {', '.join(bad)}",
            bad,
        )


def encode_design(ds: Dataset, spec: ModelSpec, check_rank: bool = True) -> DesignMatrices:
    """Build scale (X) and shape (Z) design matrices for ``spec``.

    Categorical covariates are dummy coded with the reference level dropped
    (first level in data order unless overridden); numeric covariates pass
    through unchanged. Both matrices get a leading column of ones.
    """
    terms = list(dict.fromkeys(spec.scale_terms + spec.shape_terms))
    for term in terms:
        if term not in ds.covariates:
            raise DataError(f"unknown term {term!r}")
    for name in spec.reference_levels:
        if name not in ds.covariates:
            raise DataError(f"reference level given for unknown covariate {name!r}")
    encodings = {
        t: covariate_encoding(ds[t], spec.reference_levels.get(t)) for t in terms
    }
    values = {t: ds[t].values for t in terms}

    X = design_block(spec.scale_terms, encodings, values, ds.n)
    Z = design_block(spec.shape_terms, encodings, values, ds.n)
    scale_cols = (INTERCEPT_COLUMN,) + tuple(
        c for t in spec.scale_terms for c in encodings[t].columns()
    )
    shape_cols = (INTERCEPT_COLUMN,) + tuple(
        c for t in spec.shape_terms for c in encodings[t].columns()
    )
    if check_rank:
        check_full_rank(X, scale_cols, "scale")
        check_full_rank(Z, shape_cols, "shape")
    X.flags.writeable = False
    Z.flags.writeable = False
    return DesignMatrices(
        X, Z, scale_cols, shape_cols, ds.time, ds.status,
        MappingProxyType(encodings), spec,
    )


def design_from_arrays(time, status, X, Z=None, scale_labels: Sequence[str] = None,
                       shape_labels: Sequence[str] = None) -> DesignMatrices:
    """Wrap raw matrices (intercept column included) as :class:`DesignMatrices`.

    Useful for simulation and testing where the design is already numeric.
    """
    time, status = check_survival_arrays(time, status)
    X = np.asarray(X, dtype=float)
    Z = np.ones((len(time), 1)) if Z is None else np.asarray(Z, dtype=float)

    def cols(labels, M):
        if labels is None:
            labels = [INTERCEPT] + [f"x{j}" for j in range(1, M.shape[1])]
        return tuple(
            INTERCEPT_COLUMN if lab == INTERCEPT else Column(lab, lab, None) for lab in labels
        )

    scale_cols, shape_cols = cols(scale_labels, X), cols(shape_labels, Z)
    names = [c.covariate for c in scale_cols + shape_cols if c.covariate is not None]
    spec = ModelSpec(
        tuple(c.covariate for c in scale_cols[1:]), tuple(c.covariate for c in shape_cols[1:])
    )
    return DesignMatrices(
        X, Z, scale_cols, shape_cols, _frozen(time), _frozen(status),
        MappingProxyType({nm: Encoding(nm) for nm in names}), spec,
    )
