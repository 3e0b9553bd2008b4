"""Datasets, feature schemas, CSV ingestion and row sampling utilities."""
from __future__ import annotations

import csv
import dataclasses
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

MISSING_MARKERS = ("", "NA")


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureSchema:
    names: tuple
    kinds: tuple  # "numeric" | "categorical" per feature
    categories: dict = field(default_factory=dict)  # name -> list of labels, code = index
    target: str = "y"
    exposure: str | None = None
    missing_markers: tuple = MISSING_MARKERS

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "kinds", tuple(self.kinds))
        if len(set(self.names)) != len(self.names):
            raise DataError("feature names must be unique")
        if len(self.kinds) != len(self.names):
            raise DataError("one kind per feature required")
        if self.target in self.names or (self.exposure is not None and self.exposure in self.names):
            raise DataError("target/exposure columns cannot also be features")
        bad = set(self.kinds) - {"numeric", "categorical"}
        if bad:
            raise DataError(f"unknown feature kinds {sorted(bad)}")

    @classmethod
    def numeric(cls, p, target="y", exposure=None):
        return cls(tuple(f"x{j}" for j in range(p)), ("numeric",) * p, {}, target, exposure)

    @property
    def categorical_mask(self):
        return np.array([k == "categorical" for k in self.kinds], dtype=bool)

    @property
    def n_features(self):
        return len(self.names)

    def to_dict(self):
        return {
            "names": list(self.names),
            "kinds": list(self.kinds),
            "categories": {k: list(v) for k, v in self.categories.items()},
            "target": self.target,
            "exposure": self.exposure,
            "missing_markers": list(self.missing_markers),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            tuple(d["names"]), tuple(d["kinds"]),
            {k: list(v) for k, v in d["categories"].items()},
            d["target"], d["exposure"], tuple(d["missing_markers"]),
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    """Responses ``y`` (per unit exposure), exposures ``w`` and features ``X``.

    Categorical columns of ``X`` hold integer codes as floats; NaN is missing.
    """

    X: np.ndarray
    y: np.ndarray
    w: np.ndarray
    schema: FeatureSchema

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if w.ndim == 0:
            w = np.full(y.shape, float(w))
        if not (X.shape[0] == y.shape[0] == w.shape[0]):
            raise DataError("X, y and w must have the same number of rows")
        if X.shape[1] != self.schema.n_features:
            raise DataError("feature count does not match schema")
        if np.any(~np.isfinite(y)) or np.any(y < 0):
            raise DataError("responses must be finite and non-negative")
        if np.any(~(w > 0)):
            raise DataError("exposures must be positive")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w)

    @classmethod
    def from_arrays(cls, X, y, w=1.0, schema=None):
        X = np.asarray(X, dtype=float)
        X = X[:, None] if X.ndim == 1 else X
        return cls(X, y, w, schema or FeatureSchema.numeric(X.shape[1]))

    def __len__(self):
        return self.y.shape[0]

    def subset(self, rows):
        return dataclasses.replace(self, X=self.X[rows], y=self.y[rows], w=self.w[rows])

    @property
    def zero_fraction(self):
        return float(np.mean(self.y == 0))


def _is_missing(cell, markers):
    return cell.strip() in markers


def load_csv(path, target, exposure=None, categoricals=(), features=None, schema=None):
    """Read a CSV with a header row into a :class:`Dataset`.

    With ``schema`` given (prediction time), columns and category codes are
    taken from it and unseen labels become missing. Otherwise categorical
    codes are assigned by first appearance. Unparseable numeric cells are
    treated as missing. A missing exposure cell defaults to 1.0.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required") from None
        rows = list(reader)

    if schema is not None:
        target, exposure = schema.target, schema.exposure
        names = list(schema.names)
        kinds = list(schema.kinds)
        categories = {k: list(v) for k, v in schema.categories.items()}
        frozen = True
        markers = schema.missing_markers
    else:
        categoricals = list(categoricals)
        names = list(features) if features is not None else [
            h for h in header if h not in (target, exposure)
        ]
        unknown = [c for c in categoricals if c not in names]
        if unknown:
            raise DataError(f"categorical columns not among features: {unknown}")
        kinds = ["categorical" if c in categoricals else "numeric" for c in names]
        categories = {c: [] for c in categoricals}
        frozen = False
        markers = MISSING_MARKERS

    col = {h: i for i, h in enumerate(header)}
    has_target = target in col
    if not has_target and schema is None:
        raise DataError(f"{path}: missing target column {target!r}")
    missing = [c for c in names if c not in col]
    if missing:
        raise DataError(f"{path}: missing feature columns {missing}")
    if exposure is not None and exposure not in col and schema is None:
        raise DataError(f"{path}: missing exposure column {exposure!r}")

    n, p = len(rows), len(names)
    X = np.full((n, p), np.nan)
    y = np.zeros(n)
    w = np.ones(n)
    lookup = {c: {lab: k for k, lab in enumerate(categories[c])} for c in categories}
    for r, row in enumerate(rows):
        line = r + 2
        if len(row) != len(header):
            raise DataError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
        if has_target:
            cell = row[col[target]]
            try:
                y[r] = float(cell)
            except ValueError:
                raise DataError(f"{path}:{line}: target {cell!r} is not a number") from None
            if not (y[r] >= 0 and math.isfinite(y[r])):
                raise DataError(f"{path}:{line}: target must be non-negative, got {cell!r}")
        if exposure is not None and exposure in col:
            cell = row[col[exposure]]
            if not _is_missing(cell, markers):
                try:
                    w[r] = float(cell)
                except ValueError:
                    raise DataError(f"{path}:{line}: exposure {cell!r} is not a number") from None
                if not (w[r] > 0 and math.isfinite(w[r])):
                    raise DataError(f"{path}:{line}: exposure must be positive, got {cell!r}")
        for j, name in enumerate(names):
            cell = row[col[name]]
            if _is_missing(cell, markers):
                continue
            if kinds[j] == "numeric":
                try:
                    X[r, j] = float(cell)
                except ValueError:
                    pass
            else:
                lab = cell.strip()
                code = lookup[name].get(lab)
                if code is None and not frozen:
                    code = len(categories[name])
                    categories[name].append(lab)
                    lookup[name][lab] = code
                if code is not None:
                    X[r, j] = code
    out_schema = schema or FeatureSchema(tuple(names), tuple(kinds), categories, target, exposure, markers)
    return Dataset(X, y, w, out_schema)


def atomic_write_text(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    return "" if isinstance(v, float) and math.isnan(v) else repr(v) if isinstance(v, float) else str(v)


def write_table(path, columns: dict):
    """Write equal-length columns to CSV atomically; floats use round-trip repr."""
    import io

    names = list(columns)
    cols = [np.asarray(columns[k]).tolist() for k in names]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(names)
    for row in zip(*cols):
        writer.writerow([_fmt(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def dataset_columns(data: Dataset):
    cols = {}
    for j, name in enumerate(data.schema.names):
        x = data.X[:, j]
        if data.schema.kinds[j] == "categorical":
            labels = data.schema.categories[name]
            cols[name] = ["" if np.isnan(v) else labels[int(v)] for v in x]
        else:
            cols[name] = x
    cols[data.schema.exposure or "exposure"] = data.w
    cols[data.schema.target] = data.y
    return cols


def write_csv(path, data: Dataset):
    write_table(path, dataset_columns(data))


def undersample_indices(y, keep_fraction, seed=0):
    """Row indices kept by :func:`undersample_nonzero`, in original order."""
    if not (0 < keep_fraction <= 1):
        raise ValueError("keep_fraction must lie in (0, 1]")
    y = np.asarray(y, dtype=float)
    nonzero = np.flatnonzero(y > 0)
    m = nonzero.size
    k = int(math.floor(keep_fraction * m + 0.5))
    rng = np.random.default_rng(seed)
    kept = rng.choice(nonzero, size=k, replace=False) if k < m else nonzero
    keep = y == 0
    keep[kept] = True
    return np.flatnonzero(keep)


def undersample_nonzero(data: Dataset, keep_fraction, seed=0):
    """Keep every zero row and a random ``keep_fraction`` of the nonzero rows.

    Nonzero rows are drawn without replacement; row order is preserved.
    """
    return data.subset(undersample_indices(data.y, keep_fraction, seed))


def train_test_split(data: Dataset, test_fraction=0.5, seed=0):
    """Uniform random split into (train, test)."""
    if not (0 < test_fraction < 1):
        raise ValueError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(data))
    n_test = int(round(test_fraction * len(data)))
    return data.subset(np.sort(perm[n_test:])), data.subset(np.sort(perm[:n_test]))
