"""Tabular datasets: the in-memory model, CSV ingestion and preprocessing.

A :class:`TabularDataset` holds a real feature matrix, binary labels ``Y`` and
a binary group indicator ``G`` (``G=0`` is the minority group by convention).
Real corpora are read through a :class:`Schema` that says which columns are
continuous, categorical, the label, or ignored; the group column is chosen at
load time so one schema serves race, sex and age audits alike.
"""

from __future__ import annotations

import configparser
import csv
import logging
import operator
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
LABEL = "label"
GROUP = "group"
DROP = "drop"
KINDS = (CONTINUOUS, CATEGORICAL, LABEL, GROUP, DROP)

UNASSIGNED = -1


class DataError(ValueError):
    """Raised for malformed input data or inconsistent schemas."""


@dataclass(frozen=True)
class TabularDataset:
    features: np.ndarray
    labels: np.ndarray
    groups: np.ndarray
    feature_names: tuple[str, ...]
    provenance: str = ""
    # which feature columns are continuous (z-scored) vs one-hot
    continuous: tuple[bool, ...] | None = None
    # raw values of the group column, kept until select_binary_groups runs
    group_raw: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {X.shape}")
        n = X.shape[0]
        if n < 1:
            raise DataError("dataset is empty")
        y = np.asarray(self.labels).astype(np.int64)
        g = np.asarray(self.groups).astype(np.int64)
        if y.shape != (n,) or g.shape != (n,):
            raise DataError("labels and groups must be vectors of length N")
        if not np.isin(y, (0, 1)).all():
            raise DataError("labels must be binary {0,1}")
        allowed = (0, 1, UNASSIGNED) if self.group_raw is not None else (0, 1)
        if not np.isin(g, allowed).all():
            raise DataError("groups must be binary {0,1}")
        if len(self.feature_names) != X.shape[1]:
            raise DataError("feature_names length does not match feature columns")
        if not np.isfinite(X).all():
            raise DataError("features contain non-finite values")
        cont = self.continuous
        if cont is None:
            cont = (True,) * X.shape[1]
        if len(cont) != X.shape[1]:
            raise DataError("continuous mask length does not match feature columns")
        X.setflags(write=False)
        y.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "groups", g)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "continuous", tuple(bool(c) for c in cont))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "TabularDataset":
        idx = np.asarray(idx)
        raw = None if self.group_raw is None else self.group_raw[idx]
        return replace(
            self,
            features=self.features[idx],
            labels=self.labels[idx],
            groups=self.groups[idx],
            group_raw=raw,
        )

    def group_counts(self) -> dict[int, int]:
        return {int(k): int((self.groups == k).sum()) for k in (0, 1)}

    def to_csv(self, path) -> None:
        """Write ``x0,...,x{d-1},y,g`` with 9 significant digits."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{j}" for j in range(self.d)] + ["y", "g"])
            for row, y, g in zip(self.features, self.labels, self.groups):
                w.writerow([format(v, ".9g") for v in row] + [int(y), int(g)])

    @classmethod
    def from_csv(cls, path, provenance: str | None = None) -> "TabularDataset":
        """Read the ``x0,...,y,g`` layout written by :meth:`to_csv`."""
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"dataset file not found: {path}")
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise DataError(f"{path}: empty file")
        header = rows[0]
        if header[-2:] != ["y", "g"]:
            raise DataError(f"{path}: expected trailing columns y,g; got {header[-2:]}")
        body = np.array(rows[1:], dtype=np.float64)
        if body.size == 0:
            raise DataError(f"{path}: no data rows")
        return cls(
            features=body[:, :-2],
            labels=body[:, -2].astype(np.int64),
            groups=body[:, -1].astype(np.int64),
            feature_names=tuple(header[:-2]),
            provenance=provenance or str(path),
        )


def concat(datasets: Sequence[TabularDataset], provenance: str = "") -> TabularDataset:
    first = datasets[0]
    return TabularDataset(
        features=np.vstack([d.features for d in datasets]),
        labels=np.concatenate([d.labels for d in datasets]),
        groups=np.concatenate([d.groups for d in datasets]),
        feature_names=first.feature_names,
        provenance=provenance or first.provenance,
        continuous=first.continuous,
    )


# ---------------------------------------------------------------------------
# schemas


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str
    positive: tuple[str, ...] = ()  # label columns only

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == LABEL and not self.positive:
            raise DataError(f"label column {self.name!r} needs a positive value")


_OPS = {
    "<=": operator.le,
    ">=": operator.ge,
    "!=": operator.ne,
    "==": operator.eq,
    "<": operator.lt,
    ">": operator.gt,
}
_FILTER_RE = re.compile(r"^\s*([^<>=!]+?)\s*(<=|>=|!=|==|<|>)\s*(.+?)\s*$")


@dataclass(frozen=True)
class RowFilter:
    """``column op value`` row predicate; numeric when both sides parse."""

    column: str
    op: str
    value: str

    @classmethod
    def parse(cls, text: str) -> "RowFilter":
        m = _FILTER_RE.match(text)
        if not m:
            raise DataError(f"cannot parse row filter {text!r}")
        return cls(m.group(1), m.group(2), m.group(3).strip("\"'"))

    def __call__(self, raw: str) -> bool:
        return _compare(raw, self.op, self.value)


def _compare(raw: str, op: str, value: str) -> bool:
    fn = _OPS[op]
    try:
        return bool(fn(float(raw), float(value)))
    except ValueError:
        if op not in ("==", "!="):
            return False
        return bool(fn(raw, value))


@dataclass(frozen=True)
class Schema:
    columns: tuple[ColumnSchema, ...]
    missing: tuple[str, ...] = ("?", "")
    filters: tuple[RowFilter, ...] = ()
    name: str = "custom"
    note: str = ""
    # column names for files that carry no header row
    header: tuple[str, ...] = ()

    def __post_init__(self):
        labels = [c for c in self.columns if c.kind == LABEL]
        if len(labels) != 1:
            raise DataError(f"schema {self.name!r} must have exactly one label column")
        if sum(c.kind == GROUP for c in self.columns) > 1:
            raise DataError(f"schema {self.name!r} has more than one group column")

    @property
    def label(self) -> ColumnSchema:
        return next(c for c in self.columns if c.kind == LABEL)

    def with_group(self, column: str) -> "Schema":
        """Return a copy where ``column`` is the (single) active group column."""
        names = [c.name for c in self.columns]
        cols = [
            replace(c, kind=CATEGORICAL) if c.kind == GROUP else c for c in self.columns
        ]
        if column in names:
            i = names.index(column)
            if cols[i].kind == LABEL:
                raise DataError("the label column cannot be the group column")
            cols[i] = ColumnSchema(column, GROUP)
        else:
            cols.append(ColumnSchema(column, GROUP))
        return replace(self, columns=tuple(cols))

    @classmethod
    def from_file(cls, path) -> "Schema":
        """Read an INI schema file with a ``[schema]`` section.

        Keys: ``label``, ``positive`` (comma list), ``continuous``,
        ``categorical``, ``group`` (optional), ``missing`` (comma list,
        use ``<empty>`` for the empty string), ``filters``
        (semicolon-separated ``column op value`` predicates) and ``header``
        (comma list of names for header-less files).
        """
        cp = configparser.ConfigParser()
        if not cp.read(path, encoding="utf-8"):
            raise FileNotFoundError(f"schema file not found: {path}")
        s = cp["schema"]
        return schema_from_mapping(dict(s), name=str(path))


def _split(text: str, sep: str = ",") -> list[str]:
    return [t.strip() for t in text.split(sep) if t.strip()]


def schema_from_mapping(m: dict, name: str = "custom") -> Schema:
    cols = [ColumnSchema(m["label"], LABEL, tuple(_split(m.get("positive", "1"))))]
    cols += [ColumnSchema(c, CONTINUOUS) for c in _split(m.get("continuous", ""))]
    cols += [ColumnSchema(c, CATEGORICAL) for c in _split(m.get("categorical", ""))]
    if m.get("group"):
        cols.append(ColumnSchema(m["group"].strip(), GROUP))
    missing = m.get("missing")
    if missing is None:
        miss = ("?", "")
    else:
        miss = tuple("" if t == "<empty>" else t for t in _split(missing))
    filters = tuple(RowFilter.parse(f) for f in _split(m.get("filters", ""), ";"))
    return Schema(tuple(cols), miss, filters, name=name, note=m.get("note", ""),
                  header=tuple(_split(m.get("header", ""))))


# ProPublica compas-scores-two-years.csv. Column choice follows the usual
# Zafar et al. preprocessing (age_cat, race, sex, priors_count,
# c_charge_degree); this is our reading, the exact column list is not public.
COMPAS_SCHEMA = schema_from_mapping(
    {
        "label": "two_year_recid",
        "positive": "1",
        "continuous": "priors_count",
        "categorical": "age_cat, race, sex, c_charge_degree",
        "filters": (
            "days_b_screening_arrest <= 30; days_b_screening_arrest >= -30; "
            "is_recid != -1; c_charge_degree != O; score_text != N/A"
        ),
        "note": "interpretation: Zafar-style column subset with ProPublica row filters",
    },
    name="compas",
)

# UCI Adult with a header row added (adult.data / adult.test carry none).
ADULT_COLUMNS = (
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
    "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
    "hours-per-week", "native-country", "income",
)
ADULT_SCHEMA = schema_from_mapping(
    {
        "label": "income",
        "positive": ">50K, >50K.",
        "continuous": "age, fnlwgt, education-num, capital-gain, capital-loss, hours-per-week",
        "categorical": (
            "workclass, education, marital-status, occupation, relationship, "
            "race, sex, native-country"
        ),
        "missing": "?, <empty>",
        "header": ", ".join(ADULT_COLUMNS),
    },
    name="adult",
)

BUILTIN_SCHEMAS = {"compas": COMPAS_SCHEMA, "adult": ADULT_SCHEMA}


def resolve_schema(name_or_path: str) -> Schema:
    if name_or_path in BUILTIN_SCHEMAS:
        return BUILTIN_SCHEMAS[name_or_path]
    return Schema.from_file(name_or_path)


# ---------------------------------------------------------------------------
# loading


def categories_of(ds: TabularDataset) -> dict[str, list[str]]:
    """Recover the one-hot levels per categorical column from feature names."""
    out: dict[str, list[str]] = {}
    for name, cont in zip(ds.feature_names, ds.continuous):
        if not cont and "=" in name:
            col, level = name.split("=", 1)
            out.setdefault(col, []).append(level)
    return out


def load_csv(
    path,
    schema: Schema,
    group_column: str | None = None,
    categories: dict[str, list[str]] | None = None,
) -> TabularDataset:
    """Load a real-data CSV according to ``schema``.

    Categorical columns are one-hot encoded (levels sorted, or taken from
    ``categories`` when aligning a test file with its training file). Rows
    holding a missing marker in any used column are dropped, as are rows
    failing a schema filter. The group column is kept raw in ``group_raw``;
    call :func:`select_binary_groups` to binarise it.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"data file not found: {path}")
    if group_column is not None:
        schema = schema.with_group(group_column)

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, skipinitialspace=True)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [[v.strip() for v in r] for r in reader if r]
    if schema.header and schema.label.name not in header:
        # header-less file: the first line is data
        rows.insert(0, header)
        header = list(schema.header)

    index = {h: i for i, h in enumerate(header)}
    used = [c.name for c in schema.columns if c.kind != DROP]
    for name in used + [f.column for f in schema.filters]:
        if name not in index:
            raise DataError(f"{path}: unknown column {name!r}")

    check = [index[n] for n in used]
    missing = set(schema.missing)
    kept = []
    for r in rows:
        if len(r) < len(header):
            continue
        if any(r[i] in missing for i in check):
            continue
        if not all(f(r[index[f.column]]) for f in schema.filters):
            continue
        kept.append(r)
    if not kept:
        raise DataError(f"{path}: no rows left after dropping missing/filtered rows")

    blocks, names, cont_mask = [], [], []
    group_raw = None
    label = None
    categories = categories or {}
    for col in schema.columns:
        vals = [r[index[col.name]] for r in kept]
        if col.kind == CONTINUOUS:
            try:
                blocks.append(np.array(vals, dtype=np.float64)[:, None])
            except ValueError as exc:
                raise DataError(f"{path}: column {col.name!r} is not numeric") from exc
            names.append(col.name)
            cont_mask.append(True)
        elif col.kind == CATEGORICAL:
            levels = categories.get(col.name) or sorted(set(vals))
            lookup = {lv: j for j, lv in enumerate(levels)}
            onehot = np.zeros((len(vals), len(levels)))
            for i, v in enumerate(vals):
                if v not in lookup:
                    raise DataError(f"{path}: column {col.name!r} has unmapped level {v!r}")
                onehot[i, lookup[v]] = 1.0
            blocks.append(onehot)
            names += [f"{col.name}={lv}" for lv in levels]
            cont_mask += [False] * len(levels)
        elif col.kind == LABEL:
            label = np.array([v in col.positive for v in vals], dtype=np.int64)
        elif col.kind == GROUP:
            group_raw = np.array(vals, dtype=object)

    X = np.hstack(blocks) if blocks else np.zeros((len(kept), 0))
    groups = np.full(len(kept), UNASSIGNED, dtype=np.int64)
    if group_raw is None:
        group_raw = np.array([""] * len(kept), dtype=object)
    return TabularDataset(
        features=X,
        labels=label,
        groups=groups,
        feature_names=tuple(names),
        provenance=f"{path} [{schema.name}]",
        continuous=tuple(cont_mask),
        group_raw=group_raw,
    )


def _matcher(spec: str):
    """A group value spec is a literal or a comparison such as ``<25``."""
    spec = spec.strip()
    for op in ("<=", ">=", "!=", "==", "<", ">"):
        if spec.startswith(op):
            ref = spec[len(op):].strip()
            return lambda v: _compare(v, op, ref)
    return lambda v: v == spec


def select_binary_groups(
    ds: TabularDataset, g0_values: Iterable[str], g1_values: Iterable[str]
) -> TabularDataset:
    """Keep rows whose raw group value is in ``g0_values`` or ``g1_values``.

    Matching rows get ``G=0`` / ``G=1``; everything else is dropped. Values
    may be literals or comparisons (``"<25"``, ``">45"``).
    """
    g0_values, g1_values = list(g0_values), list(g1_values)
    if not g0_values or not g1_values:
        raise DataError("both group value sets must be non-empty")
    if set(g0_values) & set(g1_values):
        raise DataError("group value sets overlap")
    if ds.group_raw is None:
        raise DataError("dataset carries no raw group column")
    m0 = [_matcher(s) for s in g0_values]
    m1 = [_matcher(s) for s in g1_values]
    raw = [str(v) for v in ds.group_raw]
    in0 = np.array([any(m(v) for m in m0) for v in raw], dtype=bool)
    in1 = np.array([any(m(v) for m in m1) for v in raw], dtype=bool)
    if (in0 & in1).any():
        raise DataError("a row matches both group value sets")
    keep = np.flatnonzero(in0 | in1)
    if not in0.any() or not in1.any():
        raise DataError(
            f"empty group after selection (G0={int(in0.sum())}, G1={int(in1.sum())})"
        )
    sub = ds.subset(keep)
    return replace(sub, groups=np.where(in0[keep], 0, 1))


def stratified_split(
    ds: TabularDataset, test_fraction: float, rng: np.random.Generator
) -> tuple[TabularDataset, TabularDataset]:
    """Split each (G, Y) cell at ``test_fraction``; shuffles both halves."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError("test_fraction must lie in (0, 1)")
    train_idx, test_idx = [], []
    cells = ds.groups * 2 + ds.labels
    for cell in np.unique(cells):
        idx = np.flatnonzero(cells == cell)
        idx = idx[rng.permutation(len(idx))]
        n_test = int(round(len(idx) * test_fraction))
        test_idx.append(idx[:n_test])
        train_idx.append(idx[n_test:])
    tr = np.concatenate(train_idx)
    te = np.concatenate(test_idx)
    tr = tr[rng.permutation(len(tr))]
    te = te[rng.permutation(len(te))]
    return ds.subset(tr), ds.subset(te)


# ---------------------------------------------------------------------------
# standardization


@dataclass(frozen=True)
class Standardizer:
    """Train-split z-scoring of continuous columns (population std)."""

    mean: np.ndarray
    std: np.ndarray
    continuous: tuple[bool, ...]
    keep: np.ndarray  # boolean mask of retained columns
    dropped: tuple[str, ...] = ()

    def apply(self, ds: TabularDataset) -> TabularDataset:
        return apply_standardizer(self, ds)


def fit_standardizer(train: TabularDataset) -> Standardizer:
    X = train.features
    cont = np.array(train.continuous, dtype=bool)
    mean = np.where(cont, X.mean(axis=0), 0.0)
    spread = X.std(axis=0)
    std = np.where(cont, spread, 1.0)
    # constant one-hot columns carry no information either; the relative
    # floor catches constants whose computed std is rounding noise
    const = spread <= 1e-12 * np.maximum(1.0, np.abs(X).max(axis=0))
    keep = ~const
    dropped = tuple(n for n, k in zip(train.feature_names, keep) if not k)
    if dropped:
        log.warning("dropping zero-variance columns: %s", ", ".join(dropped))
    std = np.where(keep, std, 1.0)
    return Standardizer(mean, std, train.continuous, keep, dropped)


def apply_standardizer(std: Standardizer, ds: TabularDataset) -> TabularDataset:
    if ds.d != len(std.mean):
        raise DataError(f"expected {len(std.mean)} feature columns, got {ds.d}")
    Z = (ds.features - std.mean) / std.std
    keep = std.keep
    return replace(
        ds,
        features=Z[:, keep],
        feature_names=tuple(n for n, k in zip(ds.feature_names, keep) if k),
        continuous=tuple(c for c, k in zip(std.continuous, keep) if k),
    )
