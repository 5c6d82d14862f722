"""Loading, encoding and writing tabular data.

A raw CSV is turned into an :class:`EncodedDataset`: a numeric feature
matrix, a binary label vector and integer group codes ``1..k`` for the
protected attribute. Categorical features are one-hot encoded, the
protected attribute and the label are not.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np
import pandas as pd

from .errors import (
    DataError,
    EmptyAfterCleaning,
    IoFailure,
    MissingColumn,
    NonBinaryLabel,
    SchemaMismatch,
    SingleGroup,
)

logger = logging.getLogger(__name__)

DEFAULT_NA_VALUES = ("", "?", "NA", "N/A", "NaN", "nan", "null", "None")


@dataclass(frozen=True)
class ColumnRoles:
    """Which raw columns play the label, protected and feature roles.

    An empty ``feature_columns`` means "every other column in the file";
    it is resolved against the header by :func:`load_csv`.
    """

    label_column: str
    protected_column: str
    feature_columns: tuple[str, ...] = ()
    positive_label_value: object = None

    def __post_init__(self):
        object.__setattr__(self, "feature_columns", tuple(self.feature_columns))
        if self.label_column == self.protected_column:
            raise DataError("label and protected column must differ")
        clash = {self.label_column, self.protected_column} & set(self.feature_columns)
        if clash:
            raise DataError(f"role columns listed as features: {sorted(clash)}")

    def resolve(self, header: Sequence[str]) -> "ColumnRoles":
        missing = [c for c in (self.label_column, self.protected_column) if c not in header]
        missing += [c for c in self.feature_columns if c not in header]
        if missing:
            raise MissingColumn(f"columns not found in input: {missing}")
        if self.feature_columns:
            return self
        features = tuple(
            c for c in header if c not in (self.label_column, self.protected_column)
        )
        if not features:
            raise DataError("no feature columns left after removing label and protected")
        return ColumnRoles(
            self.label_column, self.protected_column, features, self.positive_label_value
        )


@dataclass(frozen=True)
class EncodeOptions:
    categorical_columns: tuple[str, ...] | None = None
    na_values: tuple[str, ...] = DEFAULT_NA_VALUES
    sep: str = ","


@dataclass(frozen=True)
class Schema:
    """Everything needed to decode encoded rows back to raw CSV values."""

    roles: ColumnRoles
    columns: tuple[str, ...]
    categories: Mapping[str, tuple[str, ...]]
    label_values: tuple[str, str]

    @property
    def feature_names(self) -> tuple[str, ...]:
        names = []
        for col in self.roles.feature_columns:
            if col in self.categories:
                names.extend(f"{col}={cat}" for cat in self.categories[col])
            else:
                names.append(col)
        return tuple(names)

    def blocks(self) -> list[tuple[str, np.ndarray]]:
        """Feature column name and the encoded column indices it occupies."""
        out = []
        start = 0
        for col in self.roles.feature_columns:
            width = len(self.categories[col]) if col in self.categories else 1
            out.append((col, np.arange(start, start + width)))
            start += width
        return out


@dataclass(frozen=True, eq=False)
class EncodedDataset:
    """Immutable numeric table ``(x, y, z)``.

    Parameters
    ----------
    features : array, shape (n, d)
    labels : array of {0, 1}, shape (n,)
    groups : array of ints in ``1..k``, shape (n,)
    group_names : sequence of str, length k
        ``group_names[g - 1]`` is the raw protected value of code ``g``.
    feature_names : sequence of str, optional
    schema : Schema, optional
        Present when the data came from (or is meant to go back to) a CSV.
    """

    features: np.ndarray
    labels: np.ndarray
    groups: np.ndarray
    group_names: tuple[str, ...]
    feature_names: tuple[str, ...] | None = None
    schema: Schema | None = field(default=None, repr=False)

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64, copy=True)
        labels = np.array(self.labels, dtype=np.int8, copy=True).reshape(-1)
        if features.ndim == 1:
            features = features.reshape(labels.shape[0], -1) if features.size else np.zeros((labels.shape[0], 0))
        groups = np.array(self.groups, dtype=np.int64, copy=True).reshape(-1)
        names = tuple(str(g) for g in self.group_names)
        n = labels.shape[0]
        if features.ndim != 2 or features.shape[0] != n or groups.shape[0] != n:
            raise DataError("features, labels and groups must have matching row counts")
        if len(names) < 2:
            raise SingleGroup("at least two protected groups are required")
        if len(set(names)) != len(names):
            raise DataError("group names must be unique")
        if np.isnan(features).any():
            raise DataError("features contain missing values")
        if n and (labels.min() < 0 or labels.max() > 1):
            raise NonBinaryLabel("labels must be 0 or 1")
        if n and (groups.min() < 1 or groups.max() > len(names)):
            raise DataError("group codes must lie in 1..k")
        fnames = self.feature_names
        if fnames is None:
            fnames = self.schema.feature_names if self.schema else tuple(
                f"x{i}" for i in range(features.shape[1])
            )
        fnames = tuple(fnames)
        if len(fnames) != features.shape[1]:
            raise DataError("feature_names length does not match feature width")
        for arr in (features, labels, groups):
            arr.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "group_names", names)
        object.__setattr__(self, "feature_names", fnames)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def k(self) -> int:
        return len(self.group_names)

    def __len__(self):
        return self.n

    def rows(self) -> np.ndarray:
        """Rows as ``[features..., label, group]`` in one float matrix."""
        return np.column_stack([self.features, self.labels, self.groups]).astype(np.float64)

    def take(self, index) -> "EncodedDataset":
        index = np.asarray(index, dtype=np.int64)
        return EncodedDataset(
            self.features[index],
            self.labels[index],
            self.groups[index],
            self.group_names,
            self.feature_names,
            self.schema,
        )

    def with_group_names(self, names: Sequence[str]) -> "EncodedDataset":
        """Re-express group codes against a larger dictionary ``names``."""
        names = tuple(names)
        lookup = {name: i + 1 for i, name in enumerate(names)}
        try:
            remap = np.array([0] + [lookup[g] for g in self.group_names], dtype=np.int64)
        except KeyError as exc:
            raise SchemaMismatch(f"group {exc.args[0]!r} missing from dictionary") from None
        return EncodedDataset(
            self.features, self.labels, remap[self.groups], names, self.feature_names, self.schema
        )

    def same_content(self, other: "EncodedDataset") -> bool:
        return (
            self.group_names == other.group_names
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.groups, other.groups)
        )


def union_group_names(*datasets: EncodedDataset) -> tuple[str, ...]:
    """Shared group dictionary, in order of first appearance across ``datasets``."""
    names: list[str] = []
    for ds in datasets:
        names.extend(g for g in ds.group_names if g not in names)
    return tuple(names)


def concat(datasets: Sequence[EncodedDataset]) -> EncodedDataset:
    """Stack datasets with compatible features under a shared group dictionary."""
    first = datasets[0]
    for ds in datasets[1:]:
        if ds.d != first.d or ds.feature_names != first.feature_names:
            raise SchemaMismatch(
                f"feature layout differs: {first.feature_names} vs {ds.feature_names}"
            )
    names = union_group_names(*datasets)
    aligned = [ds.with_group_names(names) for ds in datasets]
    return EncodedDataset(
        np.concatenate([ds.features for ds in aligned]).reshape(-1, first.d),
        np.concatenate([ds.labels for ds in aligned]),
        np.concatenate([ds.groups for ds in aligned]),
        names,
        first.feature_names,
        first.schema,
    )


@dataclass(frozen=True, eq=False)
class DatasetView:
    """A subset of the rows of ``source`` selected by index, without copying.

    ``provenance`` optionally flags each *source* row as synthetic (True)
    or real (False).
    """

    source: EncodedDataset
    selected: np.ndarray
    provenance: np.ndarray | None = None

    def __post_init__(self):
        sel = np.asarray(self.selected, dtype=np.int64).reshape(-1)
        if sel.size:
            if sel[0] < 0 or sel[-1] >= self.source.n or np.any(np.diff(sel) <= 0):
                raise DataError("view indices must be unique, sorted and in range")
        sel.setflags(write=False)
        object.__setattr__(self, "selected", sel)
        if self.provenance is not None:
            prov = np.asarray(self.provenance, dtype=bool)
            if prov.shape != (self.source.n,):
                raise DataError("provenance must flag every source row")
            object.__setattr__(self, "provenance", prov)

    @classmethod
    def full(cls, data: EncodedDataset) -> "DatasetView":
        return cls(data, np.arange(data.n))

    def __len__(self):
        return self.selected.shape[0]

    @property
    def k(self) -> int:
        return self.source.k

    @property
    def labels(self) -> np.ndarray:
        return self.source.labels[self.selected]

    @property
    def groups(self) -> np.ndarray:
        return self.source.groups[self.selected]

    def materialize(self) -> EncodedDataset:
        return self.source.take(self.selected)


class GroupStats(NamedTuple):
    """Per-group row counts and positive-label counts, indexed by code - 1."""

    counts: np.ndarray
    positives: np.ndarray


def group_stats(view: DatasetView) -> GroupStats:
    k = view.k
    g = view.groups - 1
    counts = np.bincount(g, minlength=k).astype(np.int64)
    positives = np.bincount(g, weights=view.labels, minlength=k).astype(np.int64)
    return GroupStats(counts, positives)


def _is_number(value: str) -> bool:
    try:
        float(value)
    except ValueError:
        return False
    return True


def _encode_labels(raw: pd.Series, positive) -> tuple[np.ndarray, tuple[str, str]]:
    values = raw.to_numpy(dtype=object)
    distinct = sorted(set(values))
    if positive is None:
        numeric = all(_is_number(v) for v in distinct)
        if numeric and {float(v) for v in distinct} <= {0.0, 1.0}:
            positive = "1"
        elif len(distinct) > 2:
            raise NonBinaryLabel(
                f"label has {len(distinct)} distinct values; pass a positive label value"
            )
        elif len(distinct) == 2:
            positive = distinct[1]
            logger.warning("no positive label given; using %r as the favorable outcome", positive)
        else:
            raise NonBinaryLabel("label column is constant; pass a positive label value")
    pos = str(positive).strip()
    if _is_number(pos):
        target = float(pos)
        hits = np.array([_is_number(v) and float(v) == target for v in values], dtype=bool)
    else:
        hits = values == pos
    neg_values = sorted({v for v, h in zip(values, hits) if not h})
    pos_raw = next((v for v in values[hits]), pos) if hits.any() else pos
    neg_raw = neg_values[0] if neg_values else ("0" if pos_raw != "0" else "false")
    return hits.astype(np.int8), (str(neg_raw), str(pos_raw))


def load_csv(
    path,
    roles: ColumnRoles,
    options: EncodeOptions | None = None,
    like: EncodedDataset | None = None,
) -> EncodedDataset:
    """Read a CSV file and encode it.

    Rows with a missing value in any column used by ``roles`` are dropped.
    The protected column is coded ``1..k`` in order of first appearance,
    unless ``like`` is given, in which case its group dictionary,
    categories and label mapping are reused so that the result lines up
    column-for-column with ``like``.
    """
    options = options or EncodeOptions()
    try:
        df = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            na_values=list(options.na_values),
            sep=options.sep,
            skipinitialspace=True,
        )
    except FileNotFoundError:
        raise
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    df.columns = [str(c).strip() for c in df.columns]
    return encode_frame(df, roles, options, like)


def encode_frame(
    df: pd.DataFrame,
    roles: ColumnRoles,
    options: EncodeOptions | None = None,
    like: EncodedDataset | None = None,
) -> EncodedDataset:
    """Encode an all-string DataFrame; see :func:`load_csv`."""
    options = options or EncodeOptions()
    schema = like.schema if like is not None else None
    if like is not None and schema is None:
        raise SchemaMismatch("reference dataset carries no CSV schema")
    if schema is not None:
        roles = ColumnRoles(
            roles.label_column,
            roles.protected_column,
            roles.feature_columns or schema.roles.feature_columns,
            roles.positive_label_value,
        )
    roles = roles.resolve(list(df.columns))
    used = [*roles.feature_columns, roles.label_column, roles.protected_column]
    df = df[[c for c in df.columns if c in used]]
    df = df.apply(lambda s: s.str.strip() if s.dtype == object else s)
    df = df.replace(list(options.na_values), np.nan).dropna(how="any")
    if df.empty:
        raise EmptyAfterCleaning("no rows left after removing rows with missing values")

    raw_groups = df[roles.protected_column].to_numpy(dtype=object)
    if schema is not None:
        names = list(like.group_names)
        names.extend(g for g in pd.unique(raw_groups) if g not in names)
    else:
        names = list(pd.unique(raw_groups))
    lookup = {name: i + 1 for i, name in enumerate(names)}
    groups = np.array([lookup[g] for g in raw_groups], dtype=np.int64)
    if np.unique(groups).size < 2:
        raise SingleGroup("the protected attribute takes a single value after cleaning")

    if schema is not None:
        pos = roles.positive_label_value
        if pos is None:
            pos = schema.label_values[1]
        labels, label_values = _encode_labels(df[roles.label_column], pos)
        label_values = schema.label_values
    else:
        labels, label_values = _encode_labels(
            df[roles.label_column], roles.positive_label_value
        )

    blocks = []
    categories: dict[str, tuple[str, ...]] = {}
    for col in roles.feature_columns:
        values = df[col].to_numpy(dtype=object)
        if schema is not None:
            is_cat = col in schema.categories
        elif options.categorical_columns is not None:
            is_cat = col in options.categorical_columns
        else:
            is_cat = not all(_is_number(v) for v in pd.unique(values))
        if is_cat:
            cats = schema.categories[col] if schema is not None else tuple(sorted(set(values)))
            index = {c: i for i, c in enumerate(cats)}
            unknown = set(values) - index.keys()
            if unknown:
                raise SchemaMismatch(f"column {col!r} has unseen categories {sorted(unknown)}")
            onehot = np.zeros((len(values), len(cats)))
            onehot[np.arange(len(values)), [index[v] for v in values]] = 1.0
            blocks.append(onehot)
            categories[col] = cats
        else:
            try:
                blocks.append(values.astype(np.float64).reshape(-1, 1))
            except ValueError as exc:
                raise DataError(f"column {col!r} is not numeric: {exc}") from None

    header = [c for c in df.columns]
    new_schema = Schema(roles, tuple(header), categories, label_values)
    features = np.hstack(blocks) if blocks else np.zeros((len(df), 0))
    return EncodedDataset(features, labels, groups, tuple(names), schema=new_schema)


def write_csv(view: DatasetView, path, provenance_column: str | None = None) -> None:
    """Write the rows of ``view`` as a CSV with decoded raw values.

    With ``provenance_column`` set, an extra column marks each row as
    ``real`` or ``synthetic`` according to ``view.provenance``.
    """
    data = view.materialize()
    frame = decode_frame(data)
    if provenance_column is not None:
        if view.provenance is None:
            prov = np.zeros(len(view), dtype=bool)
        else:
            prov = view.provenance[view.selected]
        frame[provenance_column] = np.where(prov, "synthetic", "real")
    try:
        frame.to_csv(path, index=False)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _format_number(value: float) -> str:
    # shortest exact text, without a trailing ".0" on whole numbers
    return np.format_float_positional(value, trim="-")


def decode_frame(data: EncodedDataset) -> pd.DataFrame:
    """Inverse of the encoding: a DataFrame of raw-looking values."""
    schema = data.schema
    names = np.array(data.group_names, dtype=object)
    if schema is None:
        frame = pd.DataFrame(data.features, columns=list(data.feature_names))
        frame["label"] = data.labels.astype(int)
        frame["group"] = names[data.groups - 1] if data.n else []
        return frame
    cols: dict[str, object] = {}
    for col, idx in schema.blocks():
        if col in schema.categories:
            cats = np.array(schema.categories[col], dtype=object)
            block = data.features[:, idx]
            cols[col] = cats[block.argmax(axis=1)] if data.n else np.array([], dtype=object)
        else:
            cols[col] = [_format_number(v) for v in data.features[:, idx[0]]]
    label_values = np.array(schema.label_values, dtype=object)
    cols[schema.roles.label_column] = label_values[data.labels.astype(int)]
    cols[schema.roles.protected_column] = names[data.groups - 1]
    return pd.DataFrame({c: cols[c] for c in schema.columns})
