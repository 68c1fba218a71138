"""CSV ingestion, preprocessing, and protected-group stratification.

The pipeline turns a raw CSV table into a numeric ``Dataset``:

1. protected columns and the class column are split off (never part of
   the feature matrix);
2. unordered categorical feature columns are removed, ordered
   categorical ones are integer-coded via a configured value order;
3. every retained feature is min-max scaled to [0, 1].

Rows with missing or unparseable retained cells are dropped and counted.
Scaling statistics are recorded on the Dataset so repaired values can be
written back out in raw units, and so a test table can be transformed
with statistics fitted on a training table (pass ``scaling_stats``).
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

__all__ = [
    "RawTable",
    "SchemaConfig",
    "Dataset",
    "load_csv",
    "preprocess",
    "split_train_test",
    "stratify",
    "write_repaired_csv",
]

# Cell contents treated as missing data (after stripping whitespace).
MISSING_TOKENS = {"", "?", "NA", "N/A", "na", "n/a"}


@dataclass(frozen=True)
class RawTable:
    """An untyped CSV table: header plus rows of string cells."""

    header: tuple
    rows: tuple

    def __post_init__(self) -> None:
        if len(set(self.header)) != len(self.header):
            dupes = [h for h, k in Counter(self.header).items() if k > 1]
            raise ValueError(f"duplicate header names: {dupes}")
        width = len(self.header)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise ValueError(
                    f"row {i + 1} has {len(row)} cells, expected {width}"
                )

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list:
        j = self.header.index(name)
        return [row[j] for row in self.rows]


def load_csv(path, has_header: bool = True) -> RawTable:
    """Read an RFC-4180-style UTF-8 CSV file into a RawTable.

    Leading lines starting with '#' (e.g. the provenance comment written
    by the repair command) are skipped.  A ragged row raises naming the
    offending line.
    """
    header: Optional[list] = None
    rows: list = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        lineno = 0
        for record in reader:
            lineno = reader.line_num
            if header is None and not rows:
                if record and record[0].lstrip().startswith("#"):
                    continue
            if header is None and has_header:
                header = [cell.strip() for cell in record]
                continue
            if header is None:
                header = [f"c{i}" for i in range(len(record))]
            if len(record) != len(header):
                raise ValueError(
                    f"{path}: line {lineno}: expected {len(header)} cells, "
                    f"got {len(record)}"
                )
            rows.append(tuple(record))
    if header is None:
        raise ValueError(f"{path}: empty file")
    return RawTable(header=tuple(header), rows=tuple(rows))


def _as_value_list(v) -> list:
    return [v] if isinstance(v, str) else list(v)


@dataclass(frozen=True)
class SchemaConfig:
    """Declarative schema for a tabular dataset.

    minority_values maps each protected column to the value (or list of
    values, merged into one group) designated X=0.  default_values
    optionally names the majority/reference value per protected column;
    when absent it is inferred (the only other value when binary, else
    the most frequent non-minority value, with a warning).

    ordered_categorical_maps supports two forms per column: an ordered
    list of category strings (integer-coded feature), or
    ``{"thresholds": [...], "labels": [...]}`` which bins a numeric
    column into ordered labels before any protected grouping (used e.g.
    to split an age column at 25).

    class_threshold_value, when set, derives the binary class label as
    ``class_column value >= threshold`` instead of comparing against
    positive_label; the source column then remains a feature.
    """

    protected_columns: tuple
    class_column: str
    positive_label: str
    minority_values: Mapping[str, Sequence[str]] = field(default_factory=dict)
    ordered_categorical_maps: Mapping[str, object] = field(default_factory=dict)
    drop_columns: tuple = ()
    default_values: Mapping[str, str] = field(default_factory=dict)
    class_threshold_value: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.protected_columns:
            raise ValueError("at least one protected column is required")
        if self.class_column in self.protected_columns:
            raise ValueError("class column cannot also be protected")
        if not self.positive_label:
            raise ValueError("positive_label must be nonempty")
        for col, spec in self.ordered_categorical_maps.items():
            if isinstance(spec, Mapping):
                thresholds = spec.get("thresholds")
                labels = spec.get("labels")
                if not thresholds or not labels or len(labels) != len(thresholds) + 1:
                    raise ValueError(
                        f"threshold map for {col!r} needs n thresholds "
                        f"and n+1 labels"
                    )
                if list(thresholds) != sorted(thresholds):
                    raise ValueError(f"thresholds for {col!r} must be ascending")
            else:
                values = list(spec)
                if len(set(values)) != len(values):
                    raise ValueError(f"ordered categories for {col!r} must be unique")

    @staticmethod
    def from_mapping(cfg: Mapping) -> "SchemaConfig":
        known = {
            "protected_columns",
            "class_column",
            "positive_label",
            "minority_values",
            "ordered_categorical_maps",
            "drop_columns",
            "default_values",
            "class_threshold_value",
        }
        unknown = set(cfg) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return SchemaConfig(
            protected_columns=tuple(cfg["protected_columns"]),
            class_column=cfg["class_column"],
            positive_label=str(cfg.get("positive_label", "")),
            minority_values={
                k: tuple(_as_value_list(v))
                for k, v in cfg.get("minority_values", {}).items()
            },
            ordered_categorical_maps=dict(cfg.get("ordered_categorical_maps", {})),
            drop_columns=tuple(cfg.get("drop_columns", ())),
            default_values=dict(cfg.get("default_values", {})),
            class_threshold_value=cfg.get("class_threshold_value"),
        )

    @staticmethod
    def from_file(path) -> "SchemaConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return SchemaConfig.from_mapping(json.load(fh))

    def minority_token(self, col: str) -> str:
        vals = _as_value_list(self.minority_values.get(col, ()))
        if not vals:
            raise ValueError(f"no minority value configured for {col!r}")
        return vals[0] if len(vals) == 1 else "|".join(vals)


@dataclass(frozen=True)
class Dataset:
    """Preprocessed numeric view of a table, grouped by protected values.

    attributes is an (n_rows, n_columns) float matrix; protected holds
    one tuple of protected values per row (tuples so joint distributions
    over several protected columns work unchanged); group_index maps each
    distinct tuple to its sorted row indices.
    """

    protected: tuple
    protected_columns: tuple
    attributes: np.ndarray
    column_names: tuple
    class_labels: np.ndarray
    group_index: Mapping[tuple, np.ndarray]
    minority_key: tuple
    default_key: tuple
    scaling: Mapping[str, tuple]
    source_rows: np.ndarray
    warnings: tuple = ()
    n_dropped: int = 0

    @property
    def n_rows(self) -> int:
        return int(self.attributes.shape[0])

    @property
    def group_keys(self) -> list:
        return sorted(self.group_index.keys())

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        protected = tuple(self.protected[i] for i in idx)
        return Dataset(
            protected=protected,
            protected_columns=self.protected_columns,
            attributes=self.attributes[idx],
            column_names=self.column_names,
            class_labels=self.class_labels[idx],
            group_index=_build_group_index(protected),
            minority_key=self.minority_key,
            default_key=self.default_key,
            scaling=self.scaling,
            source_rows=self.source_rows[idx],
            warnings=self.warnings,
            n_dropped=self.n_dropped,
        )

    def with_attributes(self, attributes: np.ndarray) -> "Dataset":
        if attributes.shape != self.attributes.shape:
            raise ValueError("replacement attribute matrix must keep the shape")
        return Dataset(
            protected=self.protected,
            protected_columns=self.protected_columns,
            attributes=np.asarray(attributes, dtype=float),
            column_names=self.column_names,
            class_labels=self.class_labels,
            group_index=self.group_index,
            minority_key=self.minority_key,
            default_key=self.default_key,
            scaling=self.scaling,
            source_rows=self.source_rows,
            warnings=self.warnings,
            n_dropped=self.n_dropped,
        )

    def inverse_scaled(self, column: str, values) -> np.ndarray:
        """Map scaled [0,1] values of a column back to raw units."""
        lo, hi = self.scaling[column]
        return np.asarray(values, dtype=float) * (hi - lo) + lo


def _build_group_index(protected) -> dict:
    index: dict = {}
    for i, key in enumerate(protected):
        index.setdefault(key, []).append(i)
    return {k: np.asarray(v, dtype=np.int64) for k, v in index.items()}


def _bin_by_thresholds(cell: str, spec: Mapping, col: str) -> str:
    try:
        v = float(cell)
    except ValueError:
        raise ValueError(f"non-numeric cell {cell!r} in threshold column {col!r}")
    idx = int(np.searchsorted(np.asarray(spec["thresholds"], dtype=float), v, side="right"))
    return spec["labels"][idx]


def _is_missing(cell: str) -> bool:
    return cell.strip() in MISSING_TOKENS


def preprocess(table: RawTable, config: SchemaConfig, scaling_stats=None) -> Dataset:
    """Apply the numeric preprocessing pipeline to a raw table.

    scaling_stats, when given, is a mapping column -> (min, max) used
    instead of statistics fitted on this table (for transforming a test
    table with training statistics; transformed values may then fall
    outside [0, 1]).
    """
    col_idx = {name: j for j, name in enumerate(table.header)}
    for col in (*config.protected_columns, config.class_column, *config.drop_columns):
        if col not in col_idx:
            raise ValueError(f"column {col!r} not in table header")

    excluded = set(config.protected_columns) | set(config.drop_columns)
    if config.class_threshold_value is None:
        excluded.add(config.class_column)

    warnings: list = []
    retained: list = []
    coded_maps: dict = {}
    for name in table.header:
        if name in excluded:
            continue
        spec = config.ordered_categorical_maps.get(name)
        if spec is not None:
            if isinstance(spec, Mapping):
                raise ValueError(
                    f"threshold map on feature column {name!r} is not supported; "
                    f"threshold binning is for protected columns"
                )
            coded_maps[name] = {v: float(i) for i, v in enumerate(spec)}
            retained.append(name)
            continue
        numeric = all(
            _is_missing(cell) or _parses_as_float(cell)
            for cell in table.column(name)
        )
        if numeric:
            retained.append(name)
        else:
            warnings.append(f"column {name!r} removed (unordered categorical)")

    minority_tokens = {
        col: config.minority_token(col) for col in config.protected_columns
    }
    minority_sets = {
        col: set(_as_value_list(config.minority_values.get(col, ())))
        for col in config.protected_columns
    }

    kept_rows: list = []
    protected_keys: list = []
    labels: list = []
    values: list = []
    n_missing_class = 0
    n_rejected = 0
    threshold = config.class_threshold_value
    class_j = col_idx[config.class_column]

    for i, row in enumerate(table.rows):
        cell = row[class_j]
        if _is_missing(cell):
            n_missing_class += 1
            continue
        if threshold is not None:
            try:
                label = float(cell) >= float(threshold)
            except ValueError:
                n_missing_class += 1
                continue
        else:
            label = cell.strip() == config.positive_label

        key_parts = []
        feats = []
        ok = True
        for col in config.protected_columns:
            cell = row[col_idx[col]]
            if _is_missing(cell):
                ok = False
                break
            cell = cell.strip()
            spec = config.ordered_categorical_maps.get(col)
            if isinstance(spec, Mapping):
                cell = _bin_by_thresholds(cell, spec, col)
            if cell in minority_sets[col]:
                cell = minority_tokens[col]
            key_parts.append(cell)
        if ok:
            for name in retained:
                cell = row[col_idx[name]]
                if _is_missing(cell):
                    ok = False
                    break
                if name in coded_maps:
                    code = coded_maps[name].get(cell.strip())
                    if code is None:
                        ok = False
                        break
                    feats.append(code)
                else:
                    try:
                        feats.append(float(cell))
                    except ValueError:
                        ok = False
                        break
        if not ok:
            n_rejected += 1
            continue
        kept_rows.append(i)
        protected_keys.append(tuple(key_parts))
        labels.append(label)
        values.append(feats)

    if not kept_rows:
        raise ValueError("no usable rows after preprocessing")

    attributes = np.asarray(values, dtype=float)
    if attributes.ndim == 1:
        attributes = attributes.reshape(len(kept_rows), 0)

    scaling: dict = {}
    for j, name in enumerate(retained):
        if scaling_stats is not None:
            lo, hi = scaling_stats[name]
        else:
            lo = float(attributes[:, j].min())
            hi = float(attributes[:, j].max())
        if hi == lo:
            attributes[:, j] = 0.0
            warnings.append(f"column {name!r} is constant; scaled values set to 0")
        else:
            attributes[:, j] = (attributes[:, j] - lo) / (hi - lo)
        scaling[name] = (lo, hi)

    minority_key = tuple(minority_tokens[c] for c in config.protected_columns)
    default_key = _infer_default_key(
        config, protected_keys, minority_key, warnings
    )

    dropped = n_missing_class + n_rejected
    if dropped:
        warnings.append(
            f"dropped {dropped} rows ({n_missing_class} missing class label, "
            f"{n_rejected} unusable cells)"
        )

    attributes.setflags(write=False)
    class_arr = np.asarray(labels, dtype=bool)
    class_arr.setflags(write=False)
    protected_tuple = tuple(protected_keys)
    return Dataset(
        protected=protected_tuple,
        protected_columns=config.protected_columns,
        attributes=attributes,
        column_names=tuple(retained),
        class_labels=class_arr,
        group_index=_build_group_index(protected_tuple),
        minority_key=minority_key,
        default_key=default_key,
        scaling=scaling,
        source_rows=np.asarray(kept_rows, dtype=np.int64),
        warnings=tuple(warnings),
        n_dropped=dropped,
    )


def _parses_as_float(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _infer_default_key(config, protected_keys, minority_key, warnings) -> tuple:
    parts = []
    for pos, col in enumerate(config.protected_columns):
        configured = config.default_values.get(col)
        if configured is not None:
            parts.append(configured)
            continue
        counts = Counter(
            key[pos] for key in protected_keys if key[pos] != minority_key[pos]
        )
        if not counts:
            warnings.append(f"protected column {col!r} has no non-minority rows")
            parts.append(None)
        elif len(counts) == 1:
            parts.append(next(iter(counts)))
        else:
            # several candidate majority values: pick the most frequent,
            # breaking ties by value for determinism
            best = max(sorted(counts), key=lambda v: counts[v])
            warnings.append(
                f"protected column {col!r} has multiple non-minority values; "
                f"using most frequent {best!r} as default"
            )
            parts.append(best)
    return tuple(parts)


def split_train_test(data: Dataset, test_fraction: float, seed: int):
    """Seeded random row split into (train, test) parts.

    The train part gets ceil((1 - test_fraction) * n) rows and the test
    part the remainder; row order within each part follows the input.
    """
    n = data.n_rows
    if n < 3:
        raise ValueError("need at least 3 rows to split")
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    n_train = int(math.ceil((1.0 - test_fraction) * n))
    if n_train < 1 or n - n_train < 1:
        raise ValueError(f"degenerate split sizes ({n_train}, {n - n_train})")
    perm = np.random.default_rng(seed).permutation(n)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    return data.subset(train_idx), data.subset(test_idx)


def stratify(data: Dataset, columns) -> dict:
    """Group row indices by the joint value of the given protected columns."""
    columns = list(columns)
    for col in columns:
        if col not in data.protected_columns:
            raise ValueError(f"{col!r} is not a protected column of this dataset")
    positions = [data.protected_columns.index(c) for c in columns]
    projected = tuple(tuple(key[p] for p in positions) for key in data.protected)
    return _build_group_index(projected)


def write_repaired_csv(fh, table: RawTable, original: Dataset,
                       repaired: Dataset, mode: str, lam: float) -> None:
    """Emit a repaired dataset as CSV against its source table.

    The first line is a ``# repaired: mode=<m> lambda=<l>`` comment; then
    the original header.  Repaired feature cells are written back in raw
    units (inverse of the recorded min-max scaling) with shortest
    round-trip float formatting; all other cells (protected columns,
    class column, removed columns) are copied byte-for-byte.  Rows that
    preprocessing dropped are omitted.
    """
    fh.write(f"# repaired: mode={mode} lambda={lam!r}\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(table.header)
    col_pos = {name: table.header.index(name) for name in original.column_names}
    raw_cols = {
        name: original.inverse_scaled(name, repaired.attributes[:, j])
        for j, name in enumerate(original.column_names)
    }
    for i, src in enumerate(original.source_rows):
        row = list(table.rows[src])
        for name in original.column_names:
            row[col_pos[name]] = repr(float(raw_cols[name][i]))
        writer.writerow(row)
