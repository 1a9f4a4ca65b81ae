"""Typed tabular transaction data: CSV loading, schema typing, stratified splits."""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass
from enum import Enum
from pathlib import Path


class DataError(Exception):
    """Input data violates the dataset contract."""


class ColumnKind(Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"
    LABEL = "label"


# Fraction of non-missing cells that must parse as decimals for a column
# to be inferred numeric.
NUMERIC_INFERENCE_THRESHOLD = 0.99


@dataclass(frozen=True)
class Schema:
    """Ordered column typing; order equals CSV header order."""

    columns: tuple[tuple[str, ColumnKind], ...]

    def __post_init__(self) -> None:
        names = [name for name, _ in self.columns]
        if len(set(names)) != len(names):
            raise DataError("duplicate column names in schema")
        labels = [name for name, kind in self.columns if kind is ColumnKind.LABEL]
        if len(labels) != 1:
            raise DataError(f"schema must have exactly one label column, got {labels}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.columns)

    @property
    def label_column(self) -> str:
        return next(name for name, kind in self.columns if kind is ColumnKind.LABEL)

    @property
    def label_index(self) -> int:
        return self.names.index(self.label_column)

    @property
    def feature_columns(self) -> tuple[str, ...]:
        """Non-label column names, in schema order."""
        return tuple(name for name, kind in self.columns if kind is not ColumnKind.LABEL)

    def kind_of(self, name: str) -> ColumnKind:
        for cname, kind in self.columns:
            if cname == name:
                return kind
        raise KeyError(name)

    def index_of(self, name: str) -> int:
        return self.names.index(name)

    def to_json(self) -> list[list[str]]:
        return [[name, kind.value] for name, kind in self.columns]

    @classmethod
    def from_json(cls, obj: list[list[str]]) -> "Schema":
        return cls(tuple((name, ColumnKind(kind)) for name, kind in obj))


@dataclass
class Dataset:
    """Immutable-by-convention typed table.

    Cells are ``float`` (numeric), ``str`` (categorical), ``int`` 0/1 (label),
    or ``None`` (missing). Every row has exactly ``len(schema.columns)`` cells.
    """

    schema: Schema
    rows: list[tuple]

    def __post_init__(self) -> None:
        if not self.rows:
            raise DataError("dataset has no rows")
        width = len(self.schema.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise DataError(f"row {i} has {len(row)} cells, expected {width}")

    @property
    def n(self) -> int:
        return len(self.rows)

    def labels(self) -> list[int]:
        li = self.schema.label_index
        return [row[li] for row in self.rows]

    def column(self, name: str) -> list:
        j = self.schema.index_of(name)
        return [row[j] for row in self.rows]

    def is_missing(self, row: int, col: int) -> bool:
        return self.rows[row][col] is None


@dataclass(frozen=True)
class SplitSpec:
    test_size: int
    val_size: int
    seed: int

    def __post_init__(self) -> None:
        if self.test_size < 1 or self.val_size < 0:
            raise DataError("split sizes must be positive (validation may be 0)")


def _parse_numeric(text: str) -> float | None:
    s = text.strip()
    if not s:
        return None
    try:
        value = float(s)
    except ValueError:
        return None
    # inf/nan tokens do not count as finite decimals
    if not math.isfinite(value):
        return None
    return value


def _parse_label(text: str, where: str) -> int:
    s = text.strip()
    if not s:
        raise DataError(f"missing label at {where}")
    value = _parse_numeric(s)
    if value is None or value not in (0.0, 1.0):
        raise DataError(f"non-binary label {text!r} at {where}")
    return int(value)


def _infer_kind(cells: list[str]) -> ColumnKind:
    non_missing = [c for c in cells if c.strip()]
    if not non_missing:
        return ColumnKind.CATEGORICAL
    parsed = sum(1 for c in non_missing if _parse_numeric(c) is not None)
    if parsed / len(non_missing) >= NUMERIC_INFERENCE_THRESHOLD:
        return ColumnKind.NUMERIC
    return ColumnKind.CATEGORICAL


def load_csv(
    path: str | Path,
    schema_hints: Schema | None = None,
    *,
    label: str | None = None,
    kinds: dict[str, str] | None = None,
) -> Dataset:
    """Load an RFC-4180 CSV with a header row into a typed Dataset.

    Column kinds come from ``schema_hints`` when given; otherwise the label
    column must be named explicitly (never inferred) and remaining columns
    are inferred numeric/categorical, with ``kinds`` overriding per column.
    Empty and unparseable numeric cells become missing; categorical cells
    keep their raw text.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"CSV file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        raw_rows = list(reader)

    if any(not name.strip() for name in header):
        raise DataError(f"{path}: malformed header (empty column name)")
    if len(set(header)) != len(header):
        raise DataError(f"{path}: malformed header (duplicate column names)")

    if schema_hints is not None:
        if list(schema_hints.names) != header:
            raise DataError(f"{path}: header does not match schema hint columns")
        schema = schema_hints
    else:
        if label is None:
            raise DataError("label column must be configured when no schema is given")
        if label not in header:
            raise DataError(f"{path}: label column {label!r} not in header")
        overrides = {k: ColumnKind(v) for k, v in (kinds or {}).items()}
        cols = []
        for j, name in enumerate(header):
            if name == label:
                cols.append((name, ColumnKind.LABEL))
            elif name in overrides:
                cols.append((name, overrides[name]))
            else:
                cols.append((name, _infer_kind([r[j] for r in raw_rows if j < len(r)])))
        schema = Schema(tuple(cols))

    typed_rows: list[tuple] = []
    for i, raw in enumerate(raw_rows):
        if len(raw) != len(header):
            raise DataError(f"{path}: row {i + 2} has {len(raw)} cells, expected {len(header)}")
        cells: list = []
        for (name, kind), text in zip(schema.columns, raw):
            if kind is ColumnKind.LABEL:
                cells.append(_parse_label(text, f"{path} row {i + 2}"))
            elif kind is ColumnKind.NUMERIC:
                cells.append(_parse_numeric(text))
            else:
                cells.append(text if text != "" else None)
        typed_rows.append(tuple(cells))

    if not typed_rows:
        raise DataError(f"{path}: no data rows")
    return Dataset(schema, typed_rows)


def _largest_remainder(size: int, class_counts: dict[int, int], total: int) -> dict[int, int]:
    """Integer per-class quotas of `size` proportional to class counts.

    Exact integer arithmetic; leftovers go to the largest remainders,
    ties favoring the positive class so minority rows are not rounded away.
    """
    base: dict[int, int] = {}
    remainders: list[tuple[int, int]] = []
    for cls, count in class_counts.items():
        numer = size * count
        base[cls] = numer // total
        remainders.append((numer % total, cls))
    leftover = size - sum(base.values())
    remainders.sort(key=lambda rc: (-rc[0], -rc[1]))
    for _, cls in remainders[:leftover]:
        base[cls] += 1
    return base


def stratified_split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Partition into (external, validation, test), preserving the fraud ratio.

    Test and validation quotas use largest-remainder allocation per class;
    the remaining rows form the external/retrieval pool. Membership is
    decided by a seeded shuffle, so the same seed gives identical splits
    on any platform. Row order within each split follows the source order.
    """
    if spec.test_size + spec.val_size >= ds.n:
        raise DataError(
            f"test_size + val_size = {spec.test_size + spec.val_size} must be < N = {ds.n}"
        )
    labels = ds.labels()
    by_class: dict[int, list[int]] = {0: [], 1: []}
    for i, y in enumerate(labels):
        by_class[y].append(i)
    counts = {c: len(ix) for c, ix in by_class.items()}
    if counts[0] == 0 or counts[1] == 0:
        raise DataError("stratification infeasible: a class has no rows")

    test_alloc = _largest_remainder(spec.test_size, counts, ds.n)
    val_alloc = _largest_remainder(spec.val_size, counts, ds.n)
    for cls in (0, 1):
        if test_alloc[cls] + val_alloc[cls] > counts[cls]:
            raise DataError(
                f"stratification infeasible: class {cls} has {counts[cls]} rows, "
                f"needs {test_alloc[cls] + val_alloc[cls]}"
            )

    rng = random.Random(spec.seed)
    test_ids: list[int] = []
    val_ids: list[int] = []
    ext_ids: list[int] = []
    for cls in (0, 1):
        pool = list(by_class[cls])
        rng.shuffle(pool)
        t, v = test_alloc[cls], val_alloc[cls]
        test_ids.extend(pool[:t])
        val_ids.extend(pool[t : t + v])
        ext_ids.extend(pool[t + v :])

    def take(ids: list[int]) -> Dataset:
        return Dataset(ds.schema, [ds.rows[i] for i in sorted(ids)])

    return take(ext_ids), take(val_ids), take(test_ids)


def fraud_ratio(ds: Dataset) -> float:
    """Fraction of rows labeled positive."""
    return sum(ds.labels()) / ds.n


def _render_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(ds: Dataset, path: str | Path) -> None:
    """Write a dataset in canonical form (deterministic bytes for fixed content)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ds.schema.names)
        for row in ds.rows:
            writer.writerow([_render_cell(c) for c in row])
