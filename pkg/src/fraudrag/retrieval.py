"""Hybrid exemplar retrieval: categorical equality filtering with backoff,
then exact cosine top-n over standardized numeric features."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import ColumnKind, DataError, Dataset, Schema
from .forest import MISSING_TOKEN, SelectedFeatures
from .normalize import NormStats, vectorize_pool, z_transform

INDEX_FORMAT_VERSION = 1


@dataclass
class RetrievedSet:
    """Top-n neighbors of one query, with backoff diagnostics."""

    items: list[tuple[int, float, int]]  # (row id, similarity, label), similarity nonincreasing
    backoff_depth: int  # deepest categorical constraint level that kept the pool nonempty
    pool_size_at_stop: int
    zero_norm_count: int = 0  # candidates scored 0 because a vector norm was 0

    @property
    def positive_fraction(self) -> float:
        if not self.items:
            return 0.0
        return sum(label for _, _, label in self.items) / len(self.items)

    def to_diagnostics(self) -> dict:
        return {
            "j_star": self.backoff_depth,
            "pool_size": self.pool_size_at_stop,
            "neighbor_ids": [i for i, _, _ in self.items],
            "similarities": [s for _, s, _ in self.items],
            "neighbor_labels": [y for _, _, y in self.items],
            "positive_fraction": self.positive_fraction,
            "zero_norm_count": self.zero_norm_count,
        }


@dataclass
class RetrievalIndex:
    """Immutable retrieval snapshot of the external pool.

    Holds the original records plus everything precomputed offline:
    standardized matrix, row norms, and interned categorical codes for
    O(1) equality tests.
    """

    schema: Schema
    selected: SelectedFeatures
    stats: NormStats
    rows: list[tuple]
    labels: np.ndarray
    matrix: np.ndarray
    norms: np.ndarray
    cat_codes: dict[str, np.ndarray] = field(default_factory=dict)
    cat_values: dict[str, dict[str, int]] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.rows)


def build_index(ext: Dataset, sel: SelectedFeatures, stats: NormStats) -> RetrievalIndex:
    """Precompute the retrieval snapshot for a pool."""
    if ext.n == 0:
        raise DataError("cannot index an empty pool")
    matrix = vectorize_pool(ext, sel, stats)
    norms = np.linalg.norm(matrix, axis=1)
    cat_codes: dict[str, np.ndarray] = {}
    cat_values: dict[str, dict[str, int]] = {}
    for name in sel.cat:
        col = ext.column(name)
        table: dict[str, int] = {}
        codes = np.empty(ext.n, dtype=np.int32)
        for i, v in enumerate(col):
            key = MISSING_TOKEN if v is None else v
            codes[i] = table.setdefault(key, len(table))
        cat_codes[name] = codes
        cat_values[name] = table
    return RetrievalIndex(
        schema=ext.schema,
        selected=sel,
        stats=stats,
        rows=list(ext.rows),
        labels=np.array(ext.labels(), dtype=np.int8),
        matrix=matrix,
        norms=norms,
        cat_codes=cat_codes,
        cat_values=cat_values,
    )


def categorical_filter(idx: RetrievalIndex, q: tuple) -> tuple[np.ndarray, int]:
    """Progressively intersect equality constraints on the selected
    categorical features (most important first), backing off to the last
    nonempty candidate set.

    Returns (candidate row ids, j*). A missing query value matches only
    pool rows missing the same field.
    """
    candidates = np.arange(idx.size)
    j_star = 0
    for j, name in enumerate(idx.selected.cat, start=1):
        value = q[idx.schema.index_of(name)]
        key = MISSING_TOKEN if value is None else value
        code = idx.cat_values[name].get(key, -1)
        narrowed = candidates[idx.cat_codes[name][candidates] == code]
        if narrowed.size == 0:
            break
        candidates = narrowed
        j_star = j
    return candidates, j_star


def cosine_topn(idx: RetrievalIndex, candidates: np.ndarray, zq: np.ndarray, n: int) -> RetrievedSet:
    """Exact top-n candidates by cosine similarity.

    Similarity is 0 whenever either vector norm is 0. Ties break by
    ascending row id. Returns all candidates when fewer than n survive.
    """
    qnorm = float(np.linalg.norm(zq))
    cnorms = idx.norms[candidates]
    zero_norm = int((cnorms == 0.0).sum())
    if qnorm == 0.0 or idx.matrix.shape[1] == 0:
        sims = np.zeros(len(candidates), dtype=np.float64)
        zero_norm = len(candidates)
    else:
        dots = idx.matrix[candidates] @ zq
        denom = np.where(cnorms == 0.0, 1.0, cnorms) * qnorm
        sims = np.where(cnorms == 0.0, 0.0, dots / denom)
    order = np.lexsort((candidates, -sims))[: min(n, len(candidates))]
    items = [
        (int(candidates[i]), float(sims[i]), int(idx.labels[candidates[i]])) for i in order
    ]
    return RetrievedSet(items, 0, len(candidates), zero_norm_count=zero_norm)


def retrieve(idx: RetrievalIndex, q: tuple, n: int) -> RetrievedSet:
    """Two-stage retrieval: categorical backoff, then cosine top-n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    candidates, j_star = categorical_filter(idx, q)
    zq = z_transform(q, idx.schema, idx.stats)
    rs = cosine_topn(idx, candidates, zq, n)
    rs.backoff_depth = j_star
    return rs


def save_index(idx: RetrievalIndex, path: str | Path) -> None:
    """Persist the index as a versioned JSON artifact (deterministic bytes)."""
    doc = {
        "version": INDEX_FORMAT_VERSION,
        "schema": idx.schema.to_json(),
        "selected": {
            "ordered": [[n, s] for n, s in idx.selected.ordered],
            "k": idx.selected.k,
            "cat": idx.selected.cat,
            "num": idx.selected.num,
        },
        "stats": idx.stats.to_json(),
        "rows": [list(row) for row in idx.rows],
        "labels": idx.labels.tolist(),
        "matrix": idx.matrix.tolist(),
        "cat_values": idx.cat_values,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_index(path: str | Path) -> RetrievalIndex:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != INDEX_FORMAT_VERSION:
        raise DataError(f"unsupported index version {doc.get('version')!r}")
    schema = Schema.from_json(doc["schema"])
    sel = SelectedFeatures(
        ordered=[(n, float(s)) for n, s in doc["selected"]["ordered"]],
        k=doc["selected"]["k"],
        cat=list(doc["selected"]["cat"]),
        num=list(doc["selected"]["num"]),
    )
    stats = NormStats.from_json(doc["stats"])
    rows = [tuple(row) for row in doc["rows"]]
    labels = np.array(doc["labels"], dtype=np.int8)
    matrix = np.array(doc["matrix"], dtype=np.float64).reshape(len(rows), len(stats.features))
    norms = np.linalg.norm(matrix, axis=1) if matrix.shape[1] else np.zeros(len(rows))
    cat_values = {f: {k: int(v) for k, v in table.items()} for f, table in doc["cat_values"].items()}
    cat_codes: dict[str, np.ndarray] = {}
    for name in sel.cat:
        table = cat_values[name]
        col_idx = schema.index_of(name)
        codes = np.empty(len(rows), dtype=np.int32)
        for i, row in enumerate(rows):
            v = row[col_idx]
            codes[i] = table[MISSING_TOKEN if v is None else v]
        cat_codes[name] = codes
    return RetrievalIndex(schema, sel, stats, rows, labels, matrix, norms, cat_codes, cat_values)
