"""Random-forest feature ranking: CART trees on Gini impurity, MDI importances."""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import ColumnKind, DataError, Dataset, Schema

MISSING_TOKEN = "missing"


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 16
    min_samples_leaf: int = 1
    features_per_split: str | int = "sqrt"  # "sqrt", "all", or an explicit count
    bootstrap: bool = True
    class_weighting: str = "balanced"  # "balanced" or "none"
    seed: int = 0
    max_rows: int | None = 200_000  # stratified cap on training rows

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.class_weighting not in ("balanced", "none"):
            raise ValueError(f"unknown class_weighting {self.class_weighting!r}")

    def to_json(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "features_per_split": self.features_per_split,
            "bootstrap": self.bootstrap,
            "class_weighting": self.class_weighting,
            "seed": self.seed,
            "max_rows": self.max_rows,
        }


@dataclass
class FeatureImportance:
    """Per-feature importance scores, normalized to sum to 1 unless degenerate."""

    scores: dict[str, float]
    degenerate: bool = False  # no split occurred anywhere; scores left at zero


@dataclass
class SelectedFeatures:
    """Top-k feature subset, partitioned into categorical and numeric parts."""

    ordered: list[tuple[str, float]]
    k: int
    cat: list[str]
    num: list[str]

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.ordered]


@dataclass
class Forest:
    """Opaque trained-forest handle; query it via importance_scores()."""

    feature_names: tuple[str, ...]
    config: ForestConfig
    importance_acc: np.ndarray  # summed weighted impurity decrease per feature
    n_splits: int
    root_splits: list[tuple[int, float]] = field(default_factory=list)


def _encode_features(ds: Dataset) -> tuple[np.ndarray, tuple[str, ...]]:
    """Encode non-label columns as a float matrix.

    Numeric: missing imputed with the column mean. Categorical: ordinal
    codes in first-seen order, with missing as its own category.
    """
    names = ds.schema.feature_columns
    n = ds.n
    X = np.empty((n, len(names)), dtype=np.float64)
    for j, name in enumerate(names):
        col = ds.column(name)
        if ds.schema.kind_of(name) is ColumnKind.NUMERIC:
            arr = np.array([math.nan if v is None else v for v in col], dtype=np.float64)
            mask = np.isnan(arr)
            if mask.all():
                arr[:] = 0.0
            elif mask.any():
                arr[mask] = arr[~mask].mean()
            X[:, j] = arr
        else:
            codes: dict[str, int] = {}
            enc = np.empty(n, dtype=np.float64)
            for i, v in enumerate(col):
                key = MISSING_TOKEN if v is None else v
                enc[i] = codes.setdefault(key, len(codes))
            X[:, j] = enc
    return X, names


def _class_weights(y: np.ndarray, rule: str) -> np.ndarray:
    if rule == "none":
        return np.ones(len(y), dtype=np.float64)
    # weight inversely proportional to class frequency: n / (2 * n_c)
    counts = np.bincount(y, minlength=2)
    w = len(y) / (2.0 * counts)
    return w[y]


def _stratified_cap(y: np.ndarray, cap: int, seed: int) -> np.ndarray:
    """Indices of a proportional per-class subsample of size <= cap."""
    n = len(y)
    rng = np.random.default_rng([seed, 0x5CA1E])
    keep: list[np.ndarray] = []
    for cls in (0, 1):
        ids = np.flatnonzero(y == cls)
        quota = max(1, (cap * len(ids)) // n)
        keep.append(rng.permutation(ids)[:quota])
    return np.sort(np.concatenate(keep))


def _best_split(v: np.ndarray, y01: np.ndarray, w: np.ndarray, parent_gini: float,
                min_leaf: int) -> tuple[float, float] | None:
    """Best threshold for one feature: (weighted impurity decrease, threshold).

    Thresholds are midpoints between consecutive distinct sorted values;
    rows with value <= threshold go left. Among equal decreases the lowest
    threshold wins.
    """
    order = np.argsort(v, kind="stable")
    vs = v[order]
    ws = w[order]
    wp = ws * y01[order]

    cuts = np.flatnonzero(vs[:-1] < vs[1:])
    if cuts.size == 0:
        return None
    if min_leaf > 1:
        n = len(vs)
        cuts = cuts[(cuts + 1 >= min_leaf) & (n - cuts - 1 >= min_leaf)]
        if cuts.size == 0:
            return None

    cw = np.cumsum(ws)
    cwp = np.cumsum(wp)
    W, Wp = cw[-1], cwp[-1]
    wl = cw[cuts]
    wpl = cwp[cuts]
    wr = W - wl
    wpr = Wp - wpl
    pl = wpl / wl
    pr = wpr / wr
    gini_l = 1.0 - pl * pl - (1.0 - pl) * (1.0 - pl)
    gini_r = 1.0 - pr * pr - (1.0 - pr) * (1.0 - pr)
    dec = parent_gini - (wl / W) * gini_l - (wr / W) * gini_r

    b = int(np.argmax(dec))  # first max => lowest threshold on ties
    thr = (vs[cuts[b]] + vs[cuts[b] + 1]) / 2.0
    return float(dec[b]), thr


def _n_candidates(rule: str | int, d: int) -> int:
    if rule == "all":
        return d
    if rule == "sqrt":
        return max(1, int(math.sqrt(d)))
    return max(1, min(int(rule), d))


def _grow_tree(X: np.ndarray, y: np.ndarray, w: np.ndarray, cfg: ForestConfig,
               rng: np.random.Generator, importance: np.ndarray) -> tuple[int, tuple[int, float] | None]:
    n, d = X.shape
    if cfg.bootstrap:
        sample = rng.integers(0, n, size=n)
    else:
        sample = np.arange(n)
    m = _n_candidates(cfg.features_per_split, d)
    root_weight = float(w[sample].sum())
    n_splits = 0
    root_split: tuple[int, float] | None = None

    stack: list[tuple[np.ndarray, int]] = [(sample, 0)]
    while stack:
        idx, depth = stack.pop()
        wn = w[idx]
        yn = y[idx]
        W = float(wn.sum())
        p = float(wn[yn == 1].sum()) / W
        parent_gini = 1.0 - p * p - (1.0 - p) * (1.0 - p)
        if depth >= cfg.max_depth or parent_gini == 0.0 or len(idx) < 2 * cfg.min_samples_leaf:
            continue

        if m == d:
            cand = np.arange(d)
        else:
            cand = np.sort(rng.choice(d, size=m, replace=False))
        best_dec = 0.0
        best_feature = -1
        best_thr = 0.0
        for f in cand:
            found = _best_split(X[idx, f], yn, wn, parent_gini, cfg.min_samples_leaf)
            if found is not None and found[0] > best_dec:
                best_dec, best_thr = found
                best_feature = int(f)
        if best_feature < 0:
            continue

        importance[best_feature] += (W / root_weight) * best_dec
        n_splits += 1
        if depth == 0:
            root_split = (best_feature, best_thr)
        left = idx[X[idx, best_feature] <= best_thr]
        right = idx[X[idx, best_feature] > best_thr]
        stack.append((left, depth + 1))
        stack.append((right, depth + 1))
    return n_splits, root_split


def train_forest(ext: Dataset, cfg: ForestConfig) -> Forest:
    """Train a random forest of CART trees on the external split.

    Each tree's random stream derives from (seed, tree index), so the
    resulting importances are reproducible and independent of scheduling.
    """
    if ext.n < 2:
        raise DataError("forest training needs at least 2 rows")
    X, names = _encode_features(ext)
    y = np.array(ext.labels(), dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise DataError("forest training needs both classes present")
    if all(X[:, j].min() == X[:, j].max() for j in range(X.shape[1])):
        raise DataError("all features are constant")

    if cfg.max_rows is not None and ext.n > cfg.max_rows:
        keep = _stratified_cap(y, cfg.max_rows, cfg.seed)
        X, y = X[keep], y[keep]

    w = _class_weights(y, cfg.class_weighting)
    acc = np.zeros(X.shape[1], dtype=np.float64)
    total_splits = 0
    roots: list[tuple[int, float]] = []
    for t in range(cfg.n_trees):
        rng = np.random.default_rng([cfg.seed, t])
        per_tree = np.zeros(X.shape[1], dtype=np.float64)
        n_splits, root = _grow_tree(X, y, w, cfg, rng, per_tree)
        acc += per_tree
        total_splits += n_splits
        if root is not None:
            roots.append(root)
    return Forest(names, cfg, acc / cfg.n_trees, total_splits, roots)


def importance_scores(forest: Forest) -> FeatureImportance:
    """Mean decrease in impurity per feature, normalized to sum to 1."""
    total = float(forest.importance_acc.sum())
    if total <= 0.0:
        return FeatureImportance({n: 0.0 for n in forest.feature_names}, degenerate=True)
    return FeatureImportance(
        {n: float(s) / total for n, s in zip(forest.feature_names, forest.importance_acc)}
    )


def _partition(ordered: list[tuple[str, float]], schema: Schema, k: int) -> SelectedFeatures:
    cat = [n for n, _ in ordered if schema.kind_of(n) is ColumnKind.CATEGORICAL]
    num = [n for n, _ in ordered if schema.kind_of(n) is ColumnKind.NUMERIC]
    return SelectedFeatures(ordered, k, cat, num)


def select_top_k(imp: FeatureImportance, schema: Schema, k: int) -> SelectedFeatures:
    """Top-k features by descending importance, ties broken by schema order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    names = schema.feature_columns
    order = sorted(names, key=lambda n: (-imp.scores[n], names.index(n)))
    chosen = order[: min(k, len(names))]
    return _partition([(n, imp.scores[n]) for n in chosen], schema, k)


def select_random_k(schema: Schema, k: int, seed: int) -> SelectedFeatures:
    """Uniform sample (without replacement) of non-label features."""
    if k < 1:
        raise ValueError("k must be >= 1")
    names = list(schema.feature_columns)
    rng = random.Random(seed)
    chosen = rng.sample(names, min(k, len(names)))
    return _partition([(n, 0.0) for n in chosen], schema, k)


def save_ranking(path: str | Path, ordered: list[tuple[str, float]], *,
                 strategy: str, cfg: ForestConfig | None = None, seed: int | None = None) -> None:
    """Persist a feature ranking so retrieval runs can skip retraining."""
    doc = {
        "version": 1,
        "strategy": strategy,
        "features": [{"name": n, "importance": s} for n, s in ordered],
        "forest": cfg.to_json() if cfg is not None else None,
        "seed": seed if seed is not None else (cfg.seed if cfg is not None else None),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_ranking(path: str | Path) -> list[tuple[str, float]]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return [(f["name"], float(f["importance"])) for f in doc["features"]]


def select_from_ranking(ranked: list[tuple[str, float]], schema: Schema, k: int) -> SelectedFeatures:
    """Rebuild a SelectedFeatures from a persisted full ranking."""
    chosen = ranked[: min(k, len(ranked))]
    return _partition(list(chosen), schema, k)
