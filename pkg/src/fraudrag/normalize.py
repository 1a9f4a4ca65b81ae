"""Global z-score standardization of selected numeric features."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DataError, Dataset, Schema
from .forest import SelectedFeatures


@dataclass(frozen=True)
class NormStats:
    """Per-feature (mean, population stddev), fitted on the external split.

    ``features`` fixes the component order of standardized vectors.
    Missing cells and zero-variance features map to component 0.
    """

    features: tuple[str, ...]
    stats: dict[str, tuple[float, float]]

    def to_json(self) -> dict:
        return {
            "features": list(self.features),
            "stats": {f: {"mean": m, "std": s} for f, (m, s) in self.stats.items()},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "NormStats":
        return cls(
            tuple(obj["features"]),
            {f: (d["mean"], d["std"]) for f, d in obj["stats"].items()},
        )


def fit_stats(ext: Dataset, sel: SelectedFeatures) -> NormStats:
    """Mean and population standard deviation per selected numeric feature,
    over non-missing external cells only."""
    stats: dict[str, tuple[float, float]] = {}
    for name in sel.num:
        values = [v for v in ext.column(name) if v is not None]
        if not values:
            raise DataError(f"feature {name!r} is entirely missing in the external split")
        arr = np.asarray(values, dtype=np.float64)
        mean = float(arr.mean())
        std = float(np.sqrt(((arr - mean) ** 2).mean()))
        stats[name] = (mean, std)
    return NormStats(tuple(sel.num), stats)


def z_transform(row: tuple, schema: Schema, stats: NormStats) -> np.ndarray:
    """Standardize one record's numeric features: (value - mean) / std."""
    out = np.zeros(len(stats.features), dtype=np.float64)
    for i, name in enumerate(stats.features):
        value = row[schema.index_of(name)]
        mean, std = stats.stats[name]
        if value is None or std == 0.0:
            continue
        out[i] = (value - mean) / std
    return out


def vectorize_pool(ext: Dataset, sel: SelectedFeatures, stats: NormStats) -> np.ndarray:
    """Standardized matrix of the pool, one row per transaction."""
    n = ext.n
    out = np.zeros((n, len(stats.features)), dtype=np.float64)
    for i, name in enumerate(stats.features):
        mean, std = stats.stats[name]
        if std == 0.0:
            continue
        col = np.array(
            [math.nan if v is None else v for v in ext.column(name)], dtype=np.float64
        )
        z = (col - mean) / std
        z[np.isnan(z)] = 0.0
        out[:, i] = z
    return out


def save_stats(stats: NormStats, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(stats.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_stats(path: str | Path) -> NormStats:
    with open(path, encoding="utf-8") as fh:
        return NormStats.from_json(json.load(fh))
