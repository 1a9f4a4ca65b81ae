"""Imbalance-aware evaluation: confusion counts, F1/MCC, multi-run aggregation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .scoring import FRAUD, Prediction


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    mcc: float
    degenerate: frozenset[str] = frozenset()

    def as_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "mcc": self.mcc,
            "degenerate": sorted(self.degenerate),
        }


def _is_fraud(pred) -> bool:
    if isinstance(pred, Prediction):
        return pred.label == FRAUD
    if isinstance(pred, str):
        return pred == FRAUD
    return bool(pred)


def confusion(preds, truths) -> ConfusionMatrix:
    """Count the confusion matrix, fraud as the positive class."""
    if len(preds) != len(truths):
        raise ValueError(f"length mismatch: {len(preds)} predictions, {len(truths)} truths")
    tp = fp = fn = tn = 0
    for pred, truth in zip(preds, truths):
        positive = _is_fraud(pred)
        if truth == 1:
            tp += positive
            fn += not positive
        else:
            fp += positive
            tn += not positive
    return ConfusionMatrix(tp, fp, fn, tn)


def metrics(cm: ConfusionMatrix) -> Metrics:
    """Precision, recall, F1 and MCC; zero denominators yield 0, flagged."""
    degenerate = set()

    if cm.tp + cm.fp == 0:
        precision, degenerate = 0.0, degenerate | {"precision"}
    else:
        precision = cm.tp / (cm.tp + cm.fp)
    if cm.tp + cm.fn == 0:
        recall = 0.0
        degenerate.add("recall")
    else:
        recall = cm.tp / (cm.tp + cm.fn)
    if precision + recall == 0.0:
        f1 = 0.0
        degenerate.add("f1")
    else:
        f1 = 2.0 * precision * recall / (precision + recall)

    denom = (
        (cm.tp + cm.fp) * (cm.tp + cm.fn) * (cm.tn + cm.fp) * (cm.tn + cm.fn)
    )
    if denom == 0:
        mcc = 0.0
        degenerate.add("mcc")
    else:
        mcc = (cm.tp * cm.tn - cm.fp * cm.fn) / math.sqrt(denom)
    return Metrics(precision, recall, f1, mcc, frozenset(degenerate))


@dataclass
class RunReport:
    """Per-transaction rows plus the aggregate for one pipeline run."""

    rows: list[dict]
    cm: ConfusionMatrix
    metric_values: Metrics
    flagged: int
    config: dict
    run_index: int = 0

    @classmethod
    def from_rows(cls, rows: list[dict], config: dict, run_index: int = 0) -> "RunReport":
        cm = confusion([r["prediction"] for r in rows], [r["truth"] for r in rows])
        flagged = sum(1 for r in rows if r.get("flagged"))
        return cls(rows, cm, metrics(cm), flagged, config, run_index)

    def summary(self) -> dict:
        return {
            "run": self.run_index,
            "config": self.config,
            "confusion": self.cm.as_dict(),
            "metrics": self.metric_values.as_dict(),
            "flagged": self.flagged,
            "rows": len(self.rows),
        }

    def write_rows(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            for row in self.rows:
                fh.write(json.dumps(row, sort_keys=True))
                fh.write("\n")

    def write_summary(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def read_rows(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


METRIC_NAMES = ("precision", "recall", "f1", "mcc")


def aggregate_runs(reports: list[RunReport]) -> dict:
    """Mean and standard deviation per metric across runs of one config.

    Also retains the per-transaction majority label (ties default legit)
    for analysis. Mismatched config snapshots are refused.
    """
    if not reports:
        raise ValueError("no reports to aggregate")
    first = reports[0].config
    for rep in reports[1:]:
        if rep.config != first:
            raise ValueError("config snapshots differ across runs; refusing to aggregate")

    summary: dict = {"config": first, "runs": len(reports), "metrics": {}}
    for name in METRIC_NAMES:
        values = [getattr(rep.metric_values, name) for rep in reports]
        mean = sum(values) / len(values)
        sd = math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))
        summary["metrics"][name] = {"mean": mean, "sd": sd, "values": values}
    summary["flagged"] = [rep.flagged for rep in reports]

    majority = []
    n_rows = len(reports[0].rows)
    for i in range(n_rows):
        votes = sum(1 for rep in reports if rep.rows[i]["prediction"] == FRAUD)
        majority.append(
            {
                "id": reports[0].rows[i]["id"],
                "truth": reports[0].rows[i]["truth"],
                "label": FRAUD if votes * 2 > len(reports) else "legit",
            }
        )
    summary["majority"] = majority
    return summary
