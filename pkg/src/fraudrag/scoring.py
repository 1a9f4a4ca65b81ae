"""Parse model output into a risk score or verdict and apply the decision rule."""

from __future__ import annotations

import re
from dataclasses import dataclass

# "Score: N" with optional markdown emphasis around the colon and digit;
# the digit must stand alone so "Score: 10" never reads as 1.
_SCORE_RE = re.compile(r"\bscore[\s*_]*:[\s*_]*([1-5])(?!\d)", re.IGNORECASE)

# Negated forms come first so they win over the bare keyword they contain.
_VERDICT_RE = re.compile(r"\bnot\s+a\s+fraud\b|\bnot\s+fraud\b|\blegitimate\b|\bfraud\b",
                         re.IGNORECASE)

FRAUD = "fraud"
LEGIT = "legit"


@dataclass(frozen=True)
class RiskScore:
    value: int
    parse_ok: bool
    raw_span: str

    def __post_init__(self) -> None:
        if self.parse_ok and self.value not in (1, 2, 3, 4, 5):
            raise ValueError(f"risk score {self.value} out of range")


@dataclass(frozen=True)
class Prediction:
    label: str  # FRAUD or LEGIT
    mode: str  # "scoring" or "binary"
    score: RiskScore | None = None
    flagged: bool = False  # parse failure; label defaulted to legit


def parse_score(text: str) -> RiskScore:
    """Extract the final "Score: N" statement from a completion.

    The last occurrence wins, so restated scores in a reasoning trace do
    not override the closing answer. Failure is a flagged state, never an
    exception.
    """
    matches = list(_SCORE_RE.finditer(text))
    if not matches:
        return RiskScore(0, False, "")
    last = matches[-1]
    return RiskScore(int(last.group(1)), True, last.group(0))


def apply_threshold(score: RiskScore) -> Prediction:
    """Score >= 4 classifies as fraud; parse failures default to legit, flagged."""
    if not score.parse_ok:
        return Prediction(LEGIT, "scoring", score, flagged=True)
    label = FRAUD if score.value >= 4 else LEGIT
    return Prediction(label, "scoring", score)


def parse_binary(text: str) -> Prediction:
    """Last verdict keyword decides; negated forms beat the bare keyword."""
    matches = list(_VERDICT_RE.finditer(text))
    if not matches:
        return Prediction(LEGIT, "binary", flagged=True)
    verdict = matches[-1].group(0).lower()
    label = FRAUD if verdict == "fraud" else LEGIT
    return Prediction(label, "binary")
