"""Prompt serialization: exemplars and the query rendered into chat messages."""

from __future__ import annotations

import random
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .data import Schema
from .forest import MISSING_TOKEN, SelectedFeatures
from .retrieval import RetrievedSet

SCORING_SYSTEM_PROMPT = (
    "You are a helpful financial expert that can help analyze fraud. "
    "Use the fewest reasoning steps needed to reach a correct answer. "
    "Please give a score of 1 to 5 for the probability of fraud. "
    "You must include Score: in your response. "
    "For example, Score: 1 means the lowest probability of fraud, "
    "and Score: 5 means the highest probability of fraud. "
    "Provide a brief explanation for your score."
)

BINARY_SYSTEM_PROMPT = (
    "You are a helpful financial expert that can help analyze fraud. "
    "Decide whether the current case is a fraud. "
    "You must answer with a single verdict: fraud or not a fraud. "
    "Provide a brief explanation for your verdict."
)

RAG_HEADER = (
    "You are given several similar historical cases with their ground truth labels.\n"
    "Use them as guidance and then assess the current case."
)

LABEL_TRUE_TEXT = "It is a fraud."
LABEL_FALSE_TEXT = "It is not a fraud."

BUILTIN_TEMPLATES = {
    "ccf": ("schema_grounded", "ccf.txt"),
    "ccfraud": ("descriptive", "ccfraud.txt"),
    "ieee-cis": ("schema_grounded", "ieee_cis.txt"),
    "paysim": ("descriptive", "paysim.txt"),
}


class TemplateError(Exception):
    """Template body does not cover the selected features."""


@dataclass(frozen=True)
class TemplateSpec:
    """A natural-language body with one named placeholder per selected feature."""

    style: str  # "descriptive" or "schema_grounded"
    body: str
    label_true_text: str = LABEL_TRUE_TEXT
    label_false_text: str = LABEL_FALSE_TEXT

    def placeholders(self) -> list[str]:
        return [name for _, name, _, _ in string.Formatter().parse(self.body) if name]

    def validate(self, sel: SelectedFeatures) -> None:
        places = self.placeholders()
        selected = set(sel.names)
        extra = [p for p in places if p not in selected]
        if extra:
            raise TemplateError(f"placeholders without a selected feature: {extra}")
        counts = {p: places.count(p) for p in places}
        missing = sorted(selected - set(places))
        if missing:
            raise TemplateError(f"selected features absent from template: {missing}")
        dupes = sorted(p for p, c in counts.items() if c > 1)
        if dupes:
            raise TemplateError(f"features appear more than once in template: {dupes}")


@dataclass(frozen=True)
class RenderedPrompt:
    system: str
    user: str
    token_estimate: int


def format_value(value) -> str:
    """Canonical cell rendering: up to 6 significant digits, no trailing zeros;
    missing cells render as the literal token."""
    if value is None:
        return MISSING_TOKEN
    if isinstance(value, float):
        return format(value, ".6g")
    return str(value)


def _fill_body(tpl: TemplateSpec, row: tuple, schema: Schema) -> str:
    values = {name: format_value(row[schema.index_of(name)]) for name in tpl.placeholders()}
    return tpl.body.format(**values)


def render_example(row: tuple, label: int, schema: Schema, tpl: TemplateSpec, index: int) -> str:
    """One exemplar line: filled body followed by its ground-truth label phrase."""
    suffix = tpl.label_true_text if label == 1 else tpl.label_false_text
    return f"Example {index}: {_fill_body(tpl, row, schema)} {suffix}"


def render_query(row: tuple, schema: Schema, tpl: TemplateSpec) -> str:
    return f"Current case: {_fill_body(tpl, row, schema)}"


def build_prompt(
    rs: RetrievedSet | None,
    q: tuple,
    schema: Schema,
    tpl: TemplateSpec,
    mode: str,
    *,
    pool_rows: list[tuple] | None = None,
    order: str = "desc",
    order_seed: int = 0,
) -> RenderedPrompt:
    """Assemble the chat prompt: task header, numbered exemplars, query block.

    ``rs`` of None (or empty) yields the direct-prompt baseline: only the
    query block, no header. Exemplars default to most-similar-first;
    ``order`` may be "desc", "asc", or "shuffle" (seeded).
    """
    if mode not in ("scoring", "binary"):
        raise ValueError(f"unknown prompt mode {mode!r}")
    system = SCORING_SYSTEM_PROMPT if mode == "scoring" else BINARY_SYSTEM_PROMPT

    items = list(rs.items) if rs is not None else []
    if items and pool_rows is None:
        raise ValueError("pool_rows required to render exemplars")
    if order == "asc":
        items = items[::-1]
    elif order == "shuffle":
        random.Random(order_seed).shuffle(items)
    elif order != "desc":
        raise ValueError(f"unknown exemplar order {order!r}")

    query_block = render_query(q, schema, tpl)
    if not items:
        user = query_block
    else:
        examples = [
            render_example(pool_rows[row_id], label, schema, tpl, i)
            for i, (row_id, _, label) in enumerate(items, start=1)
        ]
        user = RAG_HEADER + "\n\n" + "\n".join(examples) + "\n\n" + query_block
    return RenderedPrompt(system, user, estimate_tokens(system, user))


def estimate_tokens(system: str, user: str) -> int:
    # rough chars-per-token heuristic; only used for budgeting and diagnostics
    return (len(system) + len(user)) // 4 + 1


def schema_grounded_template(sel: SelectedFeatures) -> TemplateSpec:
    """Generated fallback template listing each selected feature by raw name."""
    parts = ", ".join(f"{name}: {{{name}}}" for name in sel.names)
    return TemplateSpec("schema_grounded", f"The transaction has attributes: {parts}.")


def builtin_template(name: str) -> TemplateSpec:
    try:
        style, filename = BUILTIN_TEMPLATES[name.lower()]
    except KeyError:
        raise TemplateError(
            f"unknown builtin template {name!r}; available: {sorted(BUILTIN_TEMPLATES)}"
        ) from None
    body = resources.files("fraudrag").joinpath("templates", filename).read_text(encoding="utf-8")
    return TemplateSpec(style, body.rstrip("\n"))


def load_template_file(path: str | Path, style: str = "schema_grounded") -> TemplateSpec:
    body = Path(path).read_text(encoding="utf-8")
    return TemplateSpec(style, body.rstrip("\n"))
