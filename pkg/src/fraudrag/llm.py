"""Chat-model backends: an HTTP chat-completions client plus a deterministic
in-process mock that votes with the exemplar labels."""

from __future__ import annotations

import os
import time
from dataclasses import dataclass

import requests

from .prompts import RenderedPrompt
from .retrieval import RetrievedSet

ENV_API_BASE = "FRAUDRAG_API_BASE"
ENV_API_KEY = "FRAUDRAG_API_KEY"
ENV_MODEL = "FRAUDRAG_MODEL"


class BackendError(Exception):
    """Permanent backend failure (transport exhausted or rejected request)."""


class ContextLengthError(BackendError):
    def __init__(self, message: str, token_estimate: int):
        super().__init__(f"{message} (prompt token estimate: {token_estimate})")
        self.token_estimate = token_estimate


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.6
    top_p: float = 0.95
    max_tokens: int = 16384
    runs: int = 3

    def __post_init__(self) -> None:
        if not 0.0 <= self.top_p <= 1.0:
            raise ValueError("top_p must be in [0, 1]")
        if self.temperature < 0.0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1 or self.runs < 1:
            raise ValueError("max_tokens and runs must be >= 1")


@dataclass(frozen=True)
class Completion:
    text: str
    input_tokens: int
    output_tokens: int
    latency_ms: float


def mock_majority(rs: RetrievedSet) -> str:
    """Deterministic score from the label majority of the retrieved set."""
    if not rs.items:
        raise ValueError("mock majority needs a nonempty retrieved set")
    frac = rs.positive_fraction
    if frac > 0.5:
        return "Score: 5"
    if frac < 0.5:
        return "Score: 1"
    return "Score: 3"


class MockBackend:
    """Votes with the label phrases found in the prompt itself.

    Counting the serialized label suffixes is equivalent to majority vote
    over the retrieved set, so pipeline runs against this backend reproduce
    a neighbor-majority classifier. Responses carry both a verdict and a
    score so either output mode parses.
    """

    name = "mock"

    def complete(self, prompt: RenderedPrompt, params: GenerationParams) -> Completion:
        negatives = prompt.user.count("It is not a fraud.")
        positives = prompt.user.count("It is a fraud.")
        total = positives + negatives
        if total == 0:
            text = "No similar historical cases were provided; unable to vote."
        else:
            if positives * 2 > total:
                score, verdict = 5, "fraud"
            elif positives * 2 < total:
                score, verdict = 1, "not a fraud"
            else:
                score, verdict = 3, "not a fraud"
            text = (
                f"{positives} of {total} retrieved cases are fraudulent. "
                f"Verdict: {verdict}. Score: {score}"
            )
        return Completion(
            text=text,
            input_tokens=prompt.token_estimate,
            output_tokens=len(text) // 4 + 1,
            latency_ms=0.0,
        )


class HttpBackend:
    """Client for the common chat-completions HTTP convention.

    Transient transport failures (connection errors, timeouts, 429/5xx)
    retry with bounded exponential backoff, at most ``max_attempts`` tries.
    Context-length rejections surface as ContextLengthError.
    """

    name = "http"

    def __init__(
        self,
        base_url: str | None = None,
        model: str | None = None,
        api_key: str | None = None,
        timeout: float = 120.0,
        max_attempts: int = 3,
        backoff_base: float = 0.5,
        context_limit: int | None = None,
        extra: dict | None = None,
    ):
        self.base_url = (base_url or os.environ.get(ENV_API_BASE, "")).rstrip("/")
        self.model = model or os.environ.get(ENV_MODEL, "")
        self.api_key = api_key or os.environ.get(ENV_API_KEY)
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.context_limit = context_limit
        self.extra = extra or {}
        if not self.base_url:
            raise BackendError(f"no API base URL configured (set {ENV_API_BASE})")
        if not self.model:
            raise BackendError(f"no model name configured (set {ENV_MODEL})")

    def complete(self, prompt: RenderedPrompt, params: GenerationParams) -> Completion:
        if self.context_limit is not None and prompt.token_estimate > self.context_limit:
            raise ContextLengthError(
                f"prompt exceeds configured context limit {self.context_limit}",
                prompt.token_estimate,
            )
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
            **self.extra,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(self.backoff_base * (2 ** (attempt - 1)))
            start = time.monotonic()
            try:
                resp = requests.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    headers=headers,
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            latency_ms = (time.monotonic() - start) * 1000.0
            if resp.status_code in (429,) or resp.status_code >= 500:
                last_error = BackendError(f"HTTP {resp.status_code}: {resp.text[:300]}")
                continue
            if resp.status_code != 200:
                body = resp.text[:500]
                if "context" in body.lower() or "length" in body.lower():
                    raise ContextLengthError(
                        f"backend rejected prompt: {body}", prompt.token_estimate
                    )
                raise BackendError(f"HTTP {resp.status_code}: {body}")
            data = resp.json()
            text = data["choices"][0]["message"]["content"] or ""
            usage = data.get("usage", {})
            return Completion(
                text=text,
                input_tokens=int(usage.get("prompt_tokens", prompt.token_estimate)),
                output_tokens=int(usage.get("completion_tokens", len(text) // 4 + 1)),
                latency_ms=latency_ms,
            )
        raise BackendError(
            f"backend unreachable after {self.max_attempts} attempts: {last_error}"
        )


def complete(prompt: RenderedPrompt, params: GenerationParams, backend) -> Completion:
    """Run one completion against the given backend."""
    return backend.complete(prompt, params)


def backend_from_descriptor(desc: dict | str) -> MockBackend | HttpBackend:
    """Build a backend from a config descriptor ("mock" or http settings)."""
    if isinstance(desc, str):
        desc = {"kind": desc}
    kind = desc.get("kind", "mock")
    if kind == "mock":
        return MockBackend()
    if kind == "http":
        return HttpBackend(
            base_url=desc.get("base_url"),
            model=desc.get("model"),
            api_key=desc.get("api_key"),
            timeout=float(desc.get("timeout", 120.0)),
            max_attempts=int(desc.get("max_attempts", 3)),
            backoff_base=float(desc.get("backoff_base", 0.5)),
            context_limit=desc.get("context_limit"),
            extra=desc.get("extra"),
        )
    raise BackendError(f"unknown backend kind {kind!r}")
