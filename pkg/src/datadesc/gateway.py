"""LLM access layer: requests, retries, token accounting, and providers.

Every pipeline stage goes through :class:`LlmGateway.complete`, which retries
transient failures with exponential backoff and records a cost-ledger row per
successful call. Providers are swappable; :class:`MockProvider` serves scripted
responses so the whole pipeline runs offline and deterministically.
"""
from __future__ import annotations

import csv
import hashlib
import io
import math
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import requests
import yaml

from .errors import ConfigurationError, ContractViolationError, ProviderUnavailableError

# Closed set of stage labels used for cost attribution. The content-profiling
# stage never calls an LLM; its label exists so ledgers can cover every stage.
STAGE_TAGS = (
    "content-profile-none",
    "semantic-profile",
    "topic",
    "ufd",
    "sfd",
    "judge-pointwise",
    "judge-pairwise",
)


def approx_token_count(text: str) -> int:
    """Approximate tokens as ceil(characters / 4); empty text counts 0."""
    if not text:
        return 0
    return math.ceil(len(text) / 4)


def prompt_digest(user_prompt: str) -> str:
    """Stable hash used to key scripted mock responses."""
    return hashlib.sha256(user_prompt.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CompletionRequest:
    """One completion call: stage tag, prompt pair, and decoding knobs."""

    tag: str
    user_prompt: str
    system_instructions: str = ""
    temperature: float = 0.0
    max_output_tokens: int = 1024

    def __post_init__(self) -> None:
        if self.tag not in STAGE_TAGS:
            raise ContractViolationError(
                f"unknown stage tag {self.tag!r}; expected one of {STAGE_TAGS}"
            )
        if not 0.0 <= self.temperature <= 2.0:
            raise ContractViolationError(
                f"temperature must be in [0, 2], got {self.temperature}"
            )
        if self.max_output_tokens <= 0:
            raise ContractViolationError("max_output_tokens must be positive")


@dataclass(frozen=True)
class CompletionResult:
    text: str
    input_tokens: int
    output_tokens: int
    latency_ms: int
    attempts: int


@dataclass(frozen=True)
class LedgerEntry:
    tag: str
    input_tokens: int
    output_tokens: int
    latency_ms: int


class CostLedger:
    """Thread-safe accumulator of per-call costs with per-tag totals."""

    def __init__(self) -> None:
        self._entries: list[LedgerEntry] = []
        self._lock = threading.Lock()

    def record(self, tag: str, input_tokens: int, output_tokens: int, latency_ms: int) -> None:
        if tag not in STAGE_TAGS:
            raise ContractViolationError(f"unknown stage tag {tag!r}")
        entry = LedgerEntry(tag, input_tokens, output_tokens, latency_ms)
        with self._lock:
            self._entries.append(entry)

    def entries(self, tag: str | None = None) -> list[LedgerEntry]:
        with self._lock:
            entries = list(self._entries)
        if tag is not None:
            entries = [e for e in entries if e.tag == tag]
        return entries

    def totals_by_tag(self) -> dict[str, dict[str, int]]:
        totals: dict[str, dict[str, int]] = {}
        for e in self.entries():
            slot = totals.setdefault(
                e.tag, {"calls": 0, "input_tokens": 0, "output_tokens": 0, "latency_ms": 0}
            )
            slot["calls"] += 1
            slot["input_tokens"] += e.input_tokens
            slot["output_tokens"] += e.output_tokens
            slot["latency_ms"] += e.latency_ms
        return totals

    def csv_text(self) -> str:
        """Render entries as CSV, sorted so concurrent runs stay byte-identical."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["tag", "input_tokens", "output_tokens", "latency_ms"])
        ordered = sorted(
            self.entries(),
            key=lambda e: (e.tag, e.input_tokens, e.output_tokens, e.latency_ms),
        )
        for e in ordered:
            writer.writerow([e.tag, e.input_tokens, e.output_tokens, e.latency_ms])
        return buf.getvalue()


class TransportFailure(Exception):
    """A single provider call failed; the gateway may retry it."""


@dataclass
class ProviderReply:
    """Raw provider output. Unset token/latency fields are filled by the gateway."""

    text: str
    input_tokens: int | None = None
    output_tokens: int | None = None
    latency_ms: int | None = None


class MockProvider:
    """Scripted offline provider.

    A script is a mapping with optional ``default`` text and a ``rules`` list.
    Each rule may constrain ``tag``, a ``contains`` substring of the user
    prompt, or the exact ``prompt_sha256`` digest, and provides either a single
    ``response`` or a ``responses`` sequence consumed call by call (the last
    element repeats). ``fail_times: N`` makes the rule fail N times before
    answering, for retry tests. First matching rule wins.
    """

    def __init__(self, script: dict | None = None):
        script = script or {}
        self.default: str | None = script.get("default")
        self.rules: list[dict] = [dict(rule) for rule in script.get("rules", [])]
        for rule in self.rules:
            rule.setdefault("_calls", 0)
            rule.setdefault("_failures_left", int(rule.get("fail_times", 0)))
        self.calls: list[tuple[str, str]] = []  # (tag, user_prompt) in call order
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "MockProvider":
        path = Path(path)
        try:
            with open(path, encoding="utf-8") as f:
                script = yaml.safe_load(f) or {}
        except OSError as exc:
            raise ConfigurationError(f"cannot read mock script {path}: {exc}") from exc
        if not isinstance(script, dict):
            raise ConfigurationError(f"mock script {path} must be a mapping")
        return cls(script)

    def _matches(self, rule: dict, request: CompletionRequest) -> bool:
        if "tag" in rule and rule["tag"] != request.tag:
            return False
        if "contains" in rule and rule["contains"] not in request.user_prompt:
            return False
        if "prompt_sha256" in rule and rule["prompt_sha256"] != prompt_digest(
            request.user_prompt
        ):
            return False
        return True

    def send(self, request: CompletionRequest) -> ProviderReply:
        with self._lock:
            self.calls.append((request.tag, request.user_prompt))
            for rule in self.rules:
                if not self._matches(rule, request):
                    continue
                if rule["_failures_left"] > 0:
                    rule["_failures_left"] -= 1
                    raise TransportFailure(
                        f"scripted failure for tag {request.tag!r}"
                    )
                if "responses" in rule:
                    seq = rule["responses"]
                    text = seq[min(rule["_calls"], len(seq) - 1)]
                else:
                    text = rule.get("response", "")
                rule["_calls"] += 1
                return ProviderReply(
                    text=str(text), latency_ms=int(rule.get("latency_ms", 0))
                )
            if self.default is not None:
                text = self.default.replace("{tag}", request.tag).replace(
                    "{prompt_sha256}", prompt_digest(request.user_prompt)
                )
                return ProviderReply(text=text, latency_ms=0)
        raise TransportFailure(f"no scripted response for tag {request.tag!r}")


class RemoteProvider:
    """HTTP chat-completions provider.

    The credential is read from the environment variable named in the config at
    construction time, so a missing credential fails before any network call.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str,
        timeout_s: float = 60.0,
    ):
        self.endpoint = endpoint
        self.model = model
        self.timeout_s = timeout_s
        api_key = os.environ.get(api_key_env, "")
        if not api_key:
            raise ConfigurationError(
                f"environment variable {api_key_env!r} is not set; "
                "refusing to construct a remote provider without a credential"
            )
        self._api_key = api_key

    def build_payload(self, request: CompletionRequest) -> dict:
        messages = []
        if request.system_instructions:
            messages.append({"role": "system", "content": request.system_instructions})
        messages.append({"role": "user", "content": request.user_prompt})
        return {
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }

    @staticmethod
    def parse_reply(data: dict) -> ProviderReply:
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportFailure(f"malformed completion response: {exc}") from exc
        usage = data.get("usage") or {}
        return ProviderReply(
            text=text,
            input_tokens=usage.get("prompt_tokens"),
            output_tokens=usage.get("completion_tokens"),
        )

    def send(self, request: CompletionRequest) -> ProviderReply:
        started = time.monotonic()
        try:
            response = requests.post(
                self.endpoint,
                json=self.build_payload(request),
                headers={"Authorization": f"Bearer {self._api_key}"},
                timeout=self.timeout_s,
            )
            response.raise_for_status()
            data = response.json()
        except requests.RequestException as exc:
            raise TransportFailure(f"completion call failed: {exc}") from exc
        except ValueError as exc:  # non-JSON body
            raise TransportFailure(f"completion response is not JSON: {exc}") from exc
        reply = self.parse_reply(data)
        reply.latency_ms = int((time.monotonic() - started) * 1000)
        return reply


class LlmGateway:
    """Retrying completion front-end with token accounting.

    ``max_retries`` bounds the *total* number of attempts per call. Failed
    attempt *k* (1-based) sleeps ``backoff_base * 2**(k-1)`` seconds before the
    next try. Empty responses count as failures.
    """

    def __init__(
        self,
        provider,
        ledger: CostLedger | None = None,
        tokenizer=approx_token_count,
        max_retries: int = 3,
        backoff_base: float = 0.5,
        sleep=time.sleep,
    ):
        if max_retries < 1:
            raise ContractViolationError("max_retries must be >= 1")
        self.provider = provider
        self.ledger = ledger if ledger is not None else CostLedger()
        self.tokenizer = tokenizer
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self._sleep = sleep

    def count_tokens(self, text: str) -> int:
        return self.tokenizer(text)

    def complete(self, request: CompletionRequest) -> CompletionResult:
        last_cause: Exception | None = None
        for attempt in range(1, self.max_retries + 1):
            started = time.monotonic()
            try:
                reply = self.provider.send(request)
            except TransportFailure as exc:
                last_cause = exc
            else:
                if reply.text == "":
                    last_cause = TransportFailure("provider returned an empty response")
                else:
                    input_tokens = (
                        reply.input_tokens
                        if reply.input_tokens is not None
                        else self.tokenizer(request.system_instructions)
                        + self.tokenizer(request.user_prompt)
                    )
                    output_tokens = (
                        reply.output_tokens
                        if reply.output_tokens is not None
                        else self.tokenizer(reply.text)
                    )
                    latency_ms = (
                        reply.latency_ms
                        if reply.latency_ms is not None
                        else int((time.monotonic() - started) * 1000)
                    )
                    self.ledger.record(request.tag, input_tokens, output_tokens, latency_ms)
                    return CompletionResult(
                        text=reply.text,
                        input_tokens=input_tokens,
                        output_tokens=output_tokens,
                        latency_ms=latency_ms,
                        attempts=attempt,
                    )
            if attempt < self.max_retries:
                self._sleep(self.backoff_base * (2 ** (attempt - 1)))
        raise ProviderUnavailableError(
            f"completion for tag {request.tag!r} failed after "
            f"{self.max_retries} attempts: {last_cause}",
            last_cause=last_cause,
        )
