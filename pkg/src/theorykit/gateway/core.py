"""The single access point for chat models, paper search and full-text fetch."""
from __future__ import annotations

import json
import logging
import math
import random
import re
import threading
import time
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence, TypeVar

from ..model import PaperRecord, RecordError, digest, dumps, loads
from .ledger import CostLedger
from .prompts import PromptAsset, load_prompt

log = logging.getLogger(__name__)

T = TypeVar("T")

FREE_TEXT = "free_text"
STRUCTURED = "structured"


class GatewayError(RuntimeError):
    pass


class TransientError(GatewayError):
    """Retryable provider failure (timeouts, rate limiting, outages)."""


class PermanentError(GatewayError):
    pass


class GatewayFailure(GatewayError):
    """A call failed for good; ``attempts`` lists the error of every try."""

    def __init__(self, message: str, attempts: Sequence[str] = ()):
        super().__init__(message)
        self.attempts = list(attempts)


class ContractViolation(GatewayError):
    """A structured response did not match its expected shape."""


@dataclass(frozen=True)
class ChatRequest:
    prompt_asset_id: str
    variables: Mapping[str, str]
    temperature: float = 0.0
    max_output_tokens: int = 4096
    response_contract: str = FREE_TEXT
    stage: str = "default"
    subject: str = ""
    attempt: int = 0
    reprompt_note: str = ""

    def __post_init__(self):
        if not 0 <= self.temperature <= 2:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")
        if self.response_contract not in (FREE_TEXT, STRUCTURED):
            raise ValueError(f"unknown response contract {self.response_contract!r}")
        bad = [k for k, v in self.variables.items() if not isinstance(v, str)]
        if bad:
            raise ValueError(f"prompt variables must be text: {bad}")

    def key(self, seed: int | None = None) -> dict[str, Any]:
        return {
            "asset": self.prompt_asset_id,
            "variables": digest(dict(self.variables)),
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
            "contract": self.response_contract,
            "attempt": self.attempt,
            "reprompt_note": self.reprompt_note,
            "seed": seed,
        }


@dataclass(frozen=True)
class Usage:
    input_tokens: int
    output_tokens: int

    def __post_init__(self):
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be non-negative")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: Usage
    model_id: str


@dataclass(frozen=True)
class SearchFilter:
    """Publication date constraint: ``after`` is exclusive, ``until`` inclusive."""

    after: date | None = None
    until: date | None = None
    limit: int = 100

    def accepts(self, d: date) -> bool:
        if self.after is not None and d <= self.after:
            return False
        if self.until is not None and d > self.until:
            return False
        return True


@dataclass(frozen=True)
class SearchHit:
    paper: PaperRecord
    score: float


@dataclass(frozen=True)
class BeliefSamples:
    votes: tuple[bool, ...]
    n_requested: int

    @property
    def n_effective(self) -> int:
        return len(self.votes)

    @property
    def estimate(self) -> float | None:
        if not self.votes:
            return None
        return sum(self.votes) / len(self.votes)


class Provider(Protocol):
    def complete(self, prompt: str, request: ChatRequest, model_id: str, seed: int) -> ChatResponse: ...

    def search(self, query: str, filters: SearchFilter) -> list[SearchHit]: ...

    def fetch(self, paper_id: str) -> str | None: ...


class TokenBucket:
    """Request-rate limiter; ``rate`` tokens per second, bursts up to ``capacity``."""

    def __init__(self, rate: float | None, capacity: float | None = None, clock=time.monotonic, sleep=time.sleep):
        self.rate = rate
        self.capacity = capacity or (rate or 1.0)
        self._tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        if not self.rate:
            return
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1:
                    self._tokens -= 1
                    return
                wait = (1 - self._tokens) / self.rate
            self._sleep(wait)


@dataclass
class RetryPolicy:
    max_attempts: int = 5
    base_delay: float = 0.5
    max_delay: float = 30.0
    sleep: Callable[[float], None] = time.sleep

    def delay(self, attempt: int, rng: random.Random) -> float:
        return min(self.max_delay, self.base_delay * 2**attempt) * (0.5 + rng.random() / 2)


_FENCE_RE = re.compile(r"^```(?:json)?\s*|\s*```$", re.MULTILINE)


def parse_json_object(text: str) -> dict[str, Any]:
    """Parse a JSON object from model output, tolerating code fences and chatter around it."""
    text = (text or "").strip()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        stripped = _FENCE_RE.sub("", text)
        start, end = stripped.find("{"), stripped.rfind("}")
        if start == -1 or end <= start:
            raise ContractViolation("response is not a JSON object") from None
        try:
            obj = json.loads(stripped[start : end + 1])
        except json.JSONDecodeError as exc:
            raise ContractViolation(f"invalid JSON: {exc.msg} at offset {exc.pos}") from None
    if not isinstance(obj, dict):
        raise ContractViolation("response JSON is not an object")
    return obj


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


@dataclass
class Gateway:
    provider: Provider
    ledger: CostLedger = field(default_factory=CostLedger)
    models: Mapping[str, str] = field(default_factory=dict)
    default_model: str = "default-model"
    seed: int = 0
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    limiter: TokenBucket = field(default_factory=lambda: TokenBucket(None))
    cache_dir: Path | None = None

    def __post_init__(self):
        self._chat_cache: dict[str, ChatResponse] = {}
        self._text_cache: dict[str, str | None] = {}
        self._cache_lock = threading.Lock()
        self._jitter = random.Random(self.seed)
        self.calls: dict[str, int] = {"chat": 0, "search": 0, "fetch": 0}
        if self.cache_dir is not None:
            self.cache_dir = Path(self.cache_dir)

    # -- plumbing ---------------------------------------------------------

    def model_for(self, stage: str) -> str:
        return self.models.get(stage, self.models.get("default", self.default_model))

    def _with_retry(self, what: str, fn: Callable[[], T]) -> T:
        history: list[str] = []
        for attempt in range(self.retry.max_attempts):
            self.limiter.acquire()
            try:
                return fn()
            except TransientError as exc:
                history.append(f"attempt {attempt + 1}: {exc}")
                if attempt + 1 < self.retry.max_attempts:
                    self.retry.sleep(self.retry.delay(attempt, self._jitter))
            except PermanentError as exc:
                history.append(f"attempt {attempt + 1}: {exc}")
                break
        raise GatewayFailure(f"{what} failed after {len(history)} attempt(s)", history)

    def _cache_path(self, kind: str, key: str, suffix: str) -> Path | None:
        if self.cache_dir is None:
            return None
        return self.cache_dir / kind / f"{key}{suffix}"

    # -- chat ---------------------------------------------------------------

    def render(self, request: ChatRequest) -> tuple[PromptAsset, str]:
        asset = load_prompt(request.prompt_asset_id)
        prompt = asset.render(request.variables)
        if request.reprompt_note:
            prompt += (
                "\n\nYour previous answer could not be accepted: "
                f"{request.reprompt_note}\nAnswer again with JSON only.\n"
            )
        return asset, prompt

    def request_digest(self, request: ChatRequest) -> str:
        asset = load_prompt(request.prompt_asset_id)
        key = request.key(self.seed)
        key["version"] = asset.version
        key["model"] = self.model_for(request.stage)
        return digest(key)

    def chat(self, request: ChatRequest) -> ChatResponse:
        """One model call; cached responses cost nothing and add no ledger entry."""
        _, prompt = self.render(request)  # unbound placeholders raise before any provider call
        key = self.request_digest(request)
        with self._cache_lock:
            hit = self._chat_cache.get(key)
        if hit is None:
            path = self._cache_path("chat", key, ".json")
            if path is not None and path.exists():
                hit = loads(ChatResponse, path.read_text())
                with self._cache_lock:
                    self._chat_cache[key] = hit
        if hit is not None:
            return hit

        model_id = self.model_for(request.stage)

        def call():
            with self._cache_lock:
                self.calls["chat"] += 1
            return self.provider.complete(prompt, request, model_id, self.seed)

        response = self._with_retry(f"chat {request.prompt_asset_id}", call)
        self.ledger.record(
            request.stage,
            response.model_id,
            response.usage.input_tokens,
            response.usage.output_tokens,
            prompt_asset_id=request.prompt_asset_id,
            subject=request.subject,
            request_digest=key,
        )
        with self._cache_lock:
            self._chat_cache[key] = response
            path = self._cache_path("chat", key, ".json")
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_text(dumps(response))
        return response

    def chat_structured(self, request: ChatRequest, parse: Callable[[dict[str, Any]], T]) -> T:
        """Chat expecting JSON; ``parse`` validates it. One reprompt on violation, then raise."""
        request = replace(request, response_contract=STRUCTURED)
        response = self.chat(request)
        try:
            return parse(parse_json_object(response.text))
        except (ContractViolation, RecordError, KeyError, TypeError, ValueError) as exc:
            note = str(exc) or type(exc).__name__
            log.info("contract violation from %s (%s); reprompting", request.prompt_asset_id, note)
        retry = replace(request, attempt=request.attempt + 1, reprompt_note=note)
        response = self.chat(retry)
        try:
            return parse(parse_json_object(response.text))
        except (ContractViolation, RecordError, KeyError, TypeError, ValueError) as exc:
            raise ContractViolation(f"{request.prompt_asset_id}: {exc}") from exc

    def self_belief_samples(self, claim: str, n: int, *, stage: str = "belief", subject: str = "") -> BeliefSamples:
        """``n`` independent yes/no votes on whether the claim's predictions hold."""
        if n < 1:
            raise ValueError("n must be >= 1")
        votes = []
        for i in range(n):
            req = ChatRequest(
                "self_belief",
                {"claim": claim, "sample_index": str(i)},
                temperature=1.0,
                max_output_tokens=16,
                stage=stage,
                subject=subject,
            )
            try:
                text = self.chat(req).text.strip().lower()
            except GatewayFailure:
                continue
            word = re.match(r"[a-z]+", text)
            if word and word.group(0) in ("yes", "true"):
                votes.append(True)
            elif word and word.group(0) in ("no", "false"):
                votes.append(False)
        return BeliefSamples(tuple(votes), n)

    # -- literature -------------------------------------------------------------

    def search_papers(self, query: str, filters: SearchFilter = SearchFilter()) -> list[SearchHit]:
        if not query or not query.strip():
            raise ValueError("search query must be non-empty")

        def call():
            with self._cache_lock:
                self.calls["search"] += 1
            return self.provider.search(query, filters)

        hits = self._with_retry(f"search {query[:40]!r}", call)
        return [h for h in hits if filters.accepts(h.paper.publication_date)][: filters.limit]

    def fetch_full_text(self, paper_id: str) -> str | None:
        """Full text, or None when no open-access text exists. Results are cached."""
        with self._cache_lock:
            if paper_id in self._text_cache:
                return self._text_cache[paper_id]
        safe = digest(paper_id)[:32]
        text_path = self._cache_path("fulltext", safe, ".txt")
        absent_path = self._cache_path("fulltext", safe, ".absent")
        if text_path is not None and text_path.exists():
            text = text_path.read_text()
        elif absent_path is not None and absent_path.exists():
            text = None
        else:

            def call():
                with self._cache_lock:
                    self.calls["fetch"] += 1
                return self.provider.fetch(paper_id)

            text = self._with_retry(f"fetch {paper_id}", call)
            if text is not None and not text.strip():
                text = None
            if text_path is not None:
                text_path.parent.mkdir(parents=True, exist_ok=True)
                if text is None:
                    absent_path.write_text("")
                else:
                    text_path.write_text(text)
        with self._cache_lock:
            self._text_cache[paper_id] = text
        return text
