"""Deterministic offline provider.

Chat responses come from two sources, checked in order: an exact table keyed
by the request key (prompt asset, variables digest, temperature, attempt and
seed) and per-asset responder functions. Responders receive a random
generator seeded from that same key, so a given request always yields the
same text. Requests for an asset with neither entry raise ``UnmappedRequest``.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

from ..model import PaperRecord, digest
from ..text import terms
from .core import (
    ChatRequest,
    ChatResponse,
    GatewayError,
    SearchFilter,
    SearchHit,
    TransientError,
    Usage,
    estimate_tokens,
)


class UnmappedRequest(GatewayError):
    """The mock has no scripted answer for this request."""


@dataclass(frozen=True)
class MockCall:
    request: ChatRequest
    prompt: str
    rng: random.Random
    seed: int

    @property
    def variables(self) -> Mapping[str, str]:
        return self.request.variables


Responder = Callable[[MockCall], str]


def mock_key(request: ChatRequest, seed: int) -> str:
    return digest(
        {
            "asset": request.prompt_asset_id,
            "variables": digest(dict(request.variables)),
            "temperature": request.temperature,
            "attempt": request.attempt,
            "seed": seed,
        }
    )


class MockProvider:
    def __init__(
        self,
        responders: Mapping[str, Responder] | None = None,
        table: Mapping[str, str] | None = None,
        papers: Iterable[PaperRecord] = (),
        min_shared_terms: int = 1,
        transient_failures: Mapping[str, int] | None = None,
    ):
        self.responders = dict(responders or {})
        self.table = dict(table or {})
        self.papers = {p.paper_id: p for p in papers}
        self.min_shared_terms = min_shared_terms
        # remaining transient failures to inject, per operation ("chat", "search", "fetch")
        self.transient_failures = dict(transient_failures or {})
        self.log: list[str] = []

    def _maybe_fail(self, op: str) -> None:
        left = self.transient_failures.get(op, 0)
        if left > 0:
            self.transient_failures[op] = left - 1
            raise TransientError(f"injected {op} failure")

    def complete(self, prompt: str, request: ChatRequest, model_id: str, seed: int) -> ChatResponse:
        self._maybe_fail("chat")
        key = mock_key(request, seed)
        self.log.append(request.prompt_asset_id)
        if key in self.table:
            text = self.table[key]
        elif request.prompt_asset_id in self.responders:
            rng = random.Random(int(key[:16], 16))
            text = self.responders[request.prompt_asset_id](MockCall(request, prompt, rng, seed))
        else:
            raise UnmappedRequest(f"no scripted response for {request.prompt_asset_id} (key {key[:12]})")
        return ChatResponse(text, Usage(estimate_tokens(prompt), estimate_tokens(text)), model_id)

    def search(self, query: str, filters: SearchFilter) -> list[SearchHit]:
        self._maybe_fail("search")
        q = terms(query)
        hits = []
        for paper in self.papers.values():
            if not filters.accepts(paper.publication_date):
                continue
            shared = q & terms(f"{paper.title} {paper.abstract}")
            if len(shared) < self.min_shared_terms or not shared:
                continue
            hits.append(SearchHit(paper.stub(), round(len(shared) / len(q), 6)))
        hits.sort(key=lambda h: (-h.score, -h.paper.publication_date.toordinal(), h.paper.paper_id))
        return hits[: filters.limit]

    def fetch(self, paper_id: str) -> str | None:
        self._maybe_fail("fetch")
        paper = self.papers.get(paper_id)
        if paper is None:
            return None
        return paper.full_text or None
