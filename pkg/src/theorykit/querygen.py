"""Theory queries generated from seed papers."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import date
from typing import Any, Iterable, Sequence

from .gateway import ChatRequest, ContractViolation, Gateway, GatewayFailure, parallel_map
from .model import PaperRecord, QueryKind, TheoryQuery

log = logging.getLogger(__name__)

STAGE = "querygen"
PREFIX = "Build a theory of"


@dataclass(frozen=True)
class QueryPair:
    general: TheoryQuery
    specific: TheoryQuery
    source_paper_id: str

    def __post_init__(self):
        if self.general.kind is not QueryKind.GENERAL or self.specific.kind is not QueryKind.SPECIFIC:
            raise ValueError("query pair kinds must be general and specific")
        if not (self.general.source_paper_id == self.specific.source_paper_id == self.source_paper_id):
            raise ValueError("both queries must name the pair's source paper")


def _query_text(value: Any) -> str:
    text = " ".join(str(value or "").split())
    if not text.startswith(PREFIX):
        raise ContractViolation(f"query does not begin with {PREFIX!r}: {text[:60]!r}")
    if len(text) <= len(PREFIX) + 3:
        raise ContractViolation("query has no content after the prefix")
    return text


def generate_queries(paper: PaperRecord, gateway: Gateway) -> QueryPair:
    """One general and one specific query; ContractViolation after one reprompt."""
    if not (paper.has_full_text or paper.abstract.strip()):
        raise ValueError(f"paper {paper.paper_id} has neither full text nor abstract")

    def parse(obj: dict[str, Any]) -> QueryPair:
        return QueryPair(
            TheoryQuery(f"{paper.paper_id}.general", _query_text(obj["general"]), QueryKind.GENERAL, paper.paper_id),
            TheoryQuery(f"{paper.paper_id}.specific", _query_text(obj["specific"]), QueryKind.SPECIFIC, paper.paper_id),
            paper.paper_id,
        )

    return gateway.chat_structured(
        ChatRequest(
            "generate_queries",
            {"paper_id": paper.paper_id, "title": paper.title, "abstract": paper.abstract, "full_text": paper.full_text},
            max_output_tokens=512,
            stage=STAGE,
            subject=paper.paper_id,
        ),
        parse,
    )


def months_before(d: date, months: int) -> date:
    y, m = divmod(d.year * 12 + d.month - 1 - months, 12)
    m += 1
    day = d.day
    while True:
        try:
            return date(y, m, day)
        except ValueError:
            day -= 1


def seed_window(model_cutoff: date, months: int = 12) -> tuple[date, date]:
    """(exclusive start, inclusive end) of the seed-paper publication window."""
    return months_before(model_cutoff, months), model_cutoff


def select_seed_papers(papers: Iterable[PaperRecord], model_cutoff: date, months: int = 12) -> list[PaperRecord]:
    start, end = seed_window(model_cutoff, months)
    return [p for p in papers if start < p.publication_date <= end]


@dataclass(frozen=True)
class QueryGenResult:
    pairs: tuple[QueryPair, ...]
    skipped: tuple[str, ...]  # paper ids whose output broke the contract

    @property
    def queries(self) -> list[TheoryQuery]:
        return [q for p in self.pairs for q in (p.general, p.specific)]


def generate_query_set(papers: Sequence[PaperRecord], gateway: Gateway, workers: int = 1) -> QueryGenResult:
    def one(paper: PaperRecord) -> QueryPair | None:
        try:
            return generate_queries(paper, gateway)
        except (ContractViolation, GatewayFailure) as exc:
            log.warning("query generation skipped %s: %s", paper.paper_id, exc)
            return None

    results = parallel_map(one, papers, workers)
    pairs = tuple(r for r in results if r is not None)
    skipped = tuple(p.paper_id for p, r in zip(papers, results) if r is None)
    return QueryGenResult(pairs, skipped)
