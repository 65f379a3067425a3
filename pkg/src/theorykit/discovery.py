"""Builds a query's paper corpus: direct search, then one hop of reference backfill."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, Sequence

from .gateway import ChatRequest, Gateway, SearchFilter, parallel_map
from .model import Corpus, KnowledgeWindow, PaperRecord, RetrievalNote, TheoryQuery
from .text import overlap_score

log = logging.getLogger(__name__)

STAGE = "discovery"


class DiscoveryError(RuntimeError):
    pass


@dataclass(frozen=True)
class RetrievalPlan:
    query: TheoryQuery
    search_query: str
    target_size: int = 100
    date_filter: SearchFilter = SearchFilter()

    def __post_init__(self):
        if self.target_size < 1:
            raise ValueError("target_size must be >= 1")


def generation_filter(window: KnowledgeWindow, limit: int) -> SearchFilter:
    """Papers visible to literature-supported generation: everything up to supplement_end."""
    return SearchFilter(after=None, until=window.supplement_end, limit=limit)


def holdout_filter(window: KnowledgeWindow, limit: int) -> SearchFilter:
    return SearchFilter(after=window.supplement_end, until=window.holdout_end, limit=limit)


def reformulate_query(q: TheoryQuery, gateway: Gateway) -> str:
    text = gateway.chat(
        ChatRequest("reformulate_query", {"query": q.text}, stage=STAGE, subject=q.id, max_output_tokens=128)
    ).text.strip()
    text = text.strip('"').strip()
    if not text:
        raise DiscoveryError(f"reformulation of query {q.id} came back empty")
    return text


def rank_backfill_candidates(
    candidates: Sequence[PaperRecord],
    query: str,
    scorer: Callable[[PaperRecord], float] | None = None,
) -> list[tuple[PaperRecord, float]]:
    """Order by relevance, then newer first, then paper_id."""
    if scorer is None:
        scorer = lambda p: overlap_score(query, f"{p.title} {p.abstract}")  # noqa: E731
    scored = [(p, float(scorer(p))) for p in candidates]
    scored.sort(key=lambda ps: (-ps[1], -ps[0].publication_date.toordinal(), ps[0].paper_id))
    return scored


def _mine_references(paper: PaperRecord, gateway: Gateway, subject: str) -> list[str]:
    def parse(obj):
        refs = obj["references"]
        if not isinstance(refs, list):
            raise ValueError("references must be a list")
        return [str(r["title"]).strip() for r in refs if isinstance(r, dict) and r.get("title")]

    return gateway.chat_structured(
        ChatRequest(
            "extract_references",
            {"paper_id": paper.paper_id, "title": paper.title, "full_text": paper.full_text},
            stage=STAGE,
            subject=subject,
        ),
        parse,
    )


def _resolve_reference(title: str, gateway: Gateway, filters: SearchFilter) -> PaperRecord | None:
    hits = gateway.search_papers(title, replace(filters, limit=5))
    want = title.casefold().strip()
    for hit in hits:
        if hit.paper.title.casefold().strip() == want:
            return hit.paper
    return None


def discover_corpus(plan: RetrievalPlan, gateway: Gateway, workers: int = 1) -> Corpus:
    """Direct hits first (provider order), then backfilled references by relevance."""
    subject = plan.query.id
    filters = replace(plan.date_filter, limit=plan.target_size)
    direct: list[PaperRecord] = []
    notes: list[RetrievalNote] = []
    seen: set[str] = set()
    for hit in gateway.search_papers(plan.search_query, filters):
        if hit.paper.paper_id in seen:
            continue
        seen.add(hit.paper.paper_id)
        direct.append(hit.paper)
        notes.append(RetrievalNote(hit.paper.paper_id, "direct", hit.score))
        if len(direct) == plan.target_size:
            break

    texts = parallel_map(lambda p: gateway.fetch_full_text(p.paper_id), direct, workers)
    papers = [replace(p, full_text=t or "") for p, t in zip(direct, texts)]

    backfilled: list[PaperRecord] = []
    if len(papers) < plan.target_size:
        with_text = [p for p in papers if p.has_full_text]
        ref_lists = parallel_map(lambda p: _mine_references(p, gateway, subject), with_text, workers)
        candidates: dict[str, tuple[PaperRecord, str]] = {}
        for parent, titles in zip(with_text, ref_lists):
            for title in titles:
                found = _resolve_reference(title, gateway, filters)
                if found is None or found.paper_id in seen or found.paper_id in candidates:
                    continue
                candidates[found.paper_id] = (found, parent.paper_id)
        ranked = rank_backfill_candidates([c for c, _ in candidates.values()], plan.search_query)
        chosen = ranked[: plan.target_size - len(papers)]
        texts = parallel_map(lambda ps: gateway.fetch_full_text(ps[0].paper_id), chosen, workers)
        for (paper, score), text in zip(chosen, texts):
            backfilled.append(replace(paper, full_text=text or ""))
            notes.append(RetrievalNote(paper.paper_id, "backfill", score, via=candidates[paper.paper_id][1]))

    warnings = []
    if not papers and not backfilled:
        warnings.append("no papers found")
        log.warning("query %s: discovery found no papers", subject)
    missing = [p.paper_id for p in papers + backfilled if not p.has_full_text]
    if missing:
        warnings.append(f"no full text for {len(missing)} paper(s): {', '.join(missing)}")
    return Corpus(
        query_id=plan.query.id,
        papers=tuple(papers + backfilled),
        target_size=plan.target_size,
        retrieval_notes=tuple(notes),
        search_query=plan.search_query,
        warnings=tuple(warnings),
    )
