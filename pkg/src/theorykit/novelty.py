"""Novelty of a law relative to the papers retrieved for its query, per dimension."""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

from .gateway import ChatRequest, ContractViolation, Gateway, parallel_map
from .model import LawRef, PaperRecord, to_data

STAGE = "novelty"
CONSOLIDATE_STAGE = "novelty_consolidate"


class NoveltyDimension(str, Enum):
    PHENOMENON_EFFECT = "phenomenon_effect"
    EXPLANATION = "explanation"
    UNIFICATION = "unification"
    GENERALIZATION_SCOPE_EXPANSION = "generalization_scope_expansion"
    LIMITATION_SCOPE_CONSTRAINT = "limitation_scope_constraint"
    CONCEPTUAL_REFRAMING_ABSTRACTION = "conceptual_reframing_abstraction"
    EMPIRICAL_SYNTHESIS_META_REGULARITY = "empirical_synthesis_meta_regularity"


DIMENSION_DEFINITIONS = {
    NoveltyDimension.PHENOMENON_EFFECT: "A new effect, phenomenon or regularity not previously reported.",
    NoveltyDimension.EXPLANATION: "A new mechanism or causal account for something already observed.",
    NoveltyDimension.UNIFICATION: "Connects previously separate findings under one account.",
    NoveltyDimension.GENERALIZATION_SCOPE_EXPANSION: "Extends a known result to new settings, populations or scales.",
    NoveltyDimension.LIMITATION_SCOPE_CONSTRAINT: "Identifies boundary conditions or failure regimes of a known result.",
    NoveltyDimension.CONCEPTUAL_REFRAMING_ABSTRACTION: "Recasts known results under a new concept or abstraction.",
    NoveltyDimension.EMPIRICAL_SYNTHESIS_META_REGULARITY: "States a regularity visible only when aggregating many studies.",
}

TABLE_LABELS = {
    NoveltyDimension.PHENOMENON_EFFECT: "Phenomenon/Effect",
    NoveltyDimension.EXPLANATION: "Explanation",
    NoveltyDimension.UNIFICATION: "Unification",
    NoveltyDimension.GENERALIZATION_SCOPE_EXPANSION: "Generalization/Scope Expansion",
    NoveltyDimension.LIMITATION_SCOPE_CONSTRAINT: "Limitation/Scope Constraint",
    NoveltyDimension.CONCEPTUAL_REFRAMING_ABSTRACTION: "Conceptual Reframing/Abstraction",
    NoveltyDimension.EMPIRICAL_SYNTHESIS_META_REGULARITY: "Meta-Analysis/Empirical Synthesis",
}


class Degree(str, Enum):
    """Listed most to least novel."""

    GENUINELY_NEW = "genuinely_new"
    DERIVABLE_UNSTATED = "derivable_unstated"
    EXPLICIT_PERIPHERAL = "explicit_peripheral"
    EXPLICIT_ESTABLISHED = "explicit_established"

    @property
    def ordinal(self) -> int:
        """Higher is more novel: genuinely_new=3 ... explicit_established=0."""
        return len(Degree) - 1 - list(Degree).index(self)


DEFAULT_NOVEL_DEGREES = frozenset({Degree.GENUINELY_NEW, Degree.DERIVABLE_UNSTATED})


@dataclass(frozen=True)
class PerPaperNovelty:
    law_id: str
    paper_id: str
    dimension: NoveltyDimension
    degree: Degree
    rationale: str = ""
    audit: str = ""

    def __post_init__(self):
        object.__setattr__(self, "dimension", NoveltyDimension(self.dimension))
        object.__setattr__(self, "degree", Degree(self.degree))


@dataclass(frozen=True)
class ConsolidatedNovelty:
    law_id: str
    dimension: NoveltyDimension
    what_is_known: str
    what_introduced: str
    what_novel: str
    degree: Degree
    novel_flag: bool
    n_papers: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dimension", NoveltyDimension(self.dimension))
        object.__setattr__(self, "degree", Degree(self.degree))


def _law_text(ref: LawRef) -> str:
    data = to_data(ref.law)
    data.pop("self_novelty", None)
    data.pop("evidence", None)
    return json.dumps(data, sort_keys=True, ensure_ascii=False)


def _parse_degree(value: Any) -> Degree:
    try:
        return Degree(str(value).strip().lower())
    except ValueError:
        raise ContractViolation(f"unknown novelty degree {value!r}") from None


def judge_paper_novelty(
    ref: LawRef, paper: PaperRecord, dimension: NoveltyDimension | str, gateway: Gateway
) -> PerPaperNovelty:
    """One assessment of (law, paper, dimension); a broken contract counts as explicit_established."""
    dimension = NoveltyDimension(dimension)
    base = PerPaperNovelty(ref.law_id, paper.paper_id, dimension, Degree.EXPLICIT_ESTABLISHED)
    try:
        return gateway.chat_structured(
            ChatRequest(
                "novelty_per_paper",
                {
                    "dimension": dimension.value,
                    "dimension_definition": DIMENSION_DEFINITIONS[dimension],
                    "law": _law_text(ref),
                    "paper_id": paper.paper_id,
                    "title": paper.title,
                    "full_text": paper.full_text or paper.abstract or "(no text available)",
                },
                max_output_tokens=1024,
                stage=STAGE,
                subject=ref.law_id,
            ),
            lambda obj: replace(base, degree=_parse_degree(obj["degree"]), rationale=str(obj.get("rationale", ""))),
        )
    except ContractViolation:
        return replace(base, audit="contract_violation")


def consolidation_order(assessments: Iterable[PerPaperNovelty]) -> list[PerPaperNovelty]:
    """Most novel first; ties broken by paper_id."""
    return sorted(assessments, key=lambda a: (-a.degree.ordinal, a.paper_id))


def consolidate(
    ref: LawRef,
    dimension: NoveltyDimension | str,
    assessments: Sequence[PerPaperNovelty],
    gateway: Gateway,
    novel_degrees: frozenset[Degree] = DEFAULT_NOVEL_DEGREES,
) -> ConsolidatedNovelty:
    """Merge the per-paper assessments of one dimension; ContractViolation propagates."""
    dimension = NoveltyDimension(dimension)
    for a in assessments:
        if a.law_id != ref.law_id or a.dimension is not dimension:
            raise ValueError(f"assessment {a.law_id}/{a.dimension.value} passed to {ref.law_id}/{dimension.value}")
    ordered = consolidation_order(assessments)
    listing = "\n".join(
        json.dumps({"paper_id": a.paper_id, "degree": a.degree.value, "rationale": a.rationale}, ensure_ascii=False)
        for a in ordered
    )

    def parse(obj: dict[str, Any]) -> ConsolidatedNovelty:
        degree = _parse_degree(obj["degree"])
        return ConsolidatedNovelty(
            ref.law_id,
            dimension,
            str(obj.get("what_is_known", "")),
            str(obj.get("what_introduced", "")),
            str(obj.get("what_novel", "")),
            degree,
            degree in novel_degrees,
            len(ordered),
        )

    return gateway.chat_structured(
        ChatRequest(
            "novelty_consolidate",
            {
                "dimension": dimension.value,
                "dimension_definition": DIMENSION_DEFINITIONS[dimension],
                "law": _law_text(ref),
                "assessments": listing or "(no reference papers)",
            },
            max_output_tokens=4096,
            stage=CONSOLIDATE_STAGE,
            subject=ref.law_id,
        ),
        parse,
    )


@dataclass(frozen=True)
class LawNovelty:
    law_id: str
    assessments: tuple[PerPaperNovelty, ...]
    consolidations: tuple[ConsolidatedNovelty, ...]


def evaluate_law_novelty(
    ref: LawRef,
    corpus: Sequence[PaperRecord],
    gateway: Gateway,
    *,
    workers: int = 1,
    novel_degrees: frozenset[Degree] = DEFAULT_NOVEL_DEGREES,
) -> LawNovelty:
    """7 x |corpus| per-paper calls followed by 7 consolidation calls."""
    tasks = [(dim, paper) for dim in NoveltyDimension for paper in corpus]
    assessments = parallel_map(lambda t: judge_paper_novelty(ref, t[1], t[0], gateway), tasks, workers)
    by_dim = {dim: [a for a in assessments if a.dimension is dim] for dim in NoveltyDimension}
    consolidations = parallel_map(
        lambda dim: consolidate(ref, dim, by_dim[dim], gateway, novel_degrees), list(NoveltyDimension), workers
    )
    return LawNovelty(ref.law_id, tuple(assessments), tuple(consolidations))


def sample_laws(law_ids: Iterable[str], n: int, seed: int) -> list[str]:
    """Seeded uniform sample of at most n ids, returned sorted."""
    ids = sorted(set(law_ids))
    if len(ids) <= n:
        return ids
    return sorted(random.Random(seed).sample(ids, n))


@dataclass(frozen=True)
class NoveltyTable:
    proportions: dict[str, dict[str, float | None]]  # condition slug -> dimension -> proportion
    laws_evaluated: dict[str, int]
    avg_papers_per_evaluation: dict[str, float | None]
    total_papers: dict[str, int]


def novelty_proportion_table(
    samples: Mapping[str, Sequence[str]],
    consolidations: Iterable[ConsolidatedNovelty],
) -> NoveltyTable:
    """Proportion of sampled laws flagged novel, per (condition, dimension)."""
    cons: dict[tuple[str, NoveltyDimension], ConsolidatedNovelty] = {}
    for c in consolidations:
        cons[(c.law_id, c.dimension)] = c
    proportions: dict[str, dict[str, float | None]] = {}
    avg: dict[str, float | None] = {}
    total: dict[str, int] = {}
    for slug, law_ids in samples.items():
        row = {}
        for dim in NoveltyDimension:
            missing = [l for l in law_ids if (l, dim) not in cons]
            if missing:
                raise ValueError(f"laws {missing} lack a {dim.value} consolidation")
            flags = sum(cons[(l, dim)].novel_flag for l in law_ids)
            row[dim.value] = flags / len(law_ids) if law_ids else None
        proportions[slug] = row
        papers = [cons[(l, NoveltyDimension.PHENOMENON_EFFECT)].n_papers for l in law_ids]
        total[slug] = sum(papers)
        avg[slug] = sum(papers) / len(papers) if papers else None
    return NoveltyTable(proportions, {k: len(v) for k, v in samples.items()}, avg, total)
