"""Theory generation from an evidence bundle, self-reflection and self-novelty filtering."""
from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, replace
from typing import Any, Sequence

from .gateway import ChatRequest, ContractViolation, Gateway, GatewayFailure
from .model import (
    ExtractionRecord,
    GenerationCondition,
    Knowledge,
    Law,
    LawRef,
    Objective,
    RecordError,
    SelfNoveltyClass,
    Theory,
    TheoryProvenance,
    TheoryQuery,
    canonical_json,
    digest,
    from_data,
    iter_laws,
    to_data,
)

log = logging.getLogger(__name__)

STAGE = "synthesis"
REFLECT_STAGE = "reflection"

FILTERED_CLASSES = frozenset({SelfNoveltyClass.CLOSELY_RELATED, SelfNoveltyClass.EXISTING})

OBJECTIVE_INSTRUCTIONS = {
    Objective.ACCURACY: (
        "Objective: accuracy. Propose laws that are well supported and very likely to hold; "
        "prefer claims the evidence bears out over speculative ones."
    ),
    Objective.NOVELTY: (
        "Objective: novelty. Propose laws that go beyond what is already known, making specific, "
        "high-information predictions that existing work does not state."
    ),
}

KNOWLEDGE_MODES = {
    Knowledge.LITERATURE: "literature-supported: ground every law in the evidence records and cite their uuids.",
    Knowledge.PARAMETRIC: "parametric: use only your own knowledge; no evidence records are provided.",
}


def estimate_tokens(record: ExtractionRecord) -> int:
    return math.ceil(len(canonical_json(record)) / 4)


@dataclass(frozen=True)
class EvidenceBundle:
    records: tuple[ExtractionRecord, ...]
    token_estimate: int
    subsample_seed: int | None
    digest: str

    @property
    def uuids(self) -> set[str]:
        return {r.uuid for r in self.records}

    def __len__(self) -> int:
        return len(self.records)


def _bundle(records: Sequence[ExtractionRecord], seed: int | None) -> EvidenceBundle:
    records = tuple(records)
    return EvidenceBundle(
        records,
        sum(estimate_tokens(r) for r in records),
        seed,
        digest({"uuids": [r.uuid for r in records], "records": [digest(r) for r in records]}),
    )


def assemble_evidence(records: Sequence[ExtractionRecord], token_budget: int, seed: int) -> EvidenceBundle:
    """All records if they fit the budget, else a seeded uniform subset in original order.

    The subset visits records in a seeded random permutation and keeps each one that
    still fits, so every record has the same chance of selection.
    """
    if token_budget <= 0:
        raise ValueError("token_budget must be positive")
    records = list(records)
    sizes = [estimate_tokens(r) for r in records]
    if sum(sizes) <= token_budget:
        return _bundle(records, None)
    order = list(range(len(records)))
    random.Random(seed).shuffle(order)
    keep, used = set(), 0
    for i in order:
        if used + sizes[i] <= token_budget:
            keep.add(i)
            used += sizes[i]
    return _bundle([r for i, r in enumerate(records) if i in keep], seed)


def render_evidence(bundle: EvidenceBundle) -> str:
    lines = []
    for r in bundle.records:
        lines.append(
            canonical_json(
                {
                    "uuid": r.uuid,
                    "paper_id": r.paper_id,
                    "source_info": r.header.source_info,
                    "name": r.header.name_short,
                    "description": r.header.brief_description,
                    "mention_or_use": r.header.mention_or_use,
                    "slots": {k: v for k, v in r.slot_values.items() if v is not None},
                }
            )
        )
    return "\n".join(lines)


def _law_payload(law: Law) -> dict[str, Any]:
    return to_data(law)


def theory_payload(theory: Theory) -> dict[str, Any]:
    return {"name": theory.name, "description": theory.description, "laws": [_law_payload(l) for l in theory.laws]}


def _parse_theory(obj: dict[str, Any], allowed_uuids: set[str]) -> tuple[str, str, tuple[Law, ...]]:
    name = str(obj["name"]).strip()
    description = str(obj.get("description", "")).strip()
    laws = tuple(from_data(Law, l) for l in obj["laws"])
    for law in laws:
        stray = [u for u in law.evidence_uuids if u not in allowed_uuids]
        if stray:
            raise ContractViolation(f"law {law.name!r} cites uuids not in the evidence bundle: {stray}")
    return name, description, laws


def synthesize_theories(
    q: TheoryQuery,
    bundle: EvidenceBundle,
    condition: GenerationCondition,
    gateway: Gateway,
    *,
    n_theories: int = 8,
    seed: int = 0,
) -> list[Theory]:
    if condition.knowledge is Knowledge.LITERATURE and not bundle.records:
        raise ValueError("literature-supported generation needs a non-empty evidence bundle")
    if condition.knowledge is Knowledge.PARAMETRIC and bundle.records:
        raise ValueError("parametric generation must use an empty evidence bundle")

    allowed = bundle.uuids

    def parse(obj: dict[str, Any]):
        raw = obj["theories"]
        if not isinstance(raw, list) or not raw:
            raise ContractViolation("no theories returned")
        return [_parse_theory(t, allowed) for t in raw]

    parsed = gateway.chat_structured(
        ChatRequest(
            "generate_theories",
            {
                "query": q.text,
                "evidence": render_evidence(bundle),
                "n_theories": str(n_theories),
                "objective_instructions": OBJECTIVE_INSTRUCTIONS[condition.objective],
                "knowledge_mode": KNOWLEDGE_MODES[condition.knowledge],
            },
            temperature=condition.temperature,
            max_output_tokens=16_000,
            stage=STAGE,
            subject=f"{q.id}/{condition.slug}",
        ),
        parse,
    )
    provenance = TheoryProvenance(q.id, bundle.digest, seed)
    return [
        Theory(f"{q.id}.{condition.slug}.t{i}", name, description, laws, condition, provenance)
        for i, (name, description, laws) in enumerate(parsed)
    ]


def reflect(theory: Theory, bundle: EvidenceBundle, gateway: Gateway, query: TheoryQuery) -> Theory:
    """One self-reflection pass; the original is kept when the revision is unusable."""
    allowed = bundle.uuids
    try:
        name, description, laws = gateway.chat_structured(
            ChatRequest(
                "reflect_theory",
                {
                    "query": query.text,
                    "theory": json.dumps(theory_payload(theory), sort_keys=True, ensure_ascii=False),
                    "evidence_uuids": ", ".join(sorted(allowed)) or "(none)",
                },
                temperature=theory.condition.temperature,
                max_output_tokens=8_000,
                stage=REFLECT_STAGE,
                subject=theory.id,
            ),
            lambda obj: _parse_theory(obj, allowed),
        )
    except ContractViolation as exc:
        log.warning("reflection of %s rejected: %s", theory.id, exc)
        return theory
    except GatewayFailure as exc:
        log.warning("reflection of %s failed: %s", theory.id, exc)
        return theory
    if not laws:
        log.warning("reflection of %s dropped every law; keeping original", theory.id)
        return theory
    if len(laws) != len(theory.laws):
        log.info("reflection changed law count of %s: %d -> %d", theory.id, len(theory.laws), len(laws))
    try:
        return replace(
            theory,
            name=name or theory.name,
            description=description or theory.description,
            laws=laws,
            provenance=replace(theory.provenance, reflected=True),
        )
    except RecordError as exc:
        log.warning("reflection of %s produced an invalid theory: %s", theory.id, exc)
        return theory


@dataclass(frozen=True)
class FilterResult:
    theories: tuple[Theory, ...]
    kept: tuple[LawRef, ...]
    filtered: tuple[LawRef, ...]

    @property
    def filtered_fraction(self) -> float:
        total = len(self.kept) + len(self.filtered)
        return len(self.filtered) / total if total else 0.0


def filter_laws_by_self_novelty(theories: Sequence[Theory]) -> FilterResult:
    """Drop laws self-rated closely-related-to-existing or existing.

    Surviving laws keep their original law ids; theories left without laws are dropped.
    """
    kept, filtered = [], []
    out_theories = []
    for theory in theories:
        refs = iter_laws([theory])
        keep_refs = [r for r in refs if r.law.self_novelty.classification not in FILTERED_CLASSES]
        filtered.extend(r for r in refs if r.law.self_novelty.classification in FILTERED_CLASSES)
        kept.extend(keep_refs)
        if keep_refs:
            out_theories.append(theory)
    return FilterResult(tuple(out_theories), tuple(kept), tuple(filtered))
