"""Query-tailored extraction schemas and per-paper evidence records."""
from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

from .gateway import ChatRequest, Gateway, parallel_map
from .model import (
    Corpus,
    ExtractionHeader,
    ExtractionRecord,
    ExtractionSchema,
    MentionOrUse,
    PaperRecord,
    RecordError,
    SchemaSlot,
    TheoryQuery,
    canonical_json,
)

log = logging.getLogger(__name__)

SCHEMA_STAGE = "extraction"
STAGE = "extraction"

HEADER_FIELDS = ("name_short", "name_full", "brief_description", "citation_title", "mention_or_use")


def generate_schema(q: TheoryQuery, gateway: Gateway) -> ExtractionSchema:
    model_id = gateway.model_for(SCHEMA_STAGE)

    def parse(obj: dict[str, Any]) -> ExtractionSchema:
        slots = tuple(SchemaSlot(str(s["name"]).strip(), str(s["description"]).strip()) for s in obj["slots"])
        if not str(obj.get("extraction_query", "")).strip():
            raise RecordError("schema has no extraction_query")
        return ExtractionSchema(
            id=f"extraction-schema-{q.id}",
            extraction_query=obj["extraction_query"].strip(),
            slots=slots,
            generator_model_id=model_id,
            query_id=q.id,
        )

    return gateway.chat_structured(
        ChatRequest("generate_schema", {"query": q.text}, stage=SCHEMA_STAGE, subject=q.id), parse
    )


@dataclass(frozen=True)
class Mention:
    """One extracted mention before it has a record number."""

    header: ExtractionHeader
    slot_values: dict[str, str | None]
    relevant: bool


def source_info(paper: PaperRecord) -> str:
    authors = paper.authors[0] + (" et al." if len(paper.authors) > 1 else "") if paper.authors else "Unknown"
    return f"{authors} ({paper.publication_date.year}). {paper.title}; (Publication Date: {paper.publication_date:%Y-%m})"


def _parse_mentions(obj: dict[str, Any], schema: ExtractionSchema, paper: PaperRecord) -> list[Mention]:
    raw = obj["mentions"]
    if not isinstance(raw, list):
        raise RecordError("mentions must be a list")
    allowed = set(schema.slot_names)
    out = []
    for m in raw:
        values = m.get("slot_values") or {}
        unknown = set(values) - allowed
        if unknown:
            raise RecordError(f"unknown slots {sorted(unknown)}")
        slot_values = {name: (None if values.get(name) is None else str(values[name])) for name in schema.slot_names}
        header = ExtractionHeader(
            source_info=source_info(paper),
            name_short=str(m.get("name_short") or ""),
            name_full=str(m.get("name_full") or m.get("name_short") or ""),
            brief_description=str(m.get("brief_description") or ""),
            citation_title=str(m.get("citation_title") or paper.title),
            mention_or_use=MentionOrUse(m.get("mention_or_use", "mention")),
        )
        out.append(Mention(header, slot_values, bool(m.get("relevant", True))))
    return out


def chunk_text(text: str, max_chars: int) -> list[str]:
    """Split on paragraph boundaries into chunks of at most ``max_chars`` (hard-split longer paragraphs)."""
    if len(text) <= max_chars:
        return [text]
    chunks: list[str] = []
    current = ""
    for para in text.split("\n\n"):
        while len(para) > max_chars:
            if current:
                chunks.append(current)
                current = ""
            chunks.append(para[:max_chars])
            para = para[max_chars:]
        candidate = f"{current}\n\n{para}" if current else para
        if len(candidate) > max_chars:
            chunks.append(current)
            current = para
        else:
            current = candidate
    if current:
        chunks.append(current)
    return chunks


def extract_mentions(
    paper: PaperRecord,
    schema: ExtractionSchema,
    gateway: Gateway,
    max_chars: int = 60_000,
) -> list[Mention]:
    """Model pass over one paper; empty full text yields no mentions."""
    if not paper.has_full_text:
        log.info("paper %s has no full text; skipping extraction", paper.paper_id)
        return []
    schema_json = canonical_json({"extraction_query": schema.extraction_query, "slots": schema.slots})
    chunks = chunk_text(paper.full_text, max_chars)

    def run(text: str, idx: int | None):
        variables = {
            "paper_id": paper.paper_id,
            "title": paper.title,
            "source_info": source_info(paper),
            "schema": schema_json,
            "full_text": text if idx is None else f"[chunk {idx + 1} of {len(chunks)}]\n{text}",
        }
        return gateway.chat_structured(
            ChatRequest("extract_evidence", variables, stage=STAGE, subject=paper.paper_id),
            lambda obj: (obj, _parse_mentions(obj, schema, paper)),
        )

    if len(chunks) == 1:
        return run(chunks[0], None)[1]
    partials = [run(c, i)[0] for i, c in enumerate(chunks)]
    return gateway.chat_structured(
        ChatRequest(
            "merge_extractions",
            {"paper_id": paper.paper_id, "schema": schema_json, "partials": json.dumps(partials, sort_keys=True)},
            stage=STAGE,
            subject=paper.paper_id,
        ),
        lambda obj: _parse_mentions(obj, schema, paper),
    )


def number_records(
    paper: PaperRecord, schema: ExtractionSchema, mentions: Sequence[Mention], record_number: int
) -> list[ExtractionRecord]:
    return [
        ExtractionRecord(
            id=f"extraction-result-{record_number}",
            uuid=f"e{record_number}.{k}",
            paper_id=paper.paper_id,
            schema_id=schema.id,
            header=m.header,
            slot_values=m.slot_values,
            relevant=m.relevant,
        )
        for k, m in enumerate(mentions)
    ]


def extract_evidence(
    paper: PaperRecord, schema: ExtractionSchema, gateway: Gateway, record_number: int, max_chars: int = 60_000
) -> list[ExtractionRecord]:
    return number_records(paper, schema, extract_mentions(paper, schema, gateway, max_chars), record_number)


class RecordCounter:
    """Run-global allocator for extraction record numbers."""

    def __init__(self, next_number: int = 1):
        self.next_number = next_number
        self._lock = threading.Lock()

    def allocate(self) -> int:
        with self._lock:
            n = self.next_number
            self.next_number += 1
            return n


def extract_corpus(
    corpus: Corpus,
    schema: ExtractionSchema,
    gateway: Gateway,
    counter: RecordCounter,
    workers: int = 1,
    max_chars: int = 60_000,
) -> list[ExtractionRecord]:
    """Extract all papers concurrently; numbers are assigned afterwards in corpus order."""
    per_paper = parallel_map(lambda p: extract_mentions(p, schema, gateway, max_chars), corpus.papers, workers)
    records: list[ExtractionRecord] = []
    for paper, mentions in zip(corpus.papers, per_paper):
        if mentions:
            records.extend(number_records(paper, schema, mentions, counter.allocate()))
    return records


def synthesis_inputs(records: Iterable[ExtractionRecord]) -> list[ExtractionRecord]:
    """Records that reach synthesis: relevant ones only."""
    return [r for r in records if r.relevant]
