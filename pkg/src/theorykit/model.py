"""Shared record types, invariants and canonical serialization.

Every record is a frozen dataclass. Records serialize to JSON with sorted
keys; unknown keys found while loading are kept in ``extra`` and written
back out unchanged, so files produced by newer prompt versions survive a
round trip through older code.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import re
import types
import typing
from dataclasses import dataclass, field
from datetime import date
from decimal import Decimal
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence, TypeVar, Union

T = TypeVar("T")

EVIDENCE_UUID_RE = re.compile(r"^e(\d+)\.(\d+)$")


class RecordError(ValueError):
    """A record violates its type contract."""


class RecordParseError(RecordError):
    """Serialized text could not be parsed; ``offset`` is the character position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


# --- enums -----------------------------------------------------------------


class QueryKind(str, Enum):
    GENERAL = "general"
    SPECIFIC = "specific"


class LawType(str, Enum):
    QUALITATIVE = "qualitative"
    QUANTITATIVE = "quantitative"


class SelfNoveltyClass(str, Enum):
    """Self-assessed novelty labels, most novel first."""

    NEW = "new"
    SOMEWHAT_RELATED = "somewhat-related-to-existing"
    CLOSELY_RELATED = "closely-related-to-existing"
    EXISTING = "existing"

    @property
    def rank(self) -> int:
        return list(SelfNoveltyClass).index(self)


class Knowledge(str, Enum):
    PARAMETRIC = "parametric"
    LITERATURE = "literature"


class Objective(str, Enum):
    ACCURACY = "accuracy"
    NOVELTY = "novelty"


class MentionOrUse(str, Enum):
    MENTION = "mention"
    USE = "use"


# --- helpers -----------------------------------------------------------------


def parse_date(value: Any) -> date:
    """Parse ISO dates; month-only inputs (``2025-09``, ``2025/9``) map to the 1st."""
    if isinstance(value, date):
        return value
    if not isinstance(value, str):
        raise RecordError(f"expected a date string, got {type(value).__name__}")
    text = value.strip()
    m = re.fullmatch(r"(\d{4})[-/](\d{1,2})(?:[-/](\d{1,2}))?", text)
    if not m:
        raise RecordError(f"unparseable date: {value!r}")
    year, month, day = int(m.group(1)), int(m.group(2)), int(m.group(3) or 1)
    try:
        return date(year, month, day)
    except ValueError as exc:
        raise RecordError(f"invalid date {value!r}: {exc}") from None


def is_evidence_uuid(value: str) -> bool:
    return isinstance(value, str) and EVIDENCE_UUID_RE.fullmatch(value) is not None


def _coerce_enum(obj: Any, name: str, enum_cls: type[Enum]) -> None:
    value = getattr(obj, name)
    if isinstance(value, enum_cls):
        return
    try:
        object.__setattr__(obj, name, enum_cls(value))
    except ValueError:
        allowed = ", ".join(e.value for e in enum_cls)
        raise RecordError(f"{type(obj).__name__}.{name}: {value!r} not in {{{allowed}}}") from None


def _freeze_seq(obj: Any, name: str) -> None:
    value = getattr(obj, name)
    if isinstance(value, list):
        object.__setattr__(obj, name, tuple(value))


def _require_text(obj: Any, *names: str) -> None:
    for name in names:
        value = getattr(obj, name)
        if not isinstance(value, str) or not value.strip():
            raise RecordError(f"{type(obj).__name__}.{name} must be non-empty text")


# --- domain types ------------------------------------------------------------


@dataclass(frozen=True)
class TheoryQuery:
    id: str
    text: str
    kind: QueryKind = QueryKind.GENERAL
    source_paper_id: str | None = None
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        _require_text(self, "id", "text")
        _coerce_enum(self, "kind", QueryKind)


@dataclass(frozen=True)
class PaperRecord:
    paper_id: str
    title: str
    publication_date: date
    authors: tuple[str, ...] = ()
    venue: str = ""
    full_text: str = ""
    source_url: str | None = None
    abstract: str = ""
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        _require_text(self, "paper_id", "title")
        object.__setattr__(self, "publication_date", parse_date(self.publication_date))
        _freeze_seq(self, "authors")

    @property
    def has_full_text(self) -> bool:
        return bool(self.full_text.strip())

    def stub(self) -> "PaperRecord":
        """Copy without full text, as returned by a search provider."""
        return dataclasses.replace(self, full_text="")


@dataclass(frozen=True)
class RetrievalNote:
    paper_id: str
    source: str  # "direct" or "backfill"
    relevance: float
    via: str | None = None

    def __post_init__(self):
        if self.source not in ("direct", "backfill"):
            raise RecordError(f"RetrievalNote.source must be direct or backfill, got {self.source!r}")


@dataclass(frozen=True)
class Corpus:
    query_id: str
    papers: tuple[PaperRecord, ...]
    target_size: int = 100
    retrieval_notes: tuple[RetrievalNote, ...] = ()
    search_query: str = ""
    warnings: tuple[str, ...] = ()
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("papers", "retrieval_notes", "warnings"):
            _freeze_seq(self, name)
        if self.target_size < 1:
            raise RecordError("Corpus.target_size must be positive")
        if len(self.papers) > self.target_size:
            raise RecordError(f"corpus holds {len(self.papers)} papers, target is {self.target_size}")
        ids = [p.paper_id for p in self.papers]
        if len(set(ids)) != len(ids):
            raise RecordError("duplicate paper_id in corpus")

    @property
    def paper_ids(self) -> list[str]:
        return [p.paper_id for p in self.papers]


@dataclass(frozen=True)
class KnowledgeWindow:
    model_cutoff: date
    supplement_end: date
    holdout_end: date

    def __post_init__(self):
        for name in ("model_cutoff", "supplement_end", "holdout_end"):
            object.__setattr__(self, name, parse_date(getattr(self, name)))
        if not (self.model_cutoff < self.supplement_end < self.holdout_end):
            raise RecordError("knowledge window must satisfy model_cutoff < supplement_end < holdout_end")

    def in_generation_period(self, d: date) -> bool:
        return d <= self.supplement_end

    def in_holdout(self, d: date) -> bool:
        return self.supplement_end < d <= self.holdout_end


@dataclass(frozen=True)
class SelfNoveltyAssessment:
    what_exists: str
    what_is_novel: str
    classification_explanation: str
    classification: SelfNoveltyClass
    llm_generated_refs: tuple[str, ...] = ()

    def __post_init__(self):
        _coerce_enum(self, "classification", SelfNoveltyClass)
        _freeze_seq(self, "llm_generated_refs")


@dataclass(frozen=True)
class EvidenceItem:
    description: str
    uuids: tuple[str, ...] = ()

    def __post_init__(self):
        _freeze_seq(self, "uuids")
        for u in self.uuids:
            if not is_evidence_uuid(u):
                raise RecordError(f"malformed evidence uuid {u!r} (expected e<record>.<mention>)")


@dataclass(frozen=True)
class Law:
    name: str
    statement: str
    law_type: LawType
    scope: str
    self_novelty: SelfNoveltyAssessment
    special_cases: tuple[str, ...] = ()
    evidence: tuple[EvidenceItem, ...] = ()
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        _require_text(self, "name", "statement")
        _coerce_enum(self, "law_type", LawType)
        _freeze_seq(self, "special_cases")
        _freeze_seq(self, "evidence")

    @property
    def evidence_uuids(self) -> list[str]:
        return [u for item in self.evidence for u in item.uuids]


@dataclass(frozen=True)
class GenerationCondition:
    knowledge: Knowledge
    objective: Objective

    def __post_init__(self):
        _coerce_enum(self, "knowledge", Knowledge)
        _coerce_enum(self, "objective", Objective)

    @property
    def slug(self) -> str:
        return f"{self.knowledge.value}-{self.objective.value}"

    @property
    def temperature(self) -> float:
        return 0.0 if self.objective is Objective.ACCURACY else 1.0

    @classmethod
    def from_slug(cls, slug: str) -> "GenerationCondition":
        knowledge, _, objective = slug.partition("-")
        return cls(Knowledge(knowledge), Objective(objective))


ALL_CONDITIONS: tuple[GenerationCondition, ...] = tuple(
    GenerationCondition(k, o) for o in Objective for k in (Knowledge.PARAMETRIC, Knowledge.LITERATURE)
)


@dataclass(frozen=True)
class TheoryProvenance:
    query_id: str
    bundle_digest: str
    generation_seed: int
    reflected: bool = False


@dataclass(frozen=True)
class Theory:
    id: str
    name: str
    description: str
    laws: tuple[Law, ...]
    condition: GenerationCondition
    provenance: TheoryProvenance
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        _require_text(self, "id", "name")
        _freeze_seq(self, "laws")
        if not self.laws:
            raise RecordError(f"theory {self.id} has no laws")

    def law_id(self, index: int) -> str:
        return f"{self.id}.l{index}"


@dataclass(frozen=True)
class LawRef:
    """A law addressed individually, with the context evaluation needs."""

    law_id: str
    law: Law
    theory_id: str
    theory_name: str
    theory_description: str
    condition: GenerationCondition
    query_id: str


def iter_laws(theories: Iterable[Theory]) -> list[LawRef]:
    return [
        LawRef(t.law_id(i), law, t.id, t.name, t.description, t.condition, t.provenance.query_id)
        for t in theories
        for i, law in enumerate(t.laws)
    ]


@dataclass(frozen=True)
class SchemaSlot:
    name: str
    description: str


SLOT_NAME_RE = re.compile(r"^[a-z][a-z0-9]*(?:_[a-z0-9]+)*$")


@dataclass(frozen=True)
class ExtractionSchema:
    id: str
    extraction_query: str
    slots: tuple[SchemaSlot, ...]
    generator_model_id: str = ""
    query_id: str = ""
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        _freeze_seq(self, "slots")
        names = [s.name for s in self.slots]
        if len(names) < 3:
            raise RecordError("extraction schema needs at least 3 slots")
        if len(set(names)) != len(names):
            raise RecordError(f"duplicate slot names in schema: {names}")
        bad = [n for n in names if not SLOT_NAME_RE.fullmatch(n)]
        if bad:
            raise RecordError(f"slot names must be lowercase_underscore identifiers: {bad}")

    @property
    def slot_names(self) -> list[str]:
        return [s.name for s in self.slots]


@dataclass(frozen=True)
class ExtractionHeader:
    source_info: str
    name_short: str
    name_full: str
    brief_description: str
    citation_title: str
    mention_or_use: MentionOrUse

    def __post_init__(self):
        _coerce_enum(self, "mention_or_use", MentionOrUse)


@dataclass(frozen=True)
class ExtractionRecord:
    id: str
    uuid: str
    paper_id: str
    schema_id: str
    header: ExtractionHeader
    slot_values: Mapping[str, str | None]
    relevant: bool = True
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        m = EVIDENCE_UUID_RE.fullmatch(self.uuid or "")
        if not m:
            raise RecordError(f"malformed evidence uuid {self.uuid!r}")
        if self.id != f"extraction-result-{m.group(1)}":
            raise RecordError(f"record id {self.id!r} does not match uuid {self.uuid!r}")

    @property
    def record_number(self) -> int:
        return int(EVIDENCE_UUID_RE.fullmatch(self.uuid).group(1))

    @property
    def mention_index(self) -> int:
        return int(EVIDENCE_UUID_RE.fullmatch(self.uuid).group(2))

    def check_schema(self, schema: ExtractionSchema) -> None:
        unknown = set(self.slot_values) - set(schema.slot_names)
        if unknown:
            raise RecordError(f"record {self.uuid} has slots not in schema {schema.id}: {sorted(unknown)}")


@dataclass(frozen=True)
class RunManifest:
    run_id: str
    random_seed: int
    models: Mapping[str, str]
    knowledge_window: KnowledgeWindow
    config_digest: str
    conditions: tuple[str, ...] = ()
    temperatures: Mapping[str, float] = field(default_factory=dict)
    query_ids: tuple[str, ...] = ()
    mock: bool = False
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        _freeze_seq(self, "conditions")
        _freeze_seq(self, "query_ids")


# --- evidence validation -------------------------------------------------------


@dataclass(frozen=True)
class LinkViolation:
    kind: str  # "dangling", "ambiguous" or "malformed"
    uuid: str
    law_name: str

    def __str__(self) -> str:
        return f"{self.kind} {self.uuid}"


def validate_evidence_links(theory: Theory, records: Iterable[ExtractionRecord]) -> list[LinkViolation]:
    """Report every evidence uuid that does not resolve to exactly one record."""
    counts: dict[str, int] = {}
    for rec in records:
        counts[rec.uuid] = counts.get(rec.uuid, 0) + 1
    out = []
    for law in theory.laws:
        for uuid in law.evidence_uuids:
            if not is_evidence_uuid(uuid):
                out.append(LinkViolation("malformed", uuid, law.name))
            elif counts.get(uuid, 0) == 0:
                out.append(LinkViolation("dangling", uuid, law.name))
            elif counts[uuid] > 1:
                out.append(LinkViolation("ambiguous", uuid, law.name))
    return out


# --- serialization -------------------------------------------------------------


def to_data(obj: Any) -> Any:
    """Convert a record (or nested value) into plain JSON-compatible data."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        out: dict[str, Any] = {}
        for f in dataclasses.fields(obj):
            value = getattr(obj, f.name)
            if f.name == "extra":
                continue
            out[f.name] = to_data(value)
        extra = getattr(obj, "extra", None)
        if extra:
            for k, v in extra.items():
                out.setdefault(k, v)
        return out
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, date):
        return obj.isoformat()
    if isinstance(obj, Decimal):
        return str(obj)
    if isinstance(obj, (list, tuple)):
        return [to_data(v) for v in obj]
    if isinstance(obj, Mapping):
        return {str(k): to_data(v) for k, v in obj.items()}
    return obj


_HINTS: dict[type, dict[str, Any]] = {}


def _hints(cls: type) -> dict[str, Any]:
    if cls not in _HINTS:
        _HINTS[cls] = typing.get_type_hints(cls)
    return _HINTS[cls]


def _convert(tp: Any, value: Any, path: str) -> Any:
    if tp is Any:
        return value
    origin = typing.get_origin(tp)
    if origin in (Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None and type(None) in args:
            return None
        errors = []
        for arg in args:
            if arg is type(None):
                continue
            try:
                return _convert(arg, value, path)
            except RecordError as exc:
                errors.append(str(exc))
        raise RecordError(f"{path}: no union member accepts value ({'; '.join(errors)})")
    if origin in (tuple, list, Sequence, typing.Sequence) or tp in (tuple, list):
        if not isinstance(value, list):
            raise RecordError(f"{path}: expected a list")
        args = typing.get_args(tp)
        inner = args[0] if args else Any
        return tuple(_convert(inner, v, f"{path}[{i}]") for i, v in enumerate(value))
    if origin in (dict, Mapping, typing.Mapping) or tp in (dict,):
        if not isinstance(value, dict):
            raise RecordError(f"{path}: expected an object")
        args = typing.get_args(tp)
        inner = args[1] if len(args) == 2 else Any
        return {str(k): _convert(inner, v, f"{path}.{k}") for k, v in value.items()}
    if isinstance(tp, type):
        if dataclasses.is_dataclass(tp):
            return from_data(tp, value, path)
        if issubclass(tp, Enum):
            try:
                return tp(value)
            except ValueError:
                raise RecordError(f"{path}: {value!r} not a valid {tp.__name__}") from None
        if tp is date:
            try:
                return parse_date(value)
            except RecordError as exc:
                raise RecordError(f"{path}: {exc}") from None
        if tp is Decimal:
            return Decimal(str(value))
        if tp is bool:
            if not isinstance(value, bool):
                raise RecordError(f"{path}: expected a boolean")
            return value
        if tp is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise RecordError(f"{path}: expected an integer")
            return value
        if tp is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise RecordError(f"{path}: expected a number")
            return float(value)
        if tp is str:
            if not isinstance(value, str):
                raise RecordError(f"{path}: expected text")
            return value
    return value


def from_data(cls: type[T], data: Any, path: str = "$") -> T:
    """Build a record of type ``cls`` from plain data, keeping unknown keys in ``extra``."""
    if not isinstance(data, dict):
        raise RecordError(f"{path}: expected an object for {cls.__name__}")
    hints = _hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs: dict[str, Any] = {}
    for name, f in fields.items():
        if name == "extra":
            continue
        if name in data:
            kwargs[name] = _convert(hints[name], data[name], f"{path}.{name}")
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise RecordError(f"{path}: missing field {name!r} for {cls.__name__}")
    unknown = {k: v for k, v in data.items() if k not in fields or k == "extra"}
    if "extra" in fields:
        kwargs["extra"] = unknown
    try:
        return cls(**kwargs)
    except RecordError as exc:
        raise RecordError(f"{path}: {exc}") from None


def canonical_json(data: Any) -> str:
    return json.dumps(to_data(data), sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def dumps(record: Any, *, pretty: bool = True) -> str:
    """Canonical text form: sorted keys, stable across runs and machines."""
    if pretty:
        return json.dumps(to_data(record), sort_keys=True, ensure_ascii=False, indent=2) + "\n"
    return canonical_json(record)


def loads(cls: type[T], text: str) -> T:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RecordParseError(exc.msg, exc.pos) from None
    return from_data(cls, data)


def digest(value: Any) -> str:
    """sha256 of the canonical compact form of a record or plain data."""
    return hashlib.sha256(canonical_json(value).encode("utf-8")).hexdigest()


def text_digest(text: str) -> str:
    """Digest of serialized record text; invariant under key order and whitespace."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RecordParseError(exc.msg, exc.pos) from None
    return digest(data)


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def derive_seed(seed: int, *labels: Any) -> int:
    """Deterministic sub-seed for a labelled task."""
    h = hashlib.sha256(json.dumps([seed, *[str(x) for x in labels]]).encode()).digest()
    return int.from_bytes(h[:8], "big") >> 1
