from __future__ import annotations

import json
from datetime import date

import pytest
from hypothesis import given, settings, strategies as st

from theorykit.model import (
    EvidenceItem,
    ExtractionHeader,
    ExtractionRecord,
    GenerationCondition,
    KnowledgeWindow,
    Law,
    LawType,
    MentionOrUse,
    PaperRecord,
    RecordError,
    RecordParseError,
    SelfNoveltyAssessment,
    SelfNoveltyClass,
    Theory,
    TheoryProvenance,
    derive_seed,
    digest,
    dumps,
    from_data,
    iter_laws,
    loads,
    text_digest,
    to_data,
    validate_evidence_links,
)

text = st.text(st.characters(blacklist_categories=("Cs", "Z", "Cc")), min_size=1, max_size=30)
uuid_st = st.builds(lambda r, m: f"e{r}.{m}", st.integers(0, 999), st.integers(0, 9))


@st.composite
def laws(draw):
    return Law(
        name=draw(text),
        statement=draw(text),
        law_type=draw(st.sampled_from(list(LawType))),
        scope=draw(text),
        self_novelty=SelfNoveltyAssessment(draw(text), draw(text), draw(text), draw(st.sampled_from(list(SelfNoveltyClass)))),
        special_cases=tuple(draw(st.lists(text, max_size=3))),
        evidence=tuple(EvidenceItem(draw(text), tuple(draw(st.lists(uuid_st, max_size=3)))) for _ in range(draw(st.integers(0, 2)))),
    )


@st.composite
def theories(draw):
    return Theory(
        id=draw(st.from_regex(r"[a-z][a-z0-9-]{0,10}", fullmatch=True)),
        name=draw(text),
        description=draw(text),
        laws=tuple(draw(st.lists(laws(), min_size=1, max_size=3))),
        condition=draw(st.sampled_from(["parametric-accuracy", "literature-novelty"]).map(GenerationCondition.from_slug)),
        provenance=TheoryProvenance("q0", "abc", draw(st.integers(0, 2**31))),
    )


@settings(max_examples=60, deadline=None)
@given(theories())
def test_theory_round_trip(t):
    back = loads(Theory, dumps(t))
    assert back == t
    assert dumps(back) == dumps(t)


@settings(max_examples=40, deadline=None)
@given(theories(), st.data())
def test_truncated_record_raises_parse_error(t, data):
    s = dumps(t, pretty=False)
    cut = data.draw(st.integers(1, len(s) - 1))
    with pytest.raises(RecordParseError):
        loads(Theory, s[:cut])


@settings(max_examples=40, deadline=None)
@given(theories())
def test_text_digest_ignores_formatting(t):
    assert text_digest(dumps(t)) == text_digest(dumps(t, pretty=False)) == digest(t)


def test_unknown_fields_survive_in_extra():
    data = to_data(PaperRecord("p1", "Title", date(2024, 1, 2)))
    data["venue_rank"] = 3
    p = from_data(PaperRecord, data)
    assert p.extra == {"venue_rank": 3}
    assert to_data(p)["venue_rank"] == 3


def test_missing_required_field_raises():
    with pytest.raises(RecordError):
        from_data(PaperRecord, {"paper_id": "p1", "title": "x"})


def test_knowledge_window_ordering():
    KnowledgeWindow(date(2024, 6, 30), date(2025, 6, 30), date(2025, 12, 31))
    with pytest.raises(RecordError):
        KnowledgeWindow(date(2025, 6, 30), date(2024, 6, 30), date(2025, 12, 31))


def test_condition_slug_round_trip():
    for slug in ("parametric-accuracy", "literature-accuracy", "parametric-novelty", "literature-novelty"):
        c = GenerationCondition.from_slug(slug)
        assert c.slug == slug
        assert c.temperature == (0.0 if slug.endswith("accuracy") else 1.0)


def test_law_ids_are_positional():
    t = Theory(
        "t1",
        "T",
        "d",
        (
            Law("a", "s", LawType.QUALITATIVE, "x", SelfNoveltyAssessment("a", "b", "c", SelfNoveltyClass.NEW)),
            Law("b", "s", LawType.QUALITATIVE, "x", SelfNoveltyAssessment("a", "b", "c", SelfNoveltyClass.NEW)),
        ),
        GenerationCondition.from_slug("literature-accuracy"),
        TheoryProvenance("q0", "d", 0),
    )
    assert [r.law_id for r in iter_laws([t])] == ["t1.l0", "t1.l1"]


def _record(uuid: str) -> ExtractionRecord:
    header = ExtractionHeader("src", "short", "full", "brief", "cite", MentionOrUse.USE)
    return ExtractionRecord("extraction-result-1", uuid, "p1", "s1", header, {"slot": "v"})


def test_link_validation_kinds():
    good, other = "e1.0", "e1.1"
    law = Law(
        "a", "s", LawType.QUALITATIVE, "x", SelfNoveltyAssessment("a", "b", "c", SelfNoveltyClass.NEW),
        evidence=(EvidenceItem("d", (good, other)),),
    )
    # malformed ids are rejected at construction, so the validator sees them only via raw data
    with pytest.raises(RecordError):
        EvidenceItem("d", ("not-a-uuid",))
    t = Theory("t", "T", "d", (law,), GenerationCondition.from_slug("literature-accuracy"), TheoryProvenance("q", "d", 0))
    kinds = sorted(v.kind for v in validate_evidence_links(t, [_record(good), _record(good)]))
    assert kinds == ["ambiguous", "dangling"]
    assert validate_evidence_links(t, []) != []


def test_derive_seed_is_stable_and_label_sensitive():
    assert derive_seed(1, "a", 2) == derive_seed(1, "a", 2)
    assert derive_seed(1, "a", 2) != derive_seed(1, "a", 3)
    assert derive_seed(1, "a") != derive_seed(2, "a")


def test_serialized_json_is_sorted():
    s = dumps(PaperRecord("p", "T", date(2024, 1, 1)))
    assert list(json.loads(s)) == sorted(json.loads(s))
