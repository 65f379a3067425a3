from __future__ import annotations

from datetime import date

import pytest
from hypothesis import given, settings, strategies as st

from theorykit.discovery import RetrievalPlan, discover_corpus, generation_filter, rank_backfill_candidates, reformulate_query
from theorykit.extraction import RecordCounter, chunk_text, extract_corpus, generate_schema, synthesis_inputs
from theorykit.fixtures import fixture_provider, load_fixture
from theorykit.gateway import CostLedger, Gateway
from theorykit.model import (
    ExtractionHeader,
    ExtractionRecord,
    GenerationCondition,
    MentionOrUse,
    Theory,
    TheoryProvenance,
    iter_laws,
    validate_evidence_links,
)
from theorykit.synthesis import (
    FILTERED_CLASSES,
    assemble_evidence,
    estimate_tokens,
    filter_laws_by_self_novelty,
    reflect,
    synthesize_theories,
)
from tests.conftest import make_law, make_paper

FX = load_fixture()


@pytest.fixture(scope="module")
def staged():
    gateway = Gateway(fixture_provider(), CostLedger(), models={"default": "m"})
    q = FX.query
    plan = RetrievalPlan(q, reformulate_query(q, gateway), 12, generation_filter(FX.window, 12))
    corpus = discover_corpus(plan, gateway)
    schema = generate_schema(q, gateway)
    records = extract_corpus(corpus, schema, gateway, RecordCounter())
    return gateway, corpus, schema, records


def test_corpus_respects_window_and_size(staged):
    _, corpus, _, _ = staged
    assert len(corpus.papers) == 12
    assert len({p.paper_id for p in corpus.papers}) == 12
    assert all(p.publication_date <= FX.window.supplement_end for p in corpus.papers)
    sources = {n.source for n in corpus.retrieval_notes}
    assert sources == {"direct", "backfill"}


def test_backfill_ranking_order():
    a = make_paper("a", title="tutoring feedback", d=date(2023, 1, 1))
    b = make_paper("b", title="tutoring feedback", d=date(2024, 1, 1))
    c = make_paper("c", title="unrelated", d=date(2024, 1, 1))
    ranked = [p.paper_id for p, _ in rank_backfill_candidates([a, c, b], "tutoring feedback")]
    assert ranked == ["b", "a", "c"]


def test_extraction_numbering_is_contiguous(staged):
    _, corpus, _, records = staged
    numbers = sorted({int(r.id.rsplit("-", 1)[1]) for r in records})
    assert numbers == list(range(1, len(numbers) + 1))
    assert len({r.uuid for r in records}) == len(records)
    no_text = [p.paper_id for p in corpus.papers if not p.has_full_text]
    assert no_text and not any(r.paper_id in no_text for r in records)


def test_chunking_bounds():
    text = "\n\n".join("x" * n for n in (10, 50, 200, 5))
    chunks = chunk_text(text, 60)
    assert all(len(c) <= 60 for c in chunks)
    assert "".join(chunks).replace("\n", "") == text.replace("\n", "")


def _rec(n: int, k: int, relevant: bool = True, pad: int = 0) -> ExtractionRecord:
    header = ExtractionHeader("src", "short", "full", "b" * (1 + pad), "cite", MentionOrUse.USE)
    return ExtractionRecord(f"extraction-result-{n}", f"e{n}.{k}", f"p{n}", "s", header, {"x": "v"}, relevant)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 400), min_size=1, max_size=25), st.integers(1, 3000), st.integers(0, 99))
def test_bundle_stays_within_budget_and_order(pads, budget, seed):
    records = [_rec(i + 1, 0, pad=p) for i, p in enumerate(pads)]
    b = assemble_evidence(records, budget, seed)
    total = sum(estimate_tokens(r) for r in records)
    if total <= budget:
        assert list(b.records) == records
    else:
        assert b.token_estimate <= budget
        idx = [records.index(r) for r in b.records]
        assert idx == sorted(idx)
    assert b == assemble_evidence(records, budget, seed)


def test_irrelevant_records_do_not_reach_synthesis():
    recs = [_rec(1, 0), _rec(1, 1, relevant=False)]
    assert [r.uuid for r in synthesis_inputs(recs)] == ["e1.0"]


def test_parametric_rejects_evidence_and_literature_requires_it(staged):
    gateway, _, _, records = staged
    with pytest.raises(ValueError):
        synthesize_theories(FX.query, assemble_evidence(records, 10**6, 0), GenerationCondition.from_slug("parametric-accuracy"), gateway)
    with pytest.raises(ValueError):
        synthesize_theories(FX.query, assemble_evidence([], 1, 0), GenerationCondition.from_slug("literature-accuracy"), gateway)


def test_literature_theories_link_cleanly(staged):
    gateway, _, _, records = staged
    bundle = assemble_evidence(synthesis_inputs(records), 10**6, 0)
    theories = synthesize_theories(FX.query, bundle, GenerationCondition.from_slug("literature-accuracy"), gateway, n_theories=3)
    assert len(theories) >= 2
    reflected = [reflect(t, bundle, gateway, FX.query) for t in theories]
    for t in reflected:
        assert validate_evidence_links(t, records) == []
        assert t.provenance.reflected


def _theory(tid: str, classes: list[str]) -> Theory:
    laws = tuple(make_law(f"{tid} law {i}", cls=c) for i, c in enumerate(classes))
    return Theory(tid, tid, "d", laws, GenerationCondition.from_slug("parametric-novelty"), TheoryProvenance("q", "x", 0))


classes = st.sampled_from(["new", "somewhat-related-to-existing", "closely-related-to-existing", "existing"])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(classes, min_size=1, max_size=6), min_size=1, max_size=6))
def test_filter_property(shape):
    theories = [_theory(f"t{i}", c) for i, c in enumerate(shape)]
    res = filter_laws_by_self_novelty(theories)
    assert all(r.law.self_novelty.classification not in FILTERED_CLASSES for r in res.kept)
    all_refs = iter_laws(theories)
    dropped = sum(1 for r in all_refs if r.law.self_novelty.classification in FILTERED_CLASSES)
    assert res.filtered_fraction == dropped / len(all_refs)
    assert {r.law_id for r in res.kept} | {r.law_id for r in res.filtered} == {r.law_id for r in all_refs}
    assert all(any(r.theory_id == t.id for r in res.kept) for t in res.theories)
