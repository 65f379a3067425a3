from __future__ import annotations

import json
import random
from datetime import date

import pytest
from hypothesis import given, settings, strategies as st

from theorykit.backtest import (
    EvidenceJudgment,
    Prediction,
    PredictionRubric,
    Verdict,
    backtest_law,
    compute_recall,
    evaluation_queries,
    judge_evidence,
    law_precision,
    prediction_precision,
    self_belief,
)
from theorykit.fixtures import FixtureResponders, fixture_data
from theorykit.gateway import CostLedger, Gateway, MockProvider
from theorykit.judge import JudgeDimension, JudgeScore, ScoringError, aggregate_condition_table, law_payload, score_law
from theorykit.model import RecordError
from theorykit.novelty import (
    DEFAULT_NOVEL_DEGREES,
    Degree,
    NoveltyDimension,
    PerPaperNovelty,
    consolidate,
    consolidation_order,
    evaluate_law_novelty,
    judge_paper_novelty,
    sample_laws,
)
from theorykit.querygen import PREFIX, generate_queries, months_before, seed_window, select_seed_papers
from tests.conftest import make_paper, make_ref


def gateway(responders) -> Gateway:
    return Gateway(MockProvider(responders), CostLedger(), models={"default": "m"})


def fixture_gateway() -> Gateway:
    return gateway(FixtureResponders(fixture_data()).table())


def pred(name: str) -> Prediction:
    return Prediction(name, f"{name} holds", ("signal",), "controlled test", "goes up", "goes down")


def j(law: str, p: str, paper: str, v: str) -> EvidenceJudgment:
    return EvidenceJudgment(law, p, paper, Verdict(v), "Table 2" if v != "no_evidence" else "")


# -- judge ------------------------------------------------------------------------


def test_judge_never_sees_self_novelty():
    assert "self_novelty" not in json.loads(law_payload(make_ref()))


def test_judge_score_bounds():
    with pytest.raises(RecordError):
        JudgeScore("l", "novelty", 11, "", "m")
    with pytest.raises(RecordError):
        JudgeScore("l", "novelty", 0, "", "m")


def test_score_law_contract_failure_becomes_scoring_error():
    g = gateway({"judge_law": lambda c: '{"score": 42}'})
    with pytest.raises(ScoringError):
        score_law(make_ref(), JudgeDimension.NOVELTY, g)


def test_score_law_records_condition():
    g = gateway({"judge_law": lambda c: '{"score": 7, "rationale": "ok"}'})
    s = score_law(make_ref(slug="parametric-novelty"), "specificity", g)
    assert (s.score, s.condition, s.dimension) == (7, "parametric-novelty", JudgeDimension.SPECIFICITY)


def test_judge_table_means_and_deltas():
    scores = []
    for i, (p, l) in enumerate([(5, 6), (6, 7), (4, 7)]):
        scores.append(JudgeScore(f"p{i}", "specificity", p, "", "m", "parametric-accuracy"))
        scores.append(JudgeScore(f"l{i}", "specificity", l, "", "m", "literature-accuracy"))
    t = aggregate_condition_table(scores, n_resamples=500)
    row = t.row("specificity", "accuracy")
    assert row.param_mean == 5.0 and row.lit_mean == pytest.approx(20 / 3)
    assert row.delta_percent == 33
    assert t.row("novelty", "novelty").p_value is None


# -- backtest -----------------------------------------------------------------------


def test_table_example_precision():
    js = [j("L", "a", "p0", "support")] + [j("L", "a", f"p{i}", "no_evidence") for i in range(1, 14)]
    assert prediction_precision(js) == 1.0
    rubric5 = PredictionRubric("L", tuple(pred(n) for n in "abcde"))
    js5 = [j("L", "a", "p", "support"), j("L", "b", "p", "support")] + [j("L", n, "p", "no_evidence") for n in "cde"]
    assert law_precision(rubric5, js5) == 1.0


def test_precision_undefined_without_evidence():
    rubric = PredictionRubric("L", (pred("a"),))
    assert law_precision(rubric, [j("L", "a", "p", "no_evidence")]) is None
    assert backtest_law(rubric, []).has_evidence is False


def test_evidence_verdict_needs_locator():
    with pytest.raises(RecordError):
        EvidenceJudgment("L", "a", "p", Verdict.SUPPORT)


def test_rubric_names_unique():
    with pytest.raises(RecordError):
        PredictionRubric("L", (pred("a"), pred("a")))


def test_evaluation_queries_cover_every_prediction():
    rubric = PredictionRubric("t0.l0", (pred("a"), pred("b")))
    qs = evaluation_queries(rubric, make_ref())
    assert len(qs) == 3 and make_ref().law.statement in qs


def test_no_full_text_gives_no_evidence_without_call():
    g = gateway({})
    out = judge_evidence(make_paper("p", text=""), pred("a"), "L", g)
    assert out.verdict is Verdict.NO_EVIDENCE and out.audit == "no_full_text"
    assert g.calls["chat"] == 0


def brute_force(rubrics, judgments):
    """Independent counting oracle over raw tuples."""
    per_law_prec, evidenced_laws, evidenced_preds, total_preds = [], 0, 0, 0
    for law_id, names in rubrics.items():
        precs = []
        for n in names:
            vs = [x.verdict.value for x in judgments if x.law_id == law_id and x.prediction == n]
            s, c = vs.count("support"), vs.count("contradict")
            if s + c:
                precs.append(s / (s + c))
        total_preds += len(names)
        evidenced_preds += len(precs)
        if precs:
            evidenced_laws += 1
            per_law_prec.append(sum(precs) / len(precs))
    return (
        sum(per_law_prec) / len(per_law_prec) if per_law_prec else None,
        evidenced_laws / len(rubrics),
        evidenced_preds / total_preds,
    )


def random_case(rng: random.Random, uniform: int | None = None):
    rubrics, judgments = {}, []
    for l in range(rng.randint(1, 8)):
        law_id = f"law{l}"
        k = uniform or rng.randint(1, 6)
        names = [f"{law_id}_p{i}" for i in range(k)]
        rubrics[law_id] = names
        for n in names:
            for paper in range(rng.randint(0, 5)):
                v = rng.choices(["support", "contradict", "no_evidence"], [1, 1, 4])[0]
                judgments.append(j(law_id, n, f"paper{paper}", v))
    return rubrics, judgments


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**9), st.booleans())
def test_recall_matches_brute_force(seed, uniform):
    rng = random.Random(seed)
    rubrics, judgments = random_case(rng, 5 if uniform else None)
    rep = compute_recall({k: PredictionRubric(k, tuple(pred(n) for n in v)) for k, v in rubrics.items()}, judgments)
    prec, lrec, prec_rec = brute_force(rubrics, judgments)
    assert rep.precision == pytest.approx(prec) if prec is not None else rep.precision is None
    assert rep.law_recall == pytest.approx(lrec)
    assert rep.prediction_recall == pytest.approx(prec_rec)
    if uniform:
        assert rep.law_recall >= rep.prediction_recall - 1e-12


def test_paper_counts_both_ways():
    rubrics = {k: PredictionRubric(k, (pred(f"{k}a"),)) for k in ("A", "B")}
    js = [j("A", "Aa", "p1", "support"), j("B", "Ba", "p1", "contradict"), j("B", "Ba", "p2", "support"), j("B", "Ba", "p3", "no_evidence")]
    rep = compute_recall(rubrics, js)
    assert rep.papers_with_relevant_experiments == 3
    assert rep.distinct_papers_with_relevant_experiments == 2
    assert rep.law_paper_evaluations == 4
    assert rep.avg_papers_per_law_with_evidence == 1.5


def test_self_belief_record():
    g = gateway({"self_belief": lambda c: "yes" if c.variables["sample_index"] in "0123" else "no"})
    rec = self_belief(make_ref(), g, n=10)
    assert rec.estimate == 0.4 and rec.n_requested == 10


# -- novelty ------------------------------------------------------------------------


def _ppn(pid: str, d: Degree) -> PerPaperNovelty:
    return PerPaperNovelty("t0.l0", pid, NoveltyDimension.GENERALIZATION_SCOPE_EXPANSION, d, "r")


def test_degree_ordinals():
    assert [d.ordinal for d in Degree] == [3, 2, 1, 0]
    assert DEFAULT_NOVEL_DEGREES == {Degree.GENUINELY_NEW, Degree.DERIVABLE_UNSTATED}


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(list(Degree)), max_size=30), st.randoms())
def test_consolidation_order_oracle(degrees, rnd):
    items = [_ppn(f"p{i:02d}", d) for i, d in enumerate(degrees)]
    rnd.shuffle(items)
    out = consolidation_order(items)
    ords = [a.degree.ordinal for a in out]
    assert ords == sorted(ords, reverse=True)
    for a, b in zip(out, out[1:]):
        if a.degree is b.degree:
            assert a.paper_id < b.paper_id


def test_fifty_four_paper_consolidation():
    counts = {Degree.GENUINELY_NEW: 31, Degree.DERIVABLE_UNSTATED: 21, Degree.EXPLICIT_PERIPHERAL: 2}
    items = [_ppn(f"p{i:02d}", d) for i, d in enumerate(d for d, n in counts.items() for _ in range(n))]
    random.Random(3).shuffle(items)
    seen = []
    responders = FixtureResponders(fixture_data()).table()

    def spy(call):
        seen.append([json.loads(l)["degree"] for l in call.variables["assessments"].splitlines()])
        return responders["novelty_consolidate"](call)

    c = consolidate(make_ref(), NoveltyDimension.GENERALIZATION_SCOPE_EXPANSION, items, gateway({"novelty_consolidate": spy}))
    assert seen[0] == ["genuinely_new"] * 31 + ["derivable_unstated"] * 21 + ["explicit_peripheral"] * 2
    assert c.degree is Degree.GENUINELY_NEW and c.novel_flag and c.n_papers == 54


def test_law_novelty_call_count():
    g = fixture_gateway()
    corpus = [make_paper(f"p{i}", text="some text") for i in range(5)]
    res = evaluate_law_novelty(make_ref(), corpus, g)
    assets = [e.prompt_asset_id for e in g.ledger.entries]
    assert assets.count("novelty_per_paper") == 7 * 5
    assert assets.count("novelty_consolidate") == 7
    assert len(res.consolidations) == 7


def test_unparseable_per_paper_falls_back_with_audit():
    g = gateway({"novelty_per_paper": lambda c: '{"degree": "weird"}'})
    out = judge_paper_novelty(make_ref(), make_paper("p", text="t"), NoveltyDimension.EXPLANATION, g)
    assert out.degree is Degree.EXPLICIT_ESTABLISHED and out.audit


def test_sample_laws_seeded_and_sorted():
    ids = [f"l{i}" for i in range(30)]
    a = sample_laws(ids, 10, 5)
    assert a == sample_laws(list(reversed(ids)), 10, 5) == sorted(a)
    assert len(a) == 10
    assert sample_laws(ids[:4], 10, 5) == ids[:4]


# -- query generation -----------------------------------------------------------------


def test_seed_window():
    start, end = seed_window(date(2024, 6, 30))
    assert (start, end) == (date(2023, 6, 30), date(2024, 6, 30))
    assert months_before(date(2024, 3, 31), 1) == date(2024, 2, 29)
    papers = [make_paper("in", d=date(2024, 1, 1)), make_paper("edge", d=date(2023, 6, 30)), make_paper("late", d=date(2024, 7, 1))]
    assert [p.paper_id for p in select_seed_papers(papers, date(2024, 6, 30))] == ["in"]


def test_generate_queries_pair():
    g = fixture_gateway()
    pair = generate_queries(make_paper("x1", title="Peer tutoring with agents", abstract="a"), g)
    qs = [pair.general, pair.specific]
    assert [q.id for q in qs] == ["x1.general", "x1.specific"]
    assert all(q.text.startswith(PREFIX) for q in qs)
    assert all(q.source_paper_id == "x1" for q in qs)
