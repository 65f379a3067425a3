from __future__ import annotations

import json
from decimal import Decimal

import pytest
from hypothesis import given, settings, strategies as st

from theorykit.gateway import (
    ChatRequest,
    ContractViolation,
    CostLedger,
    Gateway,
    GatewayFailure,
    MockProvider,
    PromptError,
    RetryPolicy,
    SearchFilter,
    UnmappedRequest,
    load_prompt,
    parallel_map,
    parse_json_object,
)
from theorykit.gateway.ledger import read_ledger, ledger_line
from tests.conftest import make_paper
from datetime import date


def belief(i: int = 0, claim: str = "x") -> ChatRequest:
    return ChatRequest("self_belief", {"claim": claim, "sample_index": str(i)}, stage="belief")


def gw(responders=None, **kw) -> Gateway:
    prices = kw.pop("prices", {"m": (Decimal("0.000003"), Decimal("0.000015"))})
    provider = kw.pop("provider", None) or MockProvider({"self_belief": lambda c: "yes"} if responders is None else responders, **kw)
    return Gateway(provider, CostLedger(prices), models={"default": "m"}, retry=RetryPolicy(sleep=lambda s: None))


def test_identical_requests_hit_cache_without_ledger_entry():
    g = gw()
    a = g.chat(belief())
    b = g.chat(belief())
    assert a == b
    assert g.calls["chat"] == 1
    assert len(g.ledger.entries) == 1


def test_subject_does_not_change_cache_key():
    g = gw()
    g.chat(belief())
    from dataclasses import replace

    g.chat(replace(belief(), subject="law-7"))
    assert g.calls["chat"] == 1


def test_disk_cache_survives_new_gateway(tmp_path):
    g1 = gw()
    g1.cache_dir = tmp_path
    g1.chat(belief())
    g2 = gw()
    g2.cache_dir = tmp_path
    g2.chat(belief())
    assert g2.calls["chat"] == 0
    assert g2.ledger.entries == []


def test_transient_failures_are_retried():
    g = gw(transient_failures={"chat": 2})
    assert g.chat(belief()).text == "yes"
    assert g.calls["chat"] == 3
    assert len(g.ledger.entries) == 1


def test_retry_exhaustion_raises_failure_with_history():
    g = gw(transient_failures={"chat": 10})
    with pytest.raises(GatewayFailure) as exc:
        g.chat(belief())
    assert len(exc.value.attempts) == 5


def test_unmapped_request_is_not_retried():
    g = gw(responders={})
    with pytest.raises(UnmappedRequest):
        g.chat(belief())


def test_unbound_placeholder_raises_before_provider_call():
    g = gw()
    with pytest.raises(PromptError):
        g.chat(ChatRequest("self_belief", {"claim": "x"}))
    assert g.calls["chat"] == 0


def test_structured_reprompts_once_then_raises():
    answers = iter(["not json", '{"ok": 1}'])
    g = gw({"self_belief": lambda c: next(answers)})
    assert g.chat_structured(belief(), lambda o: o["ok"]) == 1
    assert g.calls["chat"] == 2

    g2 = gw({"self_belief": lambda c: "still not json"})
    with pytest.raises(ContractViolation):
        g2.chat_structured(belief(), lambda o: o)
    assert g2.calls["chat"] == 2


def test_parse_json_object_tolerates_fences():
    assert parse_json_object('```json\n{"a": 1}\n```') == {"a": 1}
    assert parse_json_object('Here you go: {"a": [1, 2]} thanks') == {"a": [1, 2]}
    with pytest.raises(ContractViolation):
        parse_json_object("[1, 2]")


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**7), st.integers(0, 10**7), st.decimals("0", "100", places=2), st.decimals("0", "100", places=2))
def test_ledger_cost_is_exact(inp, out, per_m_in, per_m_out):
    price = (per_m_in / Decimal(10**6), per_m_out / Decimal(10**6))
    ledger = CostLedger({"m": price})
    e = ledger.record("s", "m", inp, out)
    assert e.usd == inp * price[0] + out * price[1]
    assert e.usd * Decimal(10**6) == inp * per_m_in + out * per_m_out


def test_ledger_line_round_trip(tmp_path):
    ledger = CostLedger({"m": ("0.0000025", "0.00001")})
    e = ledger.record("judge", "m", 123, 45, subject="t.l0")
    p = tmp_path / "l.jsonl"
    p.write_text(ledger_line(e))
    assert read_ledger(p) == [e]
    assert json.loads(ledger_line(e))["usd"] == str(e.usd)


def test_subtotals_sum_to_total():
    ledger = CostLedger({"m": ("0.000001", "0.000002")})
    for i in range(20):
        ledger.record(["a", "b", "c"][i % 3], "m", i * 7, i * 3)
    assert sum(ledger.subtotals().values()) == ledger.total()


def test_parallel_map_keeps_ledger_order():
    g = gw()
    reqs = [belief(i) for i in range(12)]
    parallel_map(g.chat, reqs, workers=4)
    g_serial = gw()
    for r in reqs:
        g_serial.chat(r)
    assert [e.request_digest for e in g.ledger.entries] == [e.request_digest for e in g_serial.ledger.entries]


def test_self_belief_samples_counts_votes():
    g = gw({"self_belief": lambda c: "Yes." if int(c.variables["sample_index"]) % 4 else "no"})
    s = g.self_belief_samples("claim", 8)
    assert s.n_effective == 8
    assert s.estimate == 6 / 8


def test_search_applies_date_window():
    papers = [make_paper("a", d=date(2024, 1, 1), title="tutoring agents"), make_paper("b", d=date(2025, 1, 1), title="tutoring agents")]
    g = gw(papers=papers)
    hits = g.search_papers("tutoring", SearchFilter(until=date(2024, 6, 30)))
    assert [h.paper.paper_id for h in hits] == ["a"]
    hits = g.search_papers("tutoring", SearchFilter(after=date(2024, 6, 30)))
    assert [h.paper.paper_id for h in hits] == ["b"]


def test_every_prompt_asset_loads():
    for name in (
        "reformulate_query", "extract_references", "generate_schema", "extract_evidence", "merge_extractions",
        "generate_theories", "reflect_theory", "judge_law", "generate_rubric", "judge_evidence", "self_belief",
        "novelty_per_paper", "novelty_consolidate", "judge_duplicate", "generate_queries",
    ):
        asset = load_prompt(name)
        assert asset.version >= 1
