from __future__ import annotations

import csv
import io
import json
import shutil
from decimal import Decimal

import pytest

from theorykit.gateway import LedgerEntry
from theorykit.harness.cli import main
from theorykit.harness.config import Config, ConfigError, parse_window
from theorykit.harness.pipeline import evaluate, load_eval, theorize
from theorykit.harness.report import COST_ROWS, ReportError, cost_activity, cost_rows, emit_report, stage_totals
from theorykit.harness.rundir import RunDirectory, RunLocked
from theorykit.fixtures import load_fixture
from theorykit.model import ALL_CONDITIONS


class Exploding:
    """Provider that fails the test on any call."""

    def complete(self, *a):
        raise AssertionError("unexpected model call")

    def search(self, *a):
        raise AssertionError("unexpected search")

    def fetch(self, *a):
        raise AssertionError("unexpected fetch")


def test_config_prices_are_per_token():
    cfg = Config.load(mock=True)
    p = cfg.prices["mock-large"]
    assert p.input == Decimal("3.00") / Decimal(10**6)
    assert p.output == Decimal("0.000015")


def test_config_rejects_bad_window(tmp_path):
    with pytest.raises(ConfigError):
        Config.load(overrides={"window": parse_window("2025-06-30,2024-06-30,2025-12-31")})
    with pytest.raises(ConfigError):
        parse_window("2025-06-30")
    f = tmp_path / "c.yaml"
    f.write_text("seed: 9\nprices:\n  mock-large: {input: '1.5', output: '2'}\n")
    cfg = Config.load(f, mock=True)
    assert cfg.seed == 9 and cfg.prices["mock-large"].input == Decimal("0.0000015")


def test_resume_makes_no_calls(mock_run, tmp_path):
    src = mock_run["run"]
    dst = RunDirectory(tmp_path / "copy")
    shutil.copytree(src.root, dst.root, ignore=shutil.ignore_patterns("cache", ".lock"))
    before = dst.run_digest()
    res = theorize(dst, [load_fixture().query], list(ALL_CONDITIONS), mock_run["config"], mock=True, provider=Exploding())
    assert all(v == 0 for v in res.gateway.calls.values())
    evaluate(dst, ["judge", "backtest", "novelty", "overlap"], provider=Exploding())
    assert dst.run_digest() == before


def test_partial_eval_resumes_only_missing_laws(mock_run, tmp_path):
    dst = RunDirectory(tmp_path / "partial")
    shutil.copytree(mock_run["run"].root, dst.root, ignore=shutil.ignore_patterns("cache", ".lock"))
    files = sorted(p for p in dst.path("evals", "judge").glob("*.json") if p.name != "failures.json")
    victim = files[0]
    kept = victim.read_text()
    victim.unlink()
    dst.marker_path("evaluate-judge").unlink()
    ledger_before = len(dst.ledger())
    evaluate(dst, ["judge"])
    assert victim.read_text() == kept
    new = dst.ledger()[ledger_before:]
    assert new and {e.subject for e in new} == {json.loads(kept)["law_id"]}


def test_manifest_mismatch_refuses(mock_run, tmp_path):
    dst = RunDirectory(tmp_path / "m")
    shutil.copytree(mock_run["run"].root, dst.root, ignore=shutil.ignore_patterns("cache", ".lock"))
    cfg = Config.load(mock=True, overrides={"seed": 99})
    with pytest.raises(ValueError):
        theorize(dst, [load_fixture().query], list(ALL_CONDITIONS), cfg, mock=True)


def test_lock_is_exclusive(tmp_path):
    run = RunDirectory(tmp_path)
    with run.lock():
        with pytest.raises(RunLocked):
            with RunDirectory(tmp_path).lock():
                pass


def test_digest_ignores_reports_and_timings(mock_run):
    run = mock_run["run"]
    rels = run.digest_files()
    assert "manifest.json" in rels and "ledger.jsonl" in rels
    assert not any(r.startswith(("reports/", "cache/")) or r in ("timings.json", ".lock") for r in rels)


def test_report_files(mock_run):
    out = mock_run["run"].path("reports")
    for name in ("judge_table.csv", "backtest_table.csv", "novelty_table.csv", "overlap_curves.csv",
                 "cost_table.csv", "stage_totals.csv", "overlap.png", "index.html", "ledger.html", "summary.json"):
        assert (out / name).exists(), name
    assert list((out / "theories").glob("*.html"))


def test_report_needs_evals(tmp_path):
    run = RunDirectory(tmp_path / "r")
    theorize(run, [load_fixture().query], list(ALL_CONDITIONS), Config.load(mock=True), mock=True)
    with pytest.raises(ReportError):
        emit_report(run)


def test_evaluate_empty_suite_list_is_noop(tmp_path):
    run = RunDirectory(tmp_path / "e")
    theorize(run, [load_fixture().query], list(ALL_CONDITIONS), Config.load(mock=True), mock=True)
    before = run.run_digest()
    assert evaluate(run, []) == {}
    assert run.run_digest() == before


def _entry(stage, usd, subject=""):
    return LedgerEntry(stage, "m", 10, 5, Decimal(usd), "a", subject)


def test_cost_rows_partition_ledger():
    entries = [
        _entry("discovery", "0.1"), _entry("synthesis", "0.2", "q0/parametric-accuracy"),
        _entry("synthesis", "0.3", "q0/literature-accuracy"), _entry("judge", "0.05"),
        _entry("backtest", "0.4"), _entry("belief", "0.01"), _entry("novelty", "0.2"),
        _entry("novelty_consolidate", "0.02"), _entry("overlap", "0.03"), _entry("querygen", "0.07"),
    ]
    rows = cost_rows(entries, {"Literature-Supported": 2, "Parametric Only": 2, "LLM-as-a-Judge Metrics": 5})
    labels = [r[0] for r in rows[1:]]
    assert labels == [l for l, _ in COST_ROWS] + ["Total"]
    by = {r[0]: r for r in rows[1:]}
    assert Decimal(by["Literature-Supported"][3]) == Decimal("0.4")
    assert Decimal(by["Parametric Only"][3]) == Decimal("0.2")
    assert Decimal(by["Other"][3]) == Decimal("0.07")
    assert Decimal(by["Total"][3]) == sum(e.usd for e in entries)
    assert Decimal(by["LLM-as-a-Judge Metrics"][4]) == Decimal("0.01")
    assert cost_activity(entries[-1]) == "Other"
    assert sum(v["usd"] for v in stage_totals(entries).values()) == sum(e.usd for e in entries)


def test_cli_end_to_end(tmp_path, capsys):
    rd = str(tmp_path / "cli")
    assert main(["theorize", "--mock", "--run-dir", rd]) == 0
    assert "run digest" in capsys.readouterr().out
    assert main(["evaluate", "--mock", "--run-dir", rd, "--suites", "judge,overlap"]) == 0
    assert main(["report", "--run-dir", rd]) == 0
    rows = list(csv.reader(io.StringIO((tmp_path / "cli" / "reports" / "cost_table.csv").read_text())))
    assert rows[-1][0] == "Total"
    assert main(["evaluate", "--run-dir", rd, "--suites", "bogus"]) == 1
    assert main(["report", "--run-dir", str(tmp_path / "nothing")]) == 1


def test_cli_queries(tmp_path, capsys):
    out = tmp_path / "q"
    assert main(["queries", "--mock", "--out", str(out)]) == 0
    data = json.loads((out / "queries.json").read_text())
    assert {q["kind"] for q in data} == {"general", "specific"}
    assert (out / "ledger.jsonl").exists()


def test_eval_records_per_law(mock_run):
    judged = load_eval(mock_run["run"], "judge")
    assert judged and all(len(r["scores"]) == 4 for r in judged)
