"""Report emission: CSV tables, overlap plot, static HTML pages and a JSON summary.

Every number is recomputed from the persisted records of a run; the report
keeps no state of its own.
"""
from __future__ import annotations

import csv
import html
import io
import json
from collections import defaultdict
from dataclasses import dataclass
from decimal import Decimal
from typing import Any, Iterable, Sequence

from ..backtest import PrecisionRecallReport, PredictionRubric, compute_recall, verdict_counts
from ..gateway.ledger import LedgerEntry
from ..judge import JudgeDimension, JudgeTable, aggregate_condition_table
from ..model import GenerationCondition, Knowledge, LawRef, Objective, Theory, derive_seed, digest, from_data, iter_laws, to_data
from ..novelty import TABLE_LABELS, ConsolidatedNovelty, NoveltyDimension, NoveltyTable, novelty_proportion_table
from ..stats import Comparison, compare_conditions
from .config import Config
from .pipeline import load_eval, load_theories, manifest_config, parse_judgments, parse_scores
from .rundir import RunDirectory, write_text


class ReportError(RuntimeError):
    pass


JUDGE_LABELS = {
    JudgeDimension.SPECIFICITY: "Specificity",
    JudgeDimension.EMPIRICAL_SUPPORT: "Empirical Support",
    JudgeDimension.NOVELTY: "Novelty",
    JudgeDimension.PLAUSIBILITY: "Plausibility",
}


def _slug(knowledge: Knowledge, objective: Objective) -> str:
    return GenerationCondition(knowledge, objective).slug


def _fmt(x: float | None, places: int) -> str:
    return "" if x is None else f"{x:.{places}f}"


def _delta(c: Comparison) -> str:
    if c.delta_percent is None:
        return ""
    return f"{c.delta_percent:+d}{c.mark}" if c.delta_percent else f"0{c.mark}"


def _csv(rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow(["" if v is None else v for v in row])
    return buf.getvalue()


# -- judge table --------------------------------------------------------------------


def judge_table(run: RunDirectory, config: Config) -> JudgeTable | None:
    records = load_eval(run, "judge")
    if not records:
        return None
    scores, unscored = [], defaultdict(int)
    for rec in records:
        scores.extend(parse_scores(rec))
        unscored[rec["condition"]] += len(rec["unscored"])
    return aggregate_condition_table(
        scores,
        unscored=dict(unscored),
        n_resamples=int(config["evaluation"]["judge_resamples"]),
        seed=derive_seed(config.seed, "report", "judge"),
    )


def judge_rows(table: JudgeTable) -> list[list[Any]]:
    header = ["dimension", "acc_param", "acc_lit", "acc_delta", "acc_p", "nov_param", "nov_lit", "nov_delta", "nov_p"]
    rows = [header]
    for dim in JudgeDimension:
        a = table.row(dim.value, Objective.ACCURACY.value)
        n = table.row(dim.value, Objective.NOVELTY.value)
        rows.append(
            [JUDGE_LABELS[dim], _fmt(a.param_mean, 4), _fmt(a.lit_mean, 4), _delta(a), _fmt(a.p_value, 4),
             _fmt(n.param_mean, 4), _fmt(n.lit_mean, 4), _delta(n), _fmt(n.p_value, 4)]
        )
    counts = [table.law_counts.get(_slug(k, o), 0) for o in Objective for k in Knowledge]
    unscored = [table.unscored.get(_slug(k, o), 0) for o in Objective for k in Knowledge]
    rows.append(["Number of Samples (Laws)", counts[0], counts[1], "", "", counts[2], counts[3], "", ""])
    rows.append(["Unscored (law, dimension) pairs", unscored[0], unscored[1], "", "", unscored[2], unscored[3], "", ""])
    rows.append(["Predictive Accuracy", "evaluated by backtesting", "", "", "", "", "", "", ""])
    return rows


# -- backtest table -----------------------------------------------------------------


@dataclass(frozen=True)
class BacktestTable:
    reports: dict[str, PrecisionRecallReport]
    rows: tuple[Comparison, ...]

    def row(self, label: str, objective: str) -> Comparison:
        for r in self.rows:
            if r.label == label and r.objective == objective:
                return r
        raise KeyError((label, objective))


BACKTEST_ROWS = ("precision", "law_recall", "prediction_recall", "belief")
BACKTEST_LABELS = {
    "precision": "Precision: Supporting Evidence",
    "law_recall": "Recall: Laws with Some Evidence",
    "prediction_recall": "Recall: Predictions with Some Evidence",
    "belief": "Likelihood of law being true",
}


def backtest_table(run: RunDirectory, config: Config) -> BacktestTable | None:
    records = load_eval(run, "backtest")
    if not records:
        return None
    rubrics: dict[str, dict[str, PredictionRubric]] = defaultdict(dict)
    judgments: dict[str, list] = defaultdict(list)
    beliefs: dict[str, list[float]] = defaultdict(list)
    excluded: dict[str, int] = defaultdict(int)
    for rec in records:
        slug = rec["condition"]
        rubric, js, belief = parse_judgments(rec)
        if rubric is None:
            excluded[slug] += 1
        else:
            rubrics[slug][rubric.law_id] = rubric
            judgments[slug].extend(js)
        if belief is not None and belief.estimate is not None:
            beliefs[slug].append(belief.estimate)
    slugs = sorted(set(rubrics) | set(excluded) | set(beliefs))
    reports = {s: compute_recall(rubrics[s], judgments[s], excluded_laws=excluded[s]) for s in slugs}

    def values(slug: str, key: str) -> list[float]:
        rep = reports.get(slug)
        if key == "belief":
            return beliefs.get(slug, [])
        if rep is None:
            return []
        if key == "precision":
            return [l.precision for l in rep.laws if l.precision is not None]
        if key == "law_recall":
            return [1.0 if l.has_evidence else 0.0 for l in rep.laws]
        return [l.prediction_recall for l in rep.laws]

    n = int(config["evaluation"]["backtest_resamples"])
    rows = []
    for objective in Objective:
        p, l = _slug(Knowledge.PARAMETRIC, objective), _slug(Knowledge.LITERATURE, objective)
        for key in BACKTEST_ROWS:
            c = compare_conditions(key, objective.value, values(p, key), values(l, key), n, derive_seed(config.seed, "report", key, objective.value))
            if key == "prediction_recall":
                # the table value pools predictions; the bootstrap resamples laws
                c = _with_means(c, reports.get(p), reports.get(l))
            rows.append(c)
    return BacktestTable(reports, tuple(rows))


def _with_means(c: Comparison, p: PrecisionRecallReport | None, l: PrecisionRecallReport | None) -> Comparison:
    from dataclasses import replace

    from ..stats import relative_delta_percent

    pm = p.prediction_recall if p else None
    lm = l.prediction_recall if l else None
    return replace(c, param_mean=pm, lit_mean=lm, delta_percent=relative_delta_percent(pm, lm))


def backtest_rows(table: BacktestTable) -> list[list[Any]]:
    rows = [["row", "acc_param", "acc_lit", "acc_delta", "acc_p", "nov_param", "nov_lit", "nov_delta", "nov_p"]]

    def rate_row(key: str) -> list[Any]:
        a = table.row(key, Objective.ACCURACY.value)
        n = table.row(key, Objective.NOVELTY.value)
        return [BACKTEST_LABELS[key], _fmt(a.param_mean, 4), _fmt(a.lit_mean, 4), _delta(a), _fmt(a.p_value, 4),
                _fmt(n.param_mean, 4), _fmt(n.lit_mean, 4), _delta(n), _fmt(n.p_value, 4)]

    def count_row(label: str, get) -> list[Any]:
        vals = []
        for o in Objective:
            for k in Knowledge:
                rep = table.reports.get(_slug(k, o))
                vals.append(get(rep) if rep else "")
        return [label, vals[0], vals[1], "", "", vals[2], vals[3], "", ""]

    for key in ("precision", "law_recall", "prediction_recall"):
        rows.append(rate_row(key))
    rows.append(count_row("Law-Paper Evaluations", lambda r: r.law_paper_evaluations))
    rows.append(count_row("Papers with Relevant Experiments (summed per law)", lambda r: r.papers_with_relevant_experiments))
    rows.append(count_row("Papers with Relevant Experiments (distinct)", lambda r: r.distinct_papers_with_relevant_experiments))
    rows.append(count_row("Laws with at least 1 relevant paper", lambda r: r.laws_with_relevant_paper))
    rows.append(count_row("Avg. Papers per Law with Evidence", lambda r: _fmt(r.avg_papers_per_law_with_evidence, 2)))
    rows.append(count_row("Laws excluded (no rubric)", lambda r: r.excluded_laws))
    rows.append(rate_row("belief"))
    return rows


# -- novelty table ------------------------------------------------------------------


def novelty_table(run: RunDirectory) -> NoveltyTable | None:
    records = load_eval(run, "novelty")
    if not records:
        return None
    done = {r["law_id"] for r in records}
    sample = run.read_json("evals/novelty/sample.json")
    sample = {slug: [l for l in ids if l in done] for slug, ids in sample.items()}
    cons = [from_data(ConsolidatedNovelty, c) for r in records for c in r["consolidations"]]
    return novelty_proportion_table(sample, cons)


def novelty_rows(table: NoveltyTable) -> list[list[Any]]:
    order = [_slug(k, o) for o in Objective for k in Knowledge]
    rows = [["novelty_type", "acc_param", "acc_lit", "nov_param", "nov_lit"]]
    for dim in NoveltyDimension:
        rows.append([TABLE_LABELS[dim]] + [_fmt(table.proportions.get(s, {}).get(dim.value), 2) for s in order])
    rows.append(["Number of Laws Evaluated"] + [table.laws_evaluated.get(s, 0) for s in order])
    rows.append(["Average Papers Per Evaluation"] + [_fmt(table.avg_papers_per_evaluation.get(s), 1) for s in order])
    rows.append(["Total Papers Evaluated"] + [table.total_papers.get(s, 0) for s in order])
    return rows


# -- costs ------------------------------------------------------------------------


COST_ROWS = (
    ("Theory Generation", None),
    ("Literature-Supported", "theory"),
    ("Parametric Only", "theory"),
    ("LLM-as-a-Judge Metrics", "law"),
    ("Predictive Accuracy", "law"),
    ("Surprisal Analysis", "law"),
    ("Novelty Evaluation", "law"),
    ("Overlap Analysis", "law"),
    ("Other", None),
)


def cost_activity(entry: LedgerEntry) -> str:
    """Which cost-table row an entry belongs to."""
    stage = entry.stage
    if stage in ("discovery", "extraction"):
        return "Literature-Supported"
    if stage in ("synthesis", "reflection"):
        return "Parametric Only" if "parametric-" in entry.subject else "Literature-Supported"
    return {
        "judge": "LLM-as-a-Judge Metrics",
        "backtest": "Predictive Accuracy",
        "belief": "Surprisal Analysis",
        "novelty": "Novelty Evaluation",
        "novelty_consolidate": "Novelty Evaluation",
        "overlap": "Overlap Analysis",
    }.get(stage, "Other")


def stage_totals(entries: Sequence[LedgerEntry]) -> dict[str, dict[str, Any]]:
    out: dict[str, dict[str, Any]] = {}
    for e in entries:
        s = out.setdefault(e.stage, {"entries": 0, "input_tokens": 0, "output_tokens": 0, "usd": Decimal(0)})
        s["entries"] += 1
        s["input_tokens"] += e.input_tokens
        s["output_tokens"] += e.output_tokens
        s["usd"] += e.usd
    return dict(sorted(out.items()))


def cost_rows(entries: Sequence[LedgerEntry], units: dict[str, int]) -> list[list[Any]]:
    totals: dict[str, Decimal] = defaultdict(Decimal)
    for e in entries:
        totals[cost_activity(e)] += e.usd
    rows = [["activity", "unit", "units", "total_usd", "usd_per_unit"]]
    for label, unit in COST_ROWS:
        if label == "Theory Generation":
            rows.append([label, "", "", "", ""])
            continue
        total = totals.get(label, Decimal(0))
        n = units.get(label, 0)
        per = (total / n).quantize(Decimal("0.000001")) if unit and n else ""
        rows.append([label, unit or "", n if unit else "", str(total), str(per)])
    rows.append(["Total", "", "", str(sum(totals.values(), Decimal(0))), ""])
    return rows


# -- overlap ------------------------------------------------------------------------


def overlap_rows(curves: list[dict[str, Any]]) -> list[list[Any]]:
    rows = [["objective", "series", "n", "effective_n", "mean", "std", "trials"]]
    for c in curves:
        for p in c["points"]:
            rows.append([c["objective"], c["series"], p["n"], p["effective_n"], f"{p['mean']:.4f}", f"{p['std']:.4f}", p["trials"]])
    return rows


def plot_overlap(curves: list[dict[str, Any]], path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    objectives = sorted({c["objective"] for c in curves})
    fig, axes = plt.subplots(1, max(1, len(objectives)), figsize=(5 * max(1, len(objectives)), 3.6), squeeze=False)
    for ax, objective in zip(axes[0], objectives):
        for c in curves:
            if c["objective"] != objective:
                continue
            ns = [p["n"] for p in c["points"]]
            means = [p["mean"] for p in c["points"]]
            stds = [p["std"] for p in c["points"]]
            ax.errorbar(ns, means, yerr=stds, marker="o", capsize=3, label=c["series"].replace("_", " "))
        ax.set_title(f"{objective}-focused")
        ax.set_xlabel("N (laws sampled)")
        ax.set_ylabel("proportion with a duplicate")
        ax.set_ylim(-0.05, 1.05)
        ax.legend(fontsize=8)
    fig.tight_layout()
    # fixed metadata keeps the file byte-stable across runs
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


# -- HTML ---------------------------------------------------------------------------

CSS = """body{font-family:sans-serif;max-width:1100px;margin:2em auto;color:#222}
table{border-collapse:collapse;margin:1em 0}td,th{border:1px solid #bbb;padding:4px 8px;text-align:left;vertical-align:top}
th{background:#eee}h2{border-bottom:1px solid #ccc}.muted{color:#777}"""


def _page(title: str, body: str) -> str:
    return (
        f"<!DOCTYPE html>\n<html><head><meta charset='utf-8'><title>{html.escape(title)}</title>"
        f"<style>{CSS}</style></head><body>\n<h1>{html.escape(title)}</h1>\n{body}\n</body></html>\n"
    )


def _html_table(rows: list[list[Any]]) -> str:
    head, *body = rows
    out = ["<table><tr>" + "".join(f"<th>{html.escape(str(h))}</th>" for h in head) + "</tr>"]
    for r in body:
        out.append("<tr>" + "".join(f"<td>{html.escape(str(v))}</td>" for v in r) + "</tr>")
    out.append("</table>")
    return "\n".join(out)


def _law_section(
    ref: LawRef,
    kept: bool,
    records_by_uuid: dict[str, dict[str, Any]],
    judge: dict[str, Any] | None,
    backtest: dict[str, Any] | None,
    novelty: dict[str, Any] | None,
    duplicates: list[dict[str, Any]],
) -> str:
    law = ref.law
    e = html.escape
    parts = [f"<h2 id='{e(ref.law_id)}'>{e(law.name)}</h2>"]
    if not kept:
        parts.append("<p class='muted'>Filtered out by self-assessed novelty; not evaluated.</p>")
    parts.append(
        _html_table(
            [
                ["field", "value"],
                ["Law ID", ref.law_id],
                ["Statement", law.statement],
                ["Type", law.law_type.value],
                ["Scope", law.scope],
                ["Self-assessed novelty", law.self_novelty.classification.value],
            ]
        )
    )
    if law.special_cases:
        parts.append("<h3>Special cases</h3><ul>" + "".join(f"<li>{e(s)}</li>" for s in law.special_cases) + "</ul>")
    if law.evidence:
        items = []
        for item in law.evidence:
            sources = []
            for u in item.uuids:
                rec = records_by_uuid.get(u)
                src = rec["header"]["source_info"] if rec else "unresolved"
                sources.append(f"<code>{e(u)}</code> {e(src)}")
            items.append(f"<li>{e(item.description)}<br>{'<br>'.join(sources)}</li>")
        parts.append("<h3>Evidence</h3><ul>" + "".join(items) + "</ul>")
    if judge:
        rows = [["dimension", "score", "rationale"]] + [[s["dimension"], s["score"], s["rationale"]] for s in judge["scores"]]
        rows += [[u["dimension"], "unscored", u["error"]] for u in judge["unscored"]]
        parts.append("<h3>Judge scores</h3>" + _html_table(rows))
    if backtest:
        rubric, judgments, belief = parse_judgments(backtest)
        if rubric is None:
            parts.append(f"<h3>Backtest</h3><p>Excluded: {e(backtest.get('excluded', ''))}</p>")
        else:
            rows = [["prediction", "support", "contradict", "no_evidence", "precision", "strong test"]]
            for p in rubric.predictions:
                js = [j for j in judgments if j.prediction == p.short_name]
                s, c, n = verdict_counts(js)
                prec = s / (s + c) if s + c else None
                rows.append([p.short_name, s, c, n, _fmt(prec, 2) or "no evidence", p.strong_test_requirement])
            parts.append(f"<h3>Backtest ({len(backtest['papers'])} candidate papers)</h3>" + _html_table(rows))
            ev = [j for j in judgments if j.verdict.evidenced]
            if ev:
                parts.append(
                    "<ul>" + "".join(f"<li>{e(j.paper_id)} / {e(j.prediction)}: {e(j.verdict.value)} ({e(j.evidence_locator)})</li>" for j in ev) + "</ul>"
                )
        if belief is not None:
            parts.append(f"<p>Self-assessed belief: {_fmt(belief.estimate, 2) or 'n/a'} ({len(belief.votes)} votes)</p>")
    if novelty:
        rows = [["dimension", "degree", "novel", "what is known", "what is introduced", "what is novel"]]
        for c in novelty["consolidations"]:
            rows.append([c["dimension"], c["degree"], "yes" if c["novel_flag"] else "no", c["what_is_known"], c["what_introduced"], c["what_novel"]])
        parts.append(f"<h3>Qualified novelty ({len(novelty['assessments'])} per-paper assessments)</h3>" + _html_table(rows))
    if duplicates:
        rows = [["other law", "verdict", "reasoning"]]
        for d in duplicates:
            other = d["law_b_id"] if d["law_a_id"] == ref.law_id else d["law_a_id"]
            rows.append([other, d["verdict"], d["reasoning"]])
        parts.append("<h3>Duplicate judgments</h3>" + _html_table(rows))
    return "\n".join(parts)


# -- entry point --------------------------------------------------------------------


def law_units(run: RunDirectory, theories: Sequence[Theory]) -> dict[str, int]:
    by_k = defaultdict(int)
    manifest = run.manifest()
    for q_id in manifest.query_ids:
        for slug in manifest.conditions:
            rel = f"theories/{q_id}/{slug}.raw.json"
            if run.has(rel):
                by_k[GenerationCondition.from_slug(slug).knowledge] += len(run.read_json(rel))
    overlap_laws = set()
    if run.has("evals/overlap/pairs.json"):
        for p in run.read_json("evals/overlap/pairs.json"):
            overlap_laws.update((p["law_a_id"], p["law_b_id"]))
    backtest = load_eval(run, "backtest")
    return {
        "Literature-Supported": by_k[Knowledge.LITERATURE],
        "Parametric Only": by_k[Knowledge.PARAMETRIC],
        "LLM-as-a-Judge Metrics": len(load_eval(run, "judge")),
        "Predictive Accuracy": sum(1 for r in backtest if "rubric" in r),
        "Surprisal Analysis": sum(1 for r in backtest if r.get("belief")),
        "Novelty Evaluation": len(load_eval(run, "novelty")),
        "Overlap Analysis": len(overlap_laws),
    }


def emit_report(run: RunDirectory, config: Config | None = None) -> dict[str, Any]:
    manifest = run.manifest()
    config = config or manifest_config(manifest)
    present = [s for s in ("judge", "backtest", "novelty") if load_eval(run, s)]
    if run.has("evals/overlap/curves.json"):
        present.append("overlap")
    if not present:
        raise ReportError("no evaluation records in this run; run `evaluate` first")

    out = run.path("reports")
    out.mkdir(parents=True, exist_ok=True)
    theories, kept = load_theories(run)
    summary: dict[str, Any] = {"run_id": manifest.run_id, "suites": present}
    sections = []

    jt = judge_table(run, config)
    if jt is not None:
        rows = judge_rows(jt)
        write_text(out / "judge_table.csv", _csv(rows))
        summary["judge"] = {"rows": [to_data(r) for r in jt.rows], "law_counts": jt.law_counts, "unscored": jt.unscored}
        sections.append("<h2>LLM-as-a-judge metrics</h2>" + _html_table(rows))

    bt = backtest_table(run, config)
    if bt is not None:
        rows = backtest_rows(bt)
        write_text(out / "backtest_table.csv", _csv(rows))
        summary["backtest"] = {
            "rows": [to_data(r) for r in bt.rows],
            "reports": {k: {kk: vv for kk, vv in to_data(v).items() if kk != "laws"} for k, v in bt.reports.items()},
        }
        sections.append("<h2>Predictive accuracy (backtesting)</h2>" + _html_table(rows))

    nt = novelty_table(run)
    if nt is not None:
        rows = novelty_rows(nt)
        write_text(out / "novelty_table.csv", _csv(rows))
        summary["novelty"] = to_data(nt)
        sections.append("<h2>Qualified novelty</h2>" + _html_table(rows))

    if "overlap" in present:
        curves = run.read_json("evals/overlap/curves.json")
        rows = overlap_rows(curves)
        write_text(out / "overlap_curves.csv", _csv(rows))
        if curves:
            plot_overlap(curves, out / "overlap.png")
        summary["overlap"] = curves
        sections.append("<h2>Overlap</h2>" + _html_table(rows) + ("<p><img src='overlap.png' alt='overlap curves'></p>" if curves else ""))

    entries = run.ledger()
    costs = cost_rows(entries, law_units(run, theories))
    write_text(out / "cost_table.csv", _csv(costs))
    st = stage_totals(entries)
    st_rows = [["stage", "entries", "input_tokens", "output_tokens", "usd"]] + [
        [k, v["entries"], v["input_tokens"], v["output_tokens"], str(v["usd"])] for k, v in st.items()
    ]
    write_text(out / "stage_totals.csv", _csv(st_rows))
    ledger_total = sum((e.usd for e in entries), Decimal(0))
    summary["costs"] = {"rows": costs[1:], "stage_totals": {k: str(v["usd"]) for k, v in st.items()}, "total_usd": str(ledger_total)}
    sections.append("<h2>Costs</h2>" + _html_table(costs) + "<p><a href='ledger.html'>Full ledger</a></p>")

    ledger_rows = [["#", "stage", "model", "asset", "subject", "input", "output", "usd"]] + [
        [i, e.stage, e.model_id, e.prompt_asset_id, e.subject, e.input_tokens, e.output_tokens, str(e.usd)]
        for i, e in enumerate(entries, 1)
    ]
    write_text(out / "ledger.html", _page("Cost ledger", _html_table(st_rows) + f"<p>Total: {ledger_total} USD</p>" + _html_table(ledger_rows)))

    # per-theory pages
    records_by_uuid = {}
    for q_id in manifest.query_ids:
        rel = f"extractions/{q_id}.json"
        if run.has(rel):
            records_by_uuid.update({r["uuid"]: r for r in run.read_json(rel)})
    judge = {r["law_id"]: r for r in load_eval(run, "judge")}
    backtest = {r["law_id"]: r for r in load_eval(run, "backtest")}
    novelty = {r["law_id"]: r for r in load_eval(run, "novelty")}
    pairs = run.read_json("evals/overlap/pairs.json") if run.has("evals/overlap/pairs.json") else []
    links = []
    for t in sorted(theories, key=lambda t: t.id):
        body = [f"<p><b>Condition:</b> {html.escape(t.condition.slug)} &nbsp; <b>Query:</b> {html.escape(t.provenance.query_id)}</p>",
                f"<p>{html.escape(t.description)}</p>"]
        for ref in iter_laws([t]):
            dups = [p for p in pairs if ref.law_id in (p["law_a_id"], p["law_b_id"])]
            body.append(_law_section(ref, ref.law_id in kept, records_by_uuid, judge.get(ref.law_id), backtest.get(ref.law_id), novelty.get(ref.law_id), dups))
        write_text(out / "theories" / f"{t.id}.html", _page(t.name, "\n".join(body)))
        links.append(f"<li><a href='theories/{html.escape(t.id)}.html'>{html.escape(t.name)}</a> <span class='muted'>{html.escape(t.condition.slug)}</span></li>")
    index = "\n".join(sections) + "<h2>Theories</h2><ul>" + "".join(links) + "</ul>"
    write_text(out / "index.html", _page(f"Run {manifest.run_id}", index))

    summary["report_digest"] = digest({k: v for k, v in summary.items()})
    write_text(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True, ensure_ascii=False) + "\n")
    return summary
