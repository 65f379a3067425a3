"""Stage orchestration for theorize and evaluate; every stage is resumable from disk."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

from ..backtest import (
    BeliefRecord,
    EvidenceJudgment,
    PredictionRubric,
    find_evaluation_papers,
    generate_rubric,
    judge_law,
    self_belief,
)
from ..discovery import RetrievalPlan, discover_corpus, generation_filter, reformulate_query
from ..extraction import RecordCounter, extract_corpus, generate_schema, synthesis_inputs
from ..gateway import ContractViolation, CostLedger, Gateway, GatewayError, RetryPolicy, TokenBucket
from ..judge import JudgeDimension, JudgeScore, ScoringError, score_law
from ..model import (
    ALL_CONDITIONS,
    Corpus,
    ExtractionRecord,
    ExtractionSchema,
    GenerationCondition,
    Knowledge,
    LawRef,
    Objective,
    PaperRecord,
    RunManifest,
    Theory,
    TheoryQuery,
    derive_seed,
    digest,
    from_data,
    iter_laws,
    to_data,
    validate_evidence_links,
)
from ..novelty import Degree, evaluate_law_novelty, sample_laws
from ..overlap import PairCache, Series, llm_duplicate_oracle, monte_carlo_curve
from ..synthesis import (
    assemble_evidence,
    filter_laws_by_self_novelty,
    reflect,
    synthesize_theories,
)
from .config import Config
from .rundir import RunDirectory, StageError

log = logging.getLogger(__name__)

SUITES = ("judge", "backtest", "novelty", "overlap")


# -- setup ------------------------------------------------------------------------


def make_provider(mock: bool):
    if mock:
        from ..fixtures import fixture_provider

        return fixture_provider()
    from ..gateway.http import HttpProvider

    return HttpProvider.from_env()


def make_gateway(config: Config, run: RunDirectory, provider) -> Gateway:
    ledger = CostLedger(config.prices)
    ledger.subscribe(run.append_ledger)
    g = config.section("gateway")
    return Gateway(
        provider=provider,
        ledger=ledger,
        models=config.models,
        default_model=config.models["default"],
        seed=config.seed,
        retry=RetryPolicy(max_attempts=int(g["max_attempts"]), base_delay=float(g["base_delay"]), max_delay=float(g["max_delay"])),
        limiter=TokenBucket(g.get("rate_per_second")),
        cache_dir=run.cache_dir,
    )


def build_manifest(
    config: Config, queries: Sequence[TheoryQuery], conditions: Sequence[GenerationCondition], mock: bool
) -> RunManifest:
    query_ids = tuple(q.id for q in queries)
    slugs = tuple(c.slug for c in conditions)
    run_id = digest({"queries": [to_data(q) for q in queries], "conditions": slugs, "config": config.digest})[:16]
    return RunManifest(
        run_id=run_id,
        random_seed=config.seed,
        models=config.models,
        knowledge_window=config.window,
        config_digest=config.digest,
        conditions=slugs,
        temperatures={c.slug: c.temperature for c in conditions},
        query_ids=query_ids,
        mock=mock,
        extra={"config": config.data, "queries": [to_data(q) for q in queries]},
    )


def manifest_config(manifest: RunManifest) -> Config:
    return Config(dict(manifest.extra["config"]))


def manifest_queries(manifest: RunManifest) -> list[TheoryQuery]:
    return [from_data(TheoryQuery, q) for q in manifest.extra["queries"]]


def _stage(run: RunDirectory, name: str, fn: Callable[[], Any]) -> Any:
    try:
        with run.timed(name):
            return fn()
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


# -- theorize ---------------------------------------------------------------------


def _load_list(run: RunDirectory, rel: str, cls: type) -> list:
    return [from_data(cls, x) for x in run.read_json(rel)]


def _paths(q: TheoryQuery) -> dict[str, str]:
    return {
        "corpus": f"corpus/{q.id}.json",
        "schema": f"schemas/{q.id}.json",
        "extractions": f"extractions/{q.id}.json",
    }


def theory_path(q_id: str, slug: str, kind: str = "") -> str:
    suffix = f".{kind}" if kind else ""
    return f"theories/{q_id}/{slug}{suffix}.json"


def run_discovery(run: RunDirectory, q: TheoryQuery, gateway: Gateway, config: Config) -> Corpus:
    stage, rel = f"discovery-{q.id}", _paths(q)["corpus"]
    if run.is_done(stage):
        return from_data(Corpus, run.read_json(rel))

    def go():
        k = int(config["discovery"]["target_size"])
        plan = RetrievalPlan(q, reformulate_query(q, gateway), k, generation_filter(config.window, k))
        corpus = discover_corpus(plan, gateway, config.workers)
        run.write_record(rel, corpus)
        run.mark_done(stage, {"query": digest(q)}, [rel])
        return corpus

    return _stage(run, stage, go)


def run_extraction(
    run: RunDirectory, q: TheoryQuery, corpus: Corpus, gateway: Gateway, config: Config, counter: RecordCounter
) -> tuple[ExtractionSchema, list[ExtractionRecord]]:
    paths = _paths(q)
    stage = f"extraction-{q.id}"
    if run.is_done(stage):
        schema = from_data(ExtractionSchema, run.read_json(paths["schema"]))
        records = _load_list(run, paths["extractions"], ExtractionRecord)
        counter.next_number = max([counter.next_number] + [r.record_number + 1 for r in records])
        return schema, records

    def go():
        schema = generate_schema(q, gateway)
        run.write_record(paths["schema"], schema)
        records = extract_corpus(corpus, schema, gateway, counter, config.workers)
        run.write_record(paths["extractions"], records)
        run.mark_done(stage, {"corpus": run.file_digest(paths["corpus"])}, [paths["schema"], paths["extractions"]])
        return schema, records

    return _stage(run, stage, go)


@dataclass
class ConditionResult:
    condition: GenerationCondition
    theories: list[Theory]
    kept: list[str]
    filtered: list[str]
    quarantined: list[str] = field(default_factory=list)


def run_condition(
    run: RunDirectory,
    q: TheoryQuery,
    condition: GenerationCondition,
    records: Sequence[ExtractionRecord],
    gateway: Gateway,
    config: Config,
) -> ConditionResult:
    slug = condition.slug
    stage = f"synthesis-{q.id}-{slug}"
    final = theory_path(q.id, slug)
    if run.is_done(stage):
        data = run.read_json(final)
        return ConditionResult(
            condition, [from_data(Theory, t) for t in data["theories"]], data["kept"], data["filtered"], data["quarantined"]
        )

    def go():
        syn = config.section("synthesis")
        seed = derive_seed(config.seed, q.id, slug)
        if condition.knowledge is Knowledge.LITERATURE:
            bundle = assemble_evidence(synthesis_inputs(records), int(syn["token_budget"]), seed)
        else:
            bundle = assemble_evidence([], 1, seed)
        raw = synthesize_theories(q, bundle, condition, gateway, n_theories=int(syn["n_theories"]), seed=seed)
        run.write_record(theory_path(q.id, slug, "raw"), raw)
        theories = [reflect(t, bundle, gateway, q) for t in raw] if syn.get("reflect", True) else raw
        good, quarantined = [], []
        for t in theories:
            violations = validate_evidence_links(t, records)
            if violations:
                quarantined.append(t.id)
                run.write_record(
                    f"quarantine/{t.id}.json", {"theory": t, "violations": [str(v) for v in violations]}
                )
            else:
                good.append(t)
        result = filter_laws_by_self_novelty(good)
        payload = {
            "condition": slug,
            "bundle_digest": bundle.digest,
            "theories": list(result.theories),
            "kept": [r.law_id for r in result.kept],
            "filtered": [r.law_id for r in result.filtered],
            "filtered_fraction": result.filtered_fraction,
            "quarantined": quarantined,
        }
        run.write_record(final, payload)
        run.mark_done(
            stage,
            {"extractions": run.file_digest(_paths(q)["extractions"]), "bundle": bundle.digest},
            [theory_path(q.id, slug, "raw"), final],
        )
        return ConditionResult(condition, list(result.theories), payload["kept"], payload["filtered"], quarantined)

    return _stage(run, stage, go)


@dataclass
class TheorizeResult:
    run: RunDirectory
    results: dict[str, dict[str, ConditionResult]]
    gateway: Gateway


def theorize(
    run: RunDirectory,
    queries: Sequence[TheoryQuery],
    conditions: Sequence[GenerationCondition],
    config: Config,
    *,
    mock: bool = False,
    provider=None,
) -> TheorizeResult:
    manifest = build_manifest(config, queries, conditions, mock)
    run.create(manifest)
    gateway = make_gateway(config, run, provider if provider is not None else make_provider(mock))
    counter = RecordCounter()
    results: dict[str, dict[str, ConditionResult]] = {}
    for q in queries:
        needs_corpus = any(c.knowledge is Knowledge.LITERATURE for c in conditions)
        records: list[ExtractionRecord] = []
        # the reference corpus is also what novelty is judged against, so it is built for every query
        corpus = run_discovery(run, q, gateway, config)
        if needs_corpus:
            _, records = run_extraction(run, q, corpus, gateway, config, counter)
        results[q.id] = {c.slug: run_condition(run, q, c, records, gateway, config) for c in conditions}
    return TheorizeResult(run, results, gateway)


# -- evaluate ---------------------------------------------------------------------


def load_theories(run: RunDirectory) -> tuple[list[Theory], set[str]]:
    """All persisted theories and the ids of laws that survived filtering."""
    manifest = run.manifest()
    theories, kept = [], set()
    for q_id in manifest.query_ids:
        for slug in manifest.conditions:
            rel = theory_path(q_id, slug)
            if not run.has(rel):
                continue
            data = run.read_json(rel)
            theories.extend(from_data(Theory, t) for t in data["theories"])
            kept.update(data["kept"])
    return theories, kept


def evaluated_laws(run: RunDirectory) -> list[LawRef]:
    theories, kept = load_theories(run)
    return sorted((r for r in iter_laws(theories) if r.law_id in kept), key=lambda r: r.law_id)


def _law_file(suite: str, law_id: str) -> str:
    return f"evals/{suite}/{law_id}.json"


def _per_law(
    run: RunDirectory, suite: str, refs: Sequence[LawRef], fn: Callable[[LawRef], Any], workers: int
) -> dict[str, int]:
    """Run ``fn`` for each law lacking a record; failures are recorded, never raised."""
    from ..gateway import parallel_map

    todo = [r for r in refs if not run.has(_law_file(suite, r.law_id))]

    def one(ref: LawRef):
        try:
            return ref, fn(ref), None
        except (GatewayError, ScoringError, ValueError) as exc:
            return ref, None, f"{type(exc).__name__}: {exc}"

    failures = {}
    for ref, record, err in parallel_map(one, todo, workers):
        if err is not None:
            failures[ref.law_id] = err
            log.warning("%s failed for %s: %s", suite, ref.law_id, err)
        else:
            run.write_record(_law_file(suite, ref.law_id), record)
    fail_rel = f"evals/{suite}/failures.json"
    previous = run.read_json(fail_rel) if run.has(fail_rel) else {}
    previous.update(failures)
    run.write_record(fail_rel, dict(sorted(previous.items())))
    return {"evaluated": len(todo) - len(failures), "failed": len(failures)}


def judge_suite(run: RunDirectory, refs: Sequence[LawRef], gateway: Gateway, config: Config) -> dict[str, int]:
    def one(ref: LawRef):
        scores, unscored = [], []
        for dim in JudgeDimension:
            try:
                scores.append(score_law(ref, dim, gateway))
            except ScoringError as exc:
                unscored.append({"dimension": dim.value, "error": str(exc)})
        return {"law_id": ref.law_id, "condition": ref.condition.slug, "scores": scores, "unscored": unscored}

    return _per_law(run, "judge", refs, one, config.workers)


def backtest_suite(run: RunDirectory, refs: Sequence[LawRef], gateway: Gateway, config: Config) -> dict[str, int]:
    ev = config.section("evaluation")
    window = config.window

    def one(ref: LawRef):
        belief = self_belief(ref, gateway, int(ev["belief_samples"]))
        try:
            rubric = generate_rubric(ref, gateway)
        except ContractViolation as exc:
            return {"law_id": ref.law_id, "condition": ref.condition.slug, "excluded": str(exc), "belief": belief}
        papers = find_evaluation_papers(rubric, ref, window, gateway, limit_per_query=int(ev["limit_per_query"]))
        judgments = judge_law(rubric, papers, gateway)
        return {
            "law_id": ref.law_id,
            "condition": ref.condition.slug,
            "rubric": rubric,
            "papers": [p.paper_id for p in papers],
            "papers_without_text": [p.paper_id for p in papers if not p.has_full_text],
            "judgments": judgments,
            "belief": belief,
        }

    return _per_law(run, "backtest", refs, one, config.workers)


def novelty_suite(run: RunDirectory, refs: Sequence[LawRef], gateway: Gateway, config: Config) -> dict[str, int]:
    ev = config.section("evaluation")
    n = int(ev["novelty_sample"])
    novel = frozenset(Degree(d) for d in ev["novel_degrees"])
    by_condition: dict[str, list[str]] = {}
    for r in refs:
        by_condition.setdefault(r.condition.slug, []).append(r.law_id)
    sample = {slug: sample_laws(ids, n, derive_seed(config.seed, "novelty", slug)) for slug, ids in sorted(by_condition.items())}
    run.write_record("evals/novelty/sample.json", sample)
    chosen = {law_id for ids in sample.values() for law_id in ids}
    corpora: dict[str, list[PaperRecord]] = {}

    def corpus_for(q_id: str) -> list[PaperRecord]:
        if q_id not in corpora:
            corpora[q_id] = list(from_data(Corpus, run.read_json(f"corpus/{q_id}.json")).papers)
        return corpora[q_id]

    def one(ref: LawRef):
        result = evaluate_law_novelty(ref, corpus_for(ref.query_id), gateway, novel_degrees=novel)
        return {"law_id": ref.law_id, "condition": ref.condition.slug, **to_data(result)}

    return _per_law(run, "novelty", [r for r in refs if r.law_id in chosen], one, 1)


def overlap_pools(refs: Sequence[LawRef], objective: Objective) -> dict[Series, tuple[list[str], list[str]]]:
    param = sorted(r.law_id for r in refs if r.condition == GenerationCondition(Knowledge.PARAMETRIC, objective))
    lit = sorted(r.law_id for r in refs if r.condition == GenerationCondition(Knowledge.LITERATURE, objective))
    pools = {}
    if len(param) > 1:
        pools[Series.WITHIN_PARAMETRIC] = (param, param)
    if len(lit) > 1:
        pools[Series.WITHIN_LITERATURE] = (lit, lit)
    if param and lit:
        pools[Series.ACROSS] = (param, lit)
    return pools


def overlap_suite(run: RunDirectory, refs: Sequence[LawRef], gateway: Gateway, config: Config) -> dict[str, int]:
    ev = config.section("evaluation")
    pairs_rel = "evals/overlap/pairs.json"
    cache = PairCache()
    if run.has(pairs_rel):
        from ..overlap import DuplicateJudgment

        cache = PairCache(from_data(DuplicateJudgment, j) for j in run.read_json(pairs_rel))
    by_id = {r.law_id: r for r in refs}
    judge = llm_duplicate_oracle(by_id, gateway, cache)
    curves = []
    failures = 0
    for objective in Objective:
        for series, (pool_a, pool_b) in overlap_pools(refs, objective).items():
            try:
                curve = monte_carlo_curve(
                    pool_a,
                    pool_b,
                    [int(n) for n in ev["overlap_n_values"]],
                    judge,
                    samples_per_point=int(ev["overlap_samples"]),
                    seed=derive_seed(config.seed, "overlap", objective.value),
                    series=series,
                )
            except GatewayError as exc:
                failures += 1
                log.warning("overlap %s/%s failed: %s", objective.value, series.value, exc)
                continue
            curves.append({"objective": objective.value, **to_data(curve)})
    run.write_record(pairs_rel, cache.judgments())
    run.write_record("evals/overlap/curves.json", curves)
    return {"evaluated": len(curves), "failed": failures, "comparisons": len(cache)}


SUITE_FUNCS = {"judge": judge_suite, "backtest": backtest_suite, "novelty": novelty_suite, "overlap": overlap_suite}


def evaluate(run: RunDirectory, suites: Iterable[str], *, provider=None, config: Config | None = None) -> dict[str, Any]:
    suites = [s for s in suites if s]
    unknown = [s for s in suites if s not in SUITES]
    if unknown:
        raise ValueError(f"unknown suites {unknown}; choose from {', '.join(SUITES)}")
    if not suites:
        return {}
    manifest = run.manifest()
    config = config or manifest_config(manifest)
    refs = evaluated_laws(run)
    gateway = None
    summary: dict[str, Any] = {}
    for suite in suites:
        stage = f"evaluate-{suite}"
        if run.is_done(stage):
            summary[suite] = run.marker(stage)["inputs"].get("summary", {})
            continue
        if gateway is None:
            gateway = make_gateway(config, run, provider if provider is not None else make_provider(manifest.mock))
        counts = _stage(run, stage, lambda: SUITE_FUNCS[suite](run, refs, gateway, config))
        outputs = sorted(p.relative_to(run.root).as_posix() for p in run.path("evals", suite).glob("*.json"))
        run.mark_done(stage, {"laws": digest(sorted(r.law_id for r in refs)), "summary": json.dumps(counts, sort_keys=True)}, outputs)
        summary[suite] = counts
    return summary


def load_eval(run: RunDirectory, suite: str) -> list[dict[str, Any]]:
    out = []
    for p in sorted(run.path("evals", suite).glob("*.json")):
        if p.name in ("failures.json", "sample.json", "pairs.json", "curves.json"):
            continue
        out.append(json.loads(p.read_text()))
    return out


def parse_judgments(record: dict[str, Any]) -> tuple[PredictionRubric | None, list[EvidenceJudgment], BeliefRecord | None]:
    rubric = from_data(PredictionRubric, record["rubric"]) if "rubric" in record else None
    judgments = [from_data(EvidenceJudgment, j) for j in record.get("judgments", [])]
    belief = from_data(BeliefRecord, record["belief"]) if record.get("belief") else None
    return rubric, judgments, belief


def parse_scores(record: dict[str, Any]) -> list[JudgeScore]:
    return [from_data(JudgeScore, s) for s in record["scores"]]


__all__ = [
    "ALL_CONDITIONS",
    "SUITES",
    "evaluate",
    "evaluated_laws",
    "load_eval",
    "load_theories",
    "theorize",
]
