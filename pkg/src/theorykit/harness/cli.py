"""Command line entry point: theorize, evaluate, report, queries."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from ..model import GenerationCondition, Knowledge, Objective, TheoryQuery, dumps, from_data, to_data
from .config import Config, ConfigError, parse_window
from .pipeline import SUITES, evaluate, make_gateway, make_provider, manifest_config, theorize
from .report import ReportError, emit_report
from .rundir import RunDirectory, RunLocked, StageError

log = logging.getLogger("theorykit")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML configuration file")
    p.add_argument("--seed", type=int, help="root random seed")
    p.add_argument("--window", help="knowledge window as CUTOFF,SUPPLEMENT_END,HOLDOUT_END")
    p.add_argument("--mock", action="store_true", help="use the bundled offline fixture instead of live providers")
    p.add_argument("--workers", type=int, help="parallel tasks per stage")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="theorykit", description="Literature-grounded theory synthesis and evaluation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("theorize", help="discover, extract and synthesize theories for one or more queries")
    t.add_argument("--run-dir", type=Path, required=True)
    src = t.add_mutually_exclusive_group()
    src.add_argument("--query", help="theory query text")
    src.add_argument("--query-file", type=Path, help="JSON list of queries or one query per line")
    t.add_argument("--knowledge", choices=["parametric", "literature", "both"], default="both")
    t.add_argument("--objective", choices=["accuracy", "novelty", "both"], default="both")
    _common(t)

    e = sub.add_parser("evaluate", help="run evaluation suites on a theorized run")
    e.add_argument("--run-dir", type=Path, required=True)
    e.add_argument("--suites", default=",".join(SUITES), help=f"comma-separated subset of {','.join(SUITES)}")
    _common(e)

    r = sub.add_parser("report", help="render CSV tables, plots and HTML pages from a run's records")
    r.add_argument("--run-dir", type=Path, required=True)

    q = sub.add_parser("queries", help="generate theory queries from seed papers")
    q.add_argument("--papers", type=Path, help="JSON list of paper records")
    q.add_argument("--out", type=Path, required=True, help="directory for queries.json and the cost ledger")
    _common(q)
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    out: dict[str, Any] = {}
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    if getattr(args, "window", None):
        out["window"] = parse_window(args.window)
    if getattr(args, "workers", None):
        out["workers"] = args.workers
    return out


def _conditions(knowledge: str, objective: str) -> list[GenerationCondition]:
    ks = [Knowledge.PARAMETRIC, Knowledge.LITERATURE] if knowledge == "both" else [Knowledge(knowledge)]
    os_ = [Objective.ACCURACY, Objective.NOVELTY] if objective == "both" else [Objective(objective)]
    return [GenerationCondition(k, o) for o in os_ for k in ks]


def _read_queries(args: argparse.Namespace) -> list[TheoryQuery]:
    if args.query:
        return [TheoryQuery("q0", args.query.strip())]
    if args.query_file:
        text = args.query_file.read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError:
            lines = [l.strip() for l in text.splitlines() if l.strip()]
            return [TheoryQuery(f"q{i}", l) for i, l in enumerate(lines)]
        out = []
        for i, item in enumerate(data):
            if isinstance(item, str):
                out.append(TheoryQuery(f"q{i}", item))
            else:
                item = dict(item)
                item.setdefault("id", f"q{i}")
                out.append(from_data(TheoryQuery, item))
        return out
    if args.mock:
        from ..fixtures import load_fixture

        return [load_fixture().query]
    raise ConfigError("give --query or --query-file (or --mock for the bundled fixture query)")


def cmd_theorize(args: argparse.Namespace) -> int:
    config = Config.load(args.config, mock=args.mock, overrides=_overrides(args))
    run = RunDirectory(args.run_dir)
    with run.lock():
        result = theorize(run, _read_queries(args), _conditions(args.knowledge, args.objective), config, mock=args.mock)
    for q_id, by_cond in result.results.items():
        for slug, res in by_cond.items():
            print(f"{q_id} {slug}: {len(res.theories)} theories, {len(res.kept)} laws kept, "
                  f"{len(res.filtered)} filtered, {len(res.quarantined)} quarantined")
    print(f"run digest {run.run_digest()}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    run = RunDirectory(args.run_dir)
    manifest = run.manifest()
    base = manifest_config(manifest)
    overrides = _overrides(args)
    config = Config.load(args.config, mock=manifest.mock, overrides=overrides) if (args.config or overrides) else base
    suites = [s.strip() for s in args.suites.split(",") if s.strip()]
    with run.lock():
        summary = evaluate(run, suites, config=config)
    for suite, counts in summary.items():
        print(f"{suite}: {json.dumps(counts, sort_keys=True)}")
    if not suites:
        print("no suites requested")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    run = RunDirectory(args.run_dir)
    with run.lock():
        summary = emit_report(run)
    print(f"report written to {run.path('reports')} (suites: {', '.join(summary['suites'])})")
    return 0


def cmd_queries(args: argparse.Namespace) -> int:
    from ..querygen import generate_query_set, select_seed_papers
    from ..model import PaperRecord

    config = Config.load(args.config, mock=args.mock, overrides=_overrides(args))
    if args.papers:
        papers = [from_data(PaperRecord, p) for p in json.loads(args.papers.read_text())]
    elif args.mock:
        from ..fixtures import load_fixture

        papers = load_fixture().seed_papers
    else:
        raise ConfigError("give --papers (or --mock for the bundled seed papers)")
    seeds = select_seed_papers(papers, config.window.model_cutoff)
    run = RunDirectory(args.out)
    with run.lock():
        gateway = make_gateway(config, run, make_provider(args.mock))
        result = generate_query_set(seeds, gateway, config.workers)
        (run.root / "queries.json").write_text(dumps([to_data(q) for q in result.queries]))
    print(f"{len(result.queries)} queries from {len(result.pairs)} seed papers "
          f"({len(papers) - len(seeds)} outside the seed window, {len(result.skipped)} skipped)")
    return 0


COMMANDS = {"theorize": cmd_theorize, "evaluate": cmd_evaluate, "report": cmd_report, "queries": cmd_queries}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, RunLocked, ReportError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
