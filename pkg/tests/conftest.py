from __future__ import annotations

from datetime import date

import pytest

from theorykit.harness.config import Config
from theorykit.harness.pipeline import evaluate, theorize
from theorykit.harness.report import emit_report
from theorykit.harness.rundir import RunDirectory
from theorykit.fixtures import load_fixture
from theorykit.model import (
    ALL_CONDITIONS,
    GenerationCondition,
    Knowledge,
    Law,
    LawRef,
    LawType,
    Objective,
    PaperRecord,
    SelfNoveltyAssessment,
    SelfNoveltyClass,
)


def make_law(name: str = "Law A", statement: str = "More feedback raises learning gains.", cls: str = "new", **kw) -> Law:
    return Law(
        name=name,
        statement=statement,
        law_type=LawType.QUALITATIVE,
        scope=kw.pop("scope", "Classroom tutoring."),
        self_novelty=SelfNoveltyAssessment("prior work", "new bit", "because", SelfNoveltyClass(cls)),
        **kw,
    )


def make_ref(law_id: str = "t0.l0", law: Law | None = None, slug: str = "literature-accuracy", query_id: str = "q0") -> LawRef:
    return LawRef(law_id, law or make_law(), law_id.split(".")[0], "Theory", "A theory.", GenerationCondition.from_slug(slug), query_id)


def make_paper(pid: str, text: str = "", d: date = date(2024, 1, 1), **kw) -> PaperRecord:
    return PaperRecord(pid, kw.pop("title", f"Paper {pid}"), d, full_text=text, **kw)


@pytest.fixture(scope="session")
def mock_run(tmp_path_factory):
    """One full mock pipeline run shared by the harness and acceptance tests."""
    root = tmp_path_factory.mktemp("run")
    run = RunDirectory(root)
    config = Config.load(mock=True)
    with run.lock():
        result = theorize(run, [load_fixture().query], list(ALL_CONDITIONS), config, mock=True)
        evaluate(run, ["judge", "backtest", "novelty", "overlap"])
        summary = emit_report(run)
    return {"run": run, "result": result, "summary": summary, "config": config}


__all__ = ["make_law", "make_ref", "make_paper", "Knowledge", "Objective"]
