"""Backtesting laws against papers published after the generation window."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

from .gateway import ChatRequest, ContractViolation, Gateway, parallel_map
from .model import KnowledgeWindow, LawRef, PaperRecord, RecordError, to_data
from .discovery import holdout_filter

STAGE = "backtest"
BELIEF_STAGE = "belief"


class Verdict(str, Enum):
    SUPPORT = "support"
    CONTRADICT = "contradict"
    NO_EVIDENCE = "no_evidence"

    @property
    def evidenced(self) -> bool:
        return self is not Verdict.NO_EVIDENCE


@dataclass(frozen=True)
class Prediction:
    short_name: str
    specific_prediction: str
    operational_signals: tuple[str, ...]
    strong_test_requirement: str
    support_criteria: str
    contradiction_criteria: str

    def __post_init__(self):
        object.__setattr__(self, "operational_signals", tuple(str(s) for s in self.operational_signals))
        for name in ("short_name", "specific_prediction", "strong_test_requirement", "support_criteria", "contradiction_criteria"):
            if not str(getattr(self, name)).strip():
                raise RecordError(f"prediction field {name} is empty")
        if not any(s.strip() for s in self.operational_signals):
            raise RecordError("prediction has no operational signals")


@dataclass(frozen=True)
class PredictionRubric:
    law_id: str
    predictions: tuple[Prediction, ...]

    def __post_init__(self):
        object.__setattr__(self, "predictions", tuple(self.predictions))
        names = [p.short_name for p in self.predictions]
        if len(set(names)) != len(names):
            raise RecordError(f"rubric for {self.law_id} repeats prediction short_names")

    @property
    def short_names(self) -> list[str]:
        return [p.short_name for p in self.predictions]


@dataclass(frozen=True)
class EvidenceJudgment:
    law_id: str
    prediction: str
    paper_id: str
    verdict: Verdict
    evidence_locator: str = ""
    rationale: str = ""
    audit: str = ""  # set when the verdict was imposed rather than judged

    def __post_init__(self):
        object.__setattr__(self, "verdict", Verdict(self.verdict))
        if self.verdict.evidenced and not self.evidence_locator.strip():
            raise RecordError(f"{self.verdict.value} judgment needs an evidence locator")


# -- rubric ---------------------------------------------------------------------


def _parse_rubric(obj: dict[str, Any], law_id: str) -> PredictionRubric:
    raw = obj["predictions"]
    if not isinstance(raw, list) or not raw:
        raise ContractViolation("rubric has no predictions")
    preds = []
    for p in raw:
        signals = p.get("operational_signals") or []
        if isinstance(signals, str):
            signals = [signals]
        preds.append(
            Prediction(
                short_name=str(p.get("short_name", "")).strip(),
                specific_prediction=str(p.get("specific_prediction", "")),
                operational_signals=tuple(signals),
                strong_test_requirement=str(p.get("strong_test_requirement", "")),
                support_criteria=str(p.get("support_criteria", "")),
                contradiction_criteria=str(p.get("contradiction_criteria", "")),
            )
        )
    return PredictionRubric(law_id, tuple(preds))


def generate_rubric(ref: LawRef, gateway: Gateway) -> PredictionRubric:
    """Operationalize a law into predictions; ContractViolation after one reprompt."""
    law = to_data(ref.law)
    law.pop("self_novelty", None)
    return gateway.chat_structured(
        ChatRequest(
            "generate_rubric",
            {"theory_name": ref.theory_name, "law": json.dumps(law, sort_keys=True, ensure_ascii=False)},
            max_output_tokens=4096,
            stage=STAGE,
            subject=ref.law_id,
        ),
        lambda obj: _parse_rubric(obj, ref.law_id),
    )


# -- candidate papers -----------------------------------------------------------


def evaluation_queries(rubric: PredictionRubric, ref: LawRef) -> list[str]:
    """One search per prediction plus one for the law statement."""
    return [p.specific_prediction for p in rubric.predictions] + [ref.law.statement]


def find_evaluation_papers(
    rubric: PredictionRubric,
    ref: LawRef,
    window: KnowledgeWindow,
    gateway: Gateway,
    *,
    limit_per_query: int = 20,
) -> list[PaperRecord]:
    """Union of holdout-window hits, deduplicated, ordered by paper_id, with full text attached."""
    filters = holdout_filter(window, limit_per_query)
    found: dict[str, PaperRecord] = {}
    for query in evaluation_queries(rubric, ref):
        for hit in gateway.search_papers(query, filters):
            if window.in_holdout(hit.paper.publication_date):
                found.setdefault(hit.paper.paper_id, hit.paper)
    papers = [found[k] for k in sorted(found)]
    out = []
    for p in papers:
        text = p.full_text or gateway.fetch_full_text(p.paper_id) or ""
        out.append(replace(p, full_text=text))
    return out


# -- judging --------------------------------------------------------------------


def prediction_payload(p: Prediction) -> str:
    return json.dumps(to_data(p), sort_keys=True, ensure_ascii=False)


def judge_evidence(paper: PaperRecord, prediction: Prediction, law_id: str, gateway: Gateway) -> EvidenceJudgment:
    """One verdict per (paper, prediction); no full text or a broken contract yield no_evidence."""
    base = EvidenceJudgment(law_id, prediction.short_name, paper.paper_id, Verdict.NO_EVIDENCE)
    if not paper.has_full_text:
        return replace(base, audit="no_full_text")

    def parse(obj: dict[str, Any]) -> EvidenceJudgment:
        verdict = str(obj["verdict"]).strip().lower()
        if verdict not in {v.value for v in Verdict}:
            raise ContractViolation(f"unknown verdict {verdict!r}")
        return replace(
            base,
            verdict=Verdict(verdict),
            evidence_locator=str(obj.get("evidence_locator") or ""),
            rationale=str(obj.get("rationale") or ""),
        )

    try:
        return gateway.chat_structured(
            ChatRequest(
                "judge_evidence",
                {
                    "prediction": prediction_payload(prediction),
                    "paper_id": paper.paper_id,
                    "title": paper.title,
                    "full_text": paper.full_text,
                },
                max_output_tokens=2048,
                stage=STAGE,
                subject=law_id,
            ),
            parse,
        )
    except ContractViolation:
        return replace(base, audit="contract_violation")


def judge_law(
    rubric: PredictionRubric, papers: Sequence[PaperRecord], gateway: Gateway, workers: int = 1
) -> list[EvidenceJudgment]:
    """Every (paper, prediction) pair, ordered by paper then rubric order."""
    tasks = [(paper, pred) for paper in papers for pred in rubric.predictions]
    return parallel_map(lambda t: judge_evidence(t[0], t[1], rubric.law_id, gateway), tasks, workers)


# -- precision and recall -------------------------------------------------------


def verdict_counts(judgments: Iterable[EvidenceJudgment]) -> tuple[int, int, int]:
    supp = cont = none = 0
    for j in judgments:
        if j.verdict is Verdict.SUPPORT:
            supp += 1
        elif j.verdict is Verdict.CONTRADICT:
            cont += 1
        else:
            none += 1
    return supp, cont, none


def precision_from_counts(supp: int, cont: int) -> float | None:
    return supp / (supp + cont) if supp + cont else None


def prediction_precision(judgments: Sequence[EvidenceJudgment]) -> float | None:
    """Supporting / (supporting + contradicting); None when no paper was evidence either way."""
    keys = {(j.law_id, j.prediction) for j in judgments}
    if len(keys) > 1:
        raise ValueError(f"judgments span several predictions: {sorted(keys)}")
    supp, cont, _ = verdict_counts(judgments)
    return precision_from_counts(supp, cont)


def _by_prediction(rubric: PredictionRubric, judgments: Iterable[EvidenceJudgment]) -> dict[str, list[EvidenceJudgment]]:
    groups: dict[str, list[EvidenceJudgment]] = {name: [] for name in rubric.short_names}
    for j in judgments:
        if j.law_id != rubric.law_id:
            raise ValueError(f"judgment for {j.law_id} passed with rubric for {rubric.law_id}")
        if j.prediction not in groups:
            raise ValueError(f"judgment names unknown prediction {j.prediction!r}")
        groups[j.prediction].append(j)
    return groups


def prediction_precisions(rubric: PredictionRubric, judgments: Iterable[EvidenceJudgment]) -> dict[str, float | None]:
    return {name: prediction_precision(js) for name, js in _by_prediction(rubric, judgments).items()}


def law_precision(rubric: PredictionRubric, judgments: Iterable[EvidenceJudgment]) -> float | None:
    """Mean precision over predictions with evidence; None when none has any."""
    values = [v for v in prediction_precisions(rubric, judgments).values() if v is not None]
    return sum(values) / len(values) if values else None


@dataclass(frozen=True)
class LawBacktest:
    law_id: str
    precision: float | None
    n_predictions: int
    n_evidenced_predictions: int
    papers_judged: int
    papers_with_evidence: tuple[str, ...]

    @property
    def has_evidence(self) -> bool:
        return self.n_evidenced_predictions > 0

    @property
    def prediction_recall(self) -> float:
        return self.n_evidenced_predictions / self.n_predictions if self.n_predictions else 0.0


@dataclass(frozen=True)
class PrecisionRecallReport:
    laws: tuple[LawBacktest, ...]
    precision: float | None  # mean over laws with evidence
    law_recall: float | None
    prediction_recall: float | None
    law_paper_evaluations: int
    papers_with_relevant_experiments: int  # per-law distinct papers, summed over laws
    distinct_papers_with_relevant_experiments: int  # deduplicated across laws
    laws_with_relevant_paper: int
    avg_papers_per_law_with_evidence: float | None
    excluded_laws: int = 0

    def law(self, law_id: str) -> LawBacktest:
        for l in self.laws:
            if l.law_id == law_id:
                return l
        raise KeyError(law_id)


def backtest_law(rubric: PredictionRubric, judgments: Sequence[EvidenceJudgment]) -> LawBacktest:
    groups = _by_prediction(rubric, judgments)
    precisions = {k: prediction_precision(v) for k, v in groups.items()}
    evidenced_papers = sorted({j.paper_id for j in judgments if j.verdict.evidenced})
    return LawBacktest(
        rubric.law_id,
        law_precision(rubric, judgments),
        len(rubric.predictions),
        sum(1 for v in precisions.values() if v is not None),
        len({j.paper_id for j in judgments}),
        tuple(evidenced_papers),
    )


def compute_recall(
    rubrics: Mapping[str, PredictionRubric],
    judgments: Iterable[EvidenceJudgment],
    *,
    excluded_laws: int = 0,
) -> PrecisionRecallReport:
    """Fold all judgments into per-law results and the recall/count block, in law_id order."""
    by_law: dict[str, list[EvidenceJudgment]] = {law_id: [] for law_id in rubrics}
    for j in judgments:
        if j.law_id not in by_law:
            raise ValueError(f"judgment for law {j.law_id} has no rubric")
        by_law[j.law_id].append(j)
    laws = tuple(backtest_law(rubrics[k], by_law[k]) for k in sorted(rubrics))
    n_preds = sum(l.n_predictions for l in laws)
    with_evidence = [l for l in laws if l.has_evidence]
    precisions = [l.precision for l in with_evidence if l.precision is not None]
    per_law_sum = sum(len(l.papers_with_evidence) for l in laws)
    return PrecisionRecallReport(
        laws=laws,
        precision=sum(precisions) / len(precisions) if precisions else None,
        law_recall=len(with_evidence) / len(laws) if laws else None,
        prediction_recall=sum(l.n_evidenced_predictions for l in laws) / n_preds if n_preds else None,
        law_paper_evaluations=sum(l.papers_judged for l in laws),
        papers_with_relevant_experiments=per_law_sum,
        distinct_papers_with_relevant_experiments=len({p for l in laws for p in l.papers_with_evidence}),
        laws_with_relevant_paper=len(with_evidence),
        avg_papers_per_law_with_evidence=per_law_sum / len(with_evidence) if with_evidence else None,
        excluded_laws=excluded_laws,
    )


# -- self-assessed belief -------------------------------------------------------


@dataclass(frozen=True)
class BeliefRecord:
    law_id: str
    votes: tuple[bool, ...]
    n_requested: int
    condition: str = ""
    estimate: float | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "votes", tuple(bool(v) for v in self.votes))
        object.__setattr__(self, "estimate", sum(self.votes) / len(self.votes) if self.votes else None)


def self_belief(ref: LawRef, gateway: Gateway, n: int = 10) -> BeliefRecord:
    claim = f"{ref.law.name}: {ref.law.statement}"
    samples = gateway.self_belief_samples(claim, n, stage=BELIEF_STAGE, subject=ref.law_id)
    return BeliefRecord(ref.law_id, samples.votes, n, ref.condition.slug)
