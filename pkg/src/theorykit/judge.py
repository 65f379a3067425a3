"""Likert-scale judging of individual laws and the condition comparison table."""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Sequence

from .gateway import ChatRequest, ContractViolation, Gateway
from .model import GenerationCondition, Knowledge, LawRef, Objective, RecordError, derive_seed, to_data
from .stats import Comparison, compare_conditions

STAGE = "judge"


class JudgeDimension(str, Enum):
    SPECIFICITY = "specificity"
    EMPIRICAL_SUPPORT = "empirical_support"
    NOVELTY = "novelty"
    PLAUSIBILITY = "plausibility"


RUBRICS = {
    JudgeDimension.SPECIFICITY: "High scores go to laws that make specific, testable claims and predictions.",
    JudgeDimension.EMPIRICAL_SUPPORT: "High scores go to laws consistent with existing empirical evidence.",
    JudgeDimension.NOVELTY: "High scores go to laws that introduce insights not explicitly stated in prior work.",
    JudgeDimension.PLAUSIBILITY: "High scores go to laws with a plausible scientific rationale or mechanism.",
}


@dataclass(frozen=True)
class JudgeScore:
    law_id: str
    dimension: JudgeDimension
    score: int
    rationale: str
    judge_model_id: str
    condition: str = ""

    def __post_init__(self):
        object.__setattr__(self, "dimension", JudgeDimension(self.dimension))
        if isinstance(self.score, bool) or not isinstance(self.score, int) or not 1 <= self.score <= 10:
            raise RecordError(f"judge score {self.score!r} outside 1-10")


class ScoringError(RuntimeError):
    pass


def law_payload(ref: LawRef) -> str:
    data = to_data(ref.law)
    data.pop("self_novelty", None)
    return json.dumps(data, sort_keys=True, ensure_ascii=False)


def score_law(ref: LawRef, dimension: JudgeDimension | str, gateway: Gateway) -> JudgeScore:
    """One judge call per (law, dimension); raises ScoringError on a persistent contract violation."""
    dimension = JudgeDimension(dimension)
    model_id = gateway.model_for(STAGE)

    def parse(obj: dict[str, Any]) -> JudgeScore:
        score = obj["score"]
        if isinstance(score, float) and score.is_integer():
            score = int(score)
        return JudgeScore(
            ref.law_id, dimension, score, str(obj.get("rationale", "")), model_id, ref.condition.slug
        )

    try:
        return gateway.chat_structured(
            ChatRequest(
                "judge_law",
                {
                    "dimension": dimension.value,
                    "dimension_rubric": RUBRICS[dimension],
                    "theory_name": ref.theory_name,
                    "theory_description": ref.theory_description,
                    "law": law_payload(ref),
                },
                max_output_tokens=1024,
                stage=STAGE,
                subject=ref.law_id,
            ),
            parse,
        )
    except ContractViolation as exc:
        raise ScoringError(f"{ref.law_id}/{dimension.value}: {exc}") from exc


@dataclass(frozen=True)
class JudgeTable:
    rows: tuple[Comparison, ...]
    law_counts: dict[str, int]  # condition slug -> laws with at least one score
    unscored: dict[str, int]  # condition slug -> (law, dimension) pairs that failed

    def row(self, dimension: str, objective: str) -> Comparison:
        for r in self.rows:
            if r.label == dimension and r.objective == objective:
                return r
        raise KeyError((dimension, objective))


def aggregate_condition_table(
    scores: Iterable[JudgeScore],
    *,
    unscored: dict[str, int] | None = None,
    n_resamples: int = 10_000,
    seed: int = 0,
    dimensions: Sequence[JudgeDimension] = tuple(JudgeDimension),
) -> JudgeTable:
    """Mean per (condition, dimension) and the literature-vs-parametric delta per objective."""
    by_cell: dict[tuple[str, str], list[float]] = {}
    laws: dict[str, set[str]] = {}
    for s in sorted(scores, key=lambda s: (s.law_id, s.dimension.value)):
        by_cell.setdefault((s.condition, s.dimension.value), []).append(float(s.score))
        laws.setdefault(s.condition, set()).add(s.law_id)
    rows = []
    for objective in Objective:
        param = GenerationCondition(Knowledge.PARAMETRIC, objective).slug
        lit = GenerationCondition(Knowledge.LITERATURE, objective).slug
        for dim in dimensions:
            rows.append(
                compare_conditions(
                    dim.value,
                    objective.value,
                    by_cell.get((param, dim.value), []),
                    by_cell.get((lit, dim.value), []),
                    n_resamples,
                    derive_seed(seed, "judge", objective.value, dim.value),
                )
            )
    return JudgeTable(tuple(rows), {k: len(v) for k, v in laws.items()}, dict(unscored or {}))
