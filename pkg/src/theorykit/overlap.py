"""Pairwise duplicate judging of laws and Monte Carlo saturation curves."""
from __future__ import annotations

import json
import math
import random
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Hashable, Iterable, Sequence, TypeVar

from .gateway import ChatRequest, ContractViolation, Gateway, parallel_map
from .model import LawRef, RecordError, derive_seed, to_data

STAGE = "overlap"

T = TypeVar("T", bound=Hashable)


class Tag(str, Enum):
    ESSENTIAL = "ESSENTIAL"
    NON_ESSENTIAL = "NON_ESSENTIAL"


class DuplicateVerdict(str, Enum):
    DUPLICATES = "duplicates"
    NOT_DUPLICATES = "not_duplicates"


class Series(str, Enum):
    WITHIN_PARAMETRIC = "within_parametric"
    WITHIN_LITERATURE = "within_literature"
    ACROSS = "across"


@dataclass(frozen=True)
class TaggedPoint:
    text: str
    tag: Tag

    def __post_init__(self):
        object.__setattr__(self, "tag", Tag(str(self.tag).upper().replace("-", "_")))


@dataclass(frozen=True)
class DuplicateJudgment:
    law_a_id: str
    law_b_id: str
    core_claim_a: str
    core_claim_b: str
    similarities: tuple[TaggedPoint, ...]
    differences: tuple[TaggedPoint, ...]
    reasoning: str
    verdict: DuplicateVerdict
    audit: str = ""

    def __post_init__(self):
        object.__setattr__(self, "verdict", DuplicateVerdict(self.verdict))
        object.__setattr__(self, "similarities", tuple(self.similarities))
        object.__setattr__(self, "differences", tuple(self.differences))
        if not self.audit and not (self.core_claim_a.strip() and self.core_claim_b.strip()):
            raise RecordError("duplicate judgment needs both core claims")

    @property
    def is_duplicate(self) -> bool:
        return self.verdict is DuplicateVerdict.DUPLICATES


def pair_key(a_id: str, b_id: str) -> tuple[str, str]:
    return (a_id, b_id) if a_id <= b_id else (b_id, a_id)


def _law_text(ref: LawRef) -> str:
    data = to_data(ref.law)
    for k in ("self_novelty", "evidence"):
        data.pop(k, None)
    return json.dumps(data, sort_keys=True, ensure_ascii=False)


def _points(raw: Any) -> tuple[TaggedPoint, ...]:
    if not isinstance(raw, list):
        raise ContractViolation("similarities/differences must be lists")
    try:
        return tuple(TaggedPoint(str(p["text"]), p["tag"]) for p in raw)
    except (KeyError, TypeError, ValueError) as exc:
        raise ContractViolation(f"bad tagged point: {exc}") from None


def judge_duplicate(a: LawRef, b: LawRef, gateway: Gateway) -> DuplicateJudgment:
    """Prompt order is fixed by law id, so the verdict does not depend on argument order."""
    if a.law_id == b.law_id:
        raise ValueError("a law is not compared with itself")
    first, second = (a, b) if a.law_id <= b.law_id else (b, a)

    def parse(obj: dict[str, Any]) -> DuplicateJudgment:
        verdict = str(obj["verdict"]).strip().lower().replace(" ", "_").replace("-", "_")
        if verdict not in {v.value for v in DuplicateVerdict}:
            raise ContractViolation(f"unknown verdict {obj['verdict']!r}")
        return DuplicateJudgment(
            first.law_id,
            second.law_id,
            str(obj.get("core_claim_a", "")),
            str(obj.get("core_claim_b", "")),
            _points(obj.get("similarities", [])),
            _points(obj.get("differences", [])),
            str(obj.get("reasoning", "")),
            DuplicateVerdict(verdict),
        )

    try:
        return gateway.chat_structured(
            ChatRequest(
                "judge_duplicate",
                {"law_a": _law_text(first), "law_b": _law_text(second)},
                max_output_tokens=2048,
                stage=STAGE,
                subject=f"{first.law_id}|{second.law_id}",
            ),
            parse,
        )
    except ContractViolation:
        return DuplicateJudgment(
            first.law_id, second.law_id, "", "", (), (), "", DuplicateVerdict.NOT_DUPLICATES, audit="contract_violation"
        )


class PairCache:
    """Judgments keyed by unordered pair; shared across trials and series."""

    def __init__(self, judgments: Iterable[DuplicateJudgment] = ()):
        self._lock = threading.Lock()
        self._items: dict[tuple[str, str], DuplicateJudgment] = {}
        for j in judgments:
            self._items[pair_key(j.law_a_id, j.law_b_id)] = j

    def get(self, a_id: str, b_id: str) -> DuplicateJudgment | None:
        with self._lock:
            return self._items.get(pair_key(a_id, b_id))

    def put(self, judgment: DuplicateJudgment) -> None:
        with self._lock:
            self._items.setdefault(pair_key(judgment.law_a_id, judgment.law_b_id), judgment)

    def judgments(self) -> list[DuplicateJudgment]:
        with self._lock:
            return [self._items[k] for k in sorted(self._items)]

    def __len__(self) -> int:
        return len(self._items)


# -- Monte Carlo ------------------------------------------------------------------


@dataclass(frozen=True)
class CurvePoint:
    n: int
    mean: float
    std: float
    trials: int
    effective_n: int  # n after capping at the candidate pool size

    @property
    def capped(self) -> bool:
        return self.effective_n < self.n


@dataclass(frozen=True)
class OverlapCurve:
    series: Series
    points: tuple[CurvePoint, ...]
    samples_per_point: int = 50
    comparisons: int = field(default=0)

    def __post_init__(self):
        object.__setattr__(self, "series", Series(self.series))
        ns = [p.n for p in self.points]
        if ns != sorted(ns):
            raise RecordError("curve points must be ordered by N")
        if any(not 0.0 <= p.mean <= 1.0 for p in self.points):
            raise RecordError("curve proportions must lie in [0, 1]")


def draw_trials(
    pool_a: Sequence[T], pool_b: Sequence[T], n: int, samples: int, rng: random.Random, within: bool
) -> list[tuple[T, list[T]]]:
    """Each trial is one probe and up to n distinct others; within-series never draws the probe."""
    trials = []
    for _ in range(samples):
        probe = pool_a[rng.randrange(len(pool_a))]
        candidates = [x for x in pool_b if x != probe] if within else list(pool_b)
        trials.append((probe, rng.sample(candidates, min(n, len(candidates)))))
    return trials


def monte_carlo_curve(
    pool_a: Sequence[T],
    pool_b: Sequence[T],
    n_values: Sequence[int],
    is_duplicate: Callable[[T, T], bool],
    *,
    samples_per_point: int = 50,
    seed: int = 0,
    series: Series | str = Series.ACROSS,
    workers: int = 1,
) -> OverlapCurve:
    """Proportion of trials in which a probe duplicates at least one of N sampled laws.

    Trials are drawn first (deterministic in the seed), then every distinct pair is
    judged once, possibly in parallel, so the judge sees each unordered pair at most once.
    """
    if not pool_a or not pool_b:
        raise ValueError("pools must be non-empty")
    series = Series(series)
    within = series is not Series.ACROSS
    if within and list(pool_a) != list(pool_b):
        raise ValueError("within-series curves use the same pool for probes and samples")
    if len(set(pool_a)) != len(pool_a) or len(set(pool_b)) != len(pool_b):
        raise ValueError("pool members must be distinct ids")
    all_trials = {}
    for n in sorted(set(n_values)):
        if n < 1:
            raise ValueError("N must be >= 1")
        rng = random.Random(derive_seed(seed, series.value, n))
        all_trials[n] = draw_trials(pool_a, pool_b, n, samples_per_point, rng, within)

    pairs: dict[frozenset, tuple[T, T]] = {}
    for trials in all_trials.values():
        for probe, others in trials:
            for o in others:
                pairs.setdefault(frozenset((probe, o)), (probe, o))
    ordered = sorted(pairs.values(), key=lambda p: tuple(sorted(map(str, p))))
    verdicts = parallel_map(lambda p: bool(is_duplicate(p[0], p[1])), ordered, workers)
    dup = {frozenset(p): v for p, v in zip(ordered, verdicts)}

    points = []
    for n, trials in all_trials.items():
        outcomes = [float(any(dup[frozenset((probe, o))] for o in others)) for probe, others in trials]
        mean = sum(outcomes) / len(outcomes)
        std = math.sqrt(sum((x - mean) ** 2 for x in outcomes) / len(outcomes))
        points.append(CurvePoint(n, mean, std, len(outcomes), len(trials[0][1])))
    return OverlapCurve(series, tuple(points), samples_per_point, len(ordered))


def expected_overlap(d: float, n: int) -> float:
    """Chance that at least one of n independent draws is a duplicate when a fraction d are."""
    return 1.0 - (1.0 - d) ** n


def llm_duplicate_oracle(
    refs: dict[str, LawRef], gateway: Gateway, cache: PairCache
) -> Callable[[str, str], bool]:
    """Duplicate predicate over law ids backed by the gateway and a shared pair cache."""

    def judge(a_id: str, b_id: str) -> bool:
        hit = cache.get(a_id, b_id)
        if hit is None:
            hit = judge_duplicate(refs[a_id], refs[b_id], gateway)
            cache.put(hit)
        return hit.is_duplicate

    return judge


def theory_duplicates(theory_a: Sequence[str], theory_b: Sequence[str], cache: PairCache) -> bool | None:
    """Theory-level duplication: any judged law pair duplicates; None when no pair was judged."""
    seen = False
    for a in theory_a:
        for b in theory_b:
            if a == b:
                continue
            j = cache.get(a, b)
            if j is not None:
                seen = True
                if j.is_duplicate:
                    return True
    return False if seen else None
