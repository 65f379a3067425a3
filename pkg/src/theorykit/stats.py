"""One-sided bootstrap tests and relative-delta arithmetic for the report tables."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

GREATER = "greater"
LESS = "less"

DOUBLE_MARK = "‡"  # p < 0.01
SINGLE_MARK = "†"  # p < 0.05


@dataclass(frozen=True)
class BootstrapResult:
    observed_delta: float
    p_value: float
    n_resamples: int
    direction: str
    seed: int


def bootstrap_one_sided(
    group_a: Sequence[float],
    group_b: Sequence[float],
    n_resamples: int = 10_000,
    direction: str = GREATER,
    seed: int = 0,
    chunk: int = 2_000,
) -> BootstrapResult:
    """Test mean(a) > mean(b) (or <) by resampling each group with replacement.

    The p-value is the fraction of resamples whose mean difference fails the
    strict direction; ties count as failures.
    """
    if direction not in (GREATER, LESS):
        raise ValueError(f"direction must be {GREATER!r} or {LESS!r}")
    if n_resamples < 1:
        raise ValueError("n_resamples must be >= 1")
    a = np.asarray(group_a, dtype=float)
    b = np.asarray(group_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both groups must be non-empty")
    rng = np.random.default_rng(seed)
    failures = 0
    done = 0
    while done < n_resamples:
        m = min(chunk, n_resamples - done)
        # sums of integer-valued scores are exact, so equal means compare equal
        mean_a = a[rng.integers(0, a.size, size=(m, a.size))].sum(axis=1) / a.size
        mean_b = b[rng.integers(0, b.size, size=(m, b.size))].sum(axis=1) / b.size
        if direction == GREATER:
            failures += int(np.count_nonzero(~(mean_a > mean_b)))
        else:
            failures += int(np.count_nonzero(~(mean_a < mean_b)))
        done += m
    return BootstrapResult(float(a.mean() - b.mean()), failures / n_resamples, n_resamples, direction, seed)


def significance_marks(p: float) -> str:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p-value {p} outside [0, 1]")
    if p < 0.01:
        return DOUBLE_MARK
    if p < 0.05:
        return SINGLE_MARK
    return ""


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def relative_delta_percent(param: float | None, lit: float | None) -> int | None:
    """round(100 * (lit - param) / param); None when undefined."""
    if param is None or lit is None or param == 0:
        return None
    return round_half_away(100.0 * (lit - param) / param)


def mean_or_none(values: Sequence[float]) -> float | None:
    return sum(values) / len(values) if values else None


@dataclass(frozen=True)
class Comparison:
    """One table row: parametric vs literature-supported values under one objective."""

    label: str
    objective: str
    param_mean: float | None
    lit_mean: float | None
    n_param: int
    n_lit: int
    delta_percent: int | None
    p_value: float | None
    mark: str


def compare_conditions(
    label: str,
    objective: str,
    param_values: Sequence[float],
    lit_values: Sequence[float],
    n_resamples: int,
    seed: int,
    direction: str = GREATER,
) -> Comparison:
    """Means, relative delta and a one-sided bootstrap of literature against parametric."""
    param_mean = mean_or_none(param_values)
    lit_mean = mean_or_none(lit_values)
    p = None
    if param_values and lit_values:
        p = bootstrap_one_sided(lit_values, param_values, n_resamples, direction, seed).p_value
    return Comparison(
        label,
        objective,
        param_mean,
        lit_mean,
        len(param_values),
        len(lit_values),
        relative_delta_percent(param_mean, lit_mean),
        p,
        significance_marks(p) if p is not None else "",
    )
