"""Trial-analytics arithmetic: workload scores, effect ratios, multiplicity
adjustment, non-inferiority decisions, and feedback summaries.

These functions stop at summary arithmetic and decision rules; confidence
intervals and p-values are consumed as inputs, never fitted here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Any, Iterable, Sequence

#: Non-inferiority margin on the 0–10 rubric scale.
DEFAULT_NI_MARGIN = -0.5

#: Ratings at or above this count as positive feedback.
POSITIVE_THRESHOLD = 4


@dataclass(frozen=True)
class EffectSummary:
    """A reported effect with its two-sided confidence interval."""

    label: str
    estimate: float
    ci_low: float
    ci_high: float
    p_value: float | None = None

    def __post_init__(self) -> None:
        if not self.ci_low <= self.estimate <= self.ci_high:
            raise ValueError(f"{self.label}: CI [{self.ci_low}, {self.ci_high}] "
                             f"does not bracket the estimate {self.estimate}")


@dataclass(frozen=True)
class NoninferiorityDecision:
    noninferior: bool
    superior: bool


def noninferiority_decision(effect: EffectSummary,
                            margin: float = DEFAULT_NI_MARGIN) -> NoninferiorityDecision:
    """Decide on the CI lower bound: non-inferior above the margin, superior above zero."""
    return NoninferiorityDecision(noninferior=effect.ci_low > margin,
                                  superior=effect.ci_low > 0)


def tlx_raw(mental: float, temporal: float, performance: float,
            effort: float, frustration: float) -> float:
    """Raw workload score: unweighted mean of the five subscales.

    Physical demand is excluded by construction. Every input must lie in
    [0, 100].
    """
    values = (mental, temporal, performance, effort, frustration)
    for value in values:
        if not 0 <= value <= 100:
            raise ValueError(f"subscale value {value} outside [0, 100]")
    return sum(values) / 5


def geo_mean_ratio(times_a: Sequence[float], times_b: Sequence[float]) -> float:
    """Ratio of geometric means, exp(mean(log a) - mean(log b))."""
    if not times_a or not times_b:
        raise ValueError("both samples must be non-empty")
    if any(v <= 0 for v in times_a) or any(v <= 0 for v in times_b):
        raise ValueError("all values must be positive")
    mean_log_a = sum(math.log(v) for v in times_a) / len(times_a)
    mean_log_b = sum(math.log(v) for v in times_b) / len(times_b)
    return math.exp(mean_log_a - mean_log_b)


def holm_adjust(p_values: Sequence[float]) -> list[float]:
    """Step-down multiplicity adjustment, returned in the input order.

    The i-th smallest p-value is scaled by (m - i + 1); a running maximum
    enforces monotonicity and everything is capped at 1.
    """
    for p in p_values:
        if not 0 <= p <= 1:
            raise ValueError(f"p-value {p} outside [0, 1]")
    m = len(p_values)
    order = sorted(range(m), key=lambda i: (p_values[i], i))
    adjusted = [0.0] * m
    running = 0.0
    for rank, index in enumerate(order):
        running = max(running, (m - rank) * p_values[index])
        adjusted[index] = min(1.0, running)
    return adjusted


@dataclass(frozen=True)
class FeedbackSummary:
    histogram: dict[int, int]
    n: int
    positive_count: int
    positive_rate: float | None

    def to_dict(self) -> dict[str, Any]:
        return {"histogram": {str(k): v for k, v in self.histogram.items()},
                "n": self.n, "positive_count": self.positive_count,
                "positive_rate": self.positive_rate}


def feedback_summary(ratings: Iterable[int]) -> FeedbackSummary:
    """Histogram and positive rate over 1–5 ratings (4–5 count as positive).

    The rate is rounded half-up to three decimals; an empty input reports
    None.
    """
    histogram = {rating: 0 for rating in range(1, 6)}
    for rating in ratings:
        if rating not in histogram:
            raise ValueError(f"rating {rating} outside 1..5")
        histogram[rating] += 1
    n = sum(histogram.values())
    positive = sum(histogram[r] for r in range(POSITIVE_THRESHOLD, 6))
    rate = None
    if n:
        rate = float((Decimal(positive) / Decimal(n)).quantize(Decimal("0.001"),
                                                               rounding=ROUND_HALF_UP))
    return FeedbackSummary(histogram=histogram, n=n, positive_count=positive,
                           positive_rate=rate)
