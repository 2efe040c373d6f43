"""Paired t-tests and cohort summaries over per-client result tables."""

import logging
import math
from collections.abc import Iterable, Sequence
from typing import Optional

import numpy as np

from .errors import FedHpoError, MissingResultsError
from .models import Approach, CohortSummary, ResultTable, TTestResult

logger = logging.getLogger(__name__)

CF_EPSILON = 1e-12
CF_MAX_ITERATIONS = 500
_TINY = 1e-300


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    """Continued fraction of the incomplete beta function (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, CF_MAX_ITERATIONS + 1):
        m2 = 2 * m
        for numerator in (
            m * (b - m) * x / ((qam + m2) * (a + m2)),
            -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2)),
        ):
            d = 1.0 + numerator * d
            d = 1.0 / (d if abs(d) > _TINY else _TINY)
            c = 1.0 + numerator / c
            c = c if abs(c) > _TINY else _TINY
            delta = d * c
            h *= delta
        if abs(delta - 1.0) < CF_EPSILON:
            return h
    raise FedHpoError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    """I_x(a, b) for 0 <= x <= 1 and a, b > 0."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x={x} outside [0, 1]")
    if a <= 0 or b <= 0:
        raise ValueError("shape parameters must be positive")
    if x == 0.0 or x == 1.0:
        return x
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def two_tailed_p(t: float, df: int) -> float:
    """P(|T| >= |t|) for Student's t with df degrees of freedom."""
    return regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5)


def student_t_cdf(t: float, df: int) -> float:
    tail = 0.5 * two_tailed_p(t, df)
    return 1.0 - tail if t > 0 else tail


def paired_t_test(
    a: Sequence[float],
    b: Sequence[float],
    approach_a: Optional[Approach] = None,
    approach_b: Optional[Approach] = None,
    excluded_clients: Iterable[int] = (),
) -> TTestResult:
    """Two-tailed paired t-test on d = a - b.

    Constant differences are flagged as degenerate: p = 1 with t = 0 when
    they are all zero, otherwise p = 0 and no t statistic.

    Args:
        a: Accuracies of the first approach
        b: Accuracies of the second approach, paired by position
        approach_a: Label of the first approach
        approach_b: Label of the second approach
        excluded_clients: Clients left out of the comparison

    Returns:
        TTestResult

    Raises:
        ValueError: If the vectors differ in length or hold fewer than two pairs
    """
    first = np.asarray(a, dtype=np.float64)
    second = np.asarray(b, dtype=np.float64)
    if first.ndim != 1 or first.shape != second.shape:
        raise ValueError(f"paired samples must have equal lengths, got {first.shape} and {second.shape}")
    n = first.shape[0]
    if n < 2:
        raise ValueError("paired t-test needs at least two pairs")

    diffs = first - second
    mean = float(np.mean(diffs))
    df = n - 1
    common = dict(
        approach_a=approach_a,
        approach_b=approach_b,
        degrees_of_freedom=df,
        n_pairs=n,
        excluded_clients=sorted(excluded_clients),
    )
    if np.all(diffs == diffs[0]):
        if diffs[0] == 0.0:
            return TTestResult(t_statistic=0.0, p_value=1.0, mean_difference=0.0, degenerate=True, **common)
        return TTestResult(t_statistic=None, p_value=0.0, mean_difference=mean, degenerate=True, **common)

    t = mean / (float(np.std(diffs, ddof=1)) / math.sqrt(n))
    return TTestResult(t_statistic=t, p_value=two_tailed_p(t, df), mean_difference=mean, **common)


def compare_approaches(
    table: ResultTable,
    pairs: Iterable[tuple[Approach, Approach]],
    exclude: Iterable[int] = (),
) -> list[TTestResult]:
    """One paired t-test per approach pair over the non-excluded clients.

    Raises:
        MissingResultsError: If a non-excluded client lacks either approach
    """
    pairs = [(Approach(a), Approach(b)) for a, b in pairs]
    excluded = set(exclude)
    gaps: list[tuple[int, str]] = []
    prepared = []
    for first, second in pairs:
        acc_a, acc_b = table.accuracies(first), table.accuracies(second)
        clients = sorted((set(acc_a) | set(acc_b)) - excluded)
        gaps.extend((c, approach.value) for approach, acc in ((first, acc_a), (second, acc_b)) for c in clients if c not in acc)
        prepared.append((first, second, acc_a, acc_b, clients))
    if gaps:
        raise MissingResultsError(sorted(set(gaps)))

    present = set(table.cohort_of())
    results = []
    for first, second, acc_a, acc_b, clients in prepared:
        result = paired_t_test(
            [acc_a[c] for c in clients],
            [acc_b[c] for c in clients],
            approach_a=first,
            approach_b=second,
            excluded_clients=excluded & present,
        )
        logger.info("%s vs %s: p=%.4f (n=%d)", first.value, second.value, result.p_value, result.n_pairs)
        results.append(result)
    return results


def cohort_summary(table: ResultTable) -> list[CohortSummary]:
    """Mean/min/max accuracy per cohort and approach."""
    if not table.rows:
        raise ValueError("result table is empty")
    order = list(Approach)
    grouped: dict[tuple[int, Approach], list[float]] = {}
    for row in table.rows:
        grouped.setdefault((row.cohort_id, row.approach), []).append(row.accuracy)
    return [
        CohortSummary(
            cohort_id=cohort_id,
            approach=approach,
            mean=float(np.mean(values)),
            min=min(values),
            max=max(values),
            count=len(values),
        )
        for (cohort_id, approach), values in sorted(grouped.items(), key=lambda item: (item[0][0], order.index(item[0][1])))
    ]
