"""Tests for paired t-tests and cohort summaries."""

import math

import numpy as np
import pytest

from fedhpo.analysis import (
    cohort_summary,
    compare_approaches,
    paired_t_test,
    regularized_incomplete_beta,
    student_t_cdf,
    two_tailed_p,
)
from fedhpo.artifacts import read_results_csv
from fedhpo.config import preset_path
from fedhpo.errors import MissingResultsError
from fedhpo.models import Approach, ResultRow, ResultTable

GG, LG, GB, LB = Approach.GLOBAL_GRID, Approach.LOCAL_GRID, Approach.GLOBAL_BAYES, Approach.LOCAL_BAYES


@pytest.fixture
def table2():
    return read_results_csv(preset_path("table2-fixture").with_suffix(".csv"))


def _t_density(x, df):
    log_norm = math.lgamma((df + 1) / 2) - math.lgamma(df / 2) - 0.5 * math.log(df * math.pi)
    return np.exp(log_norm) * (1.0 + x**2 / df) ** (-(df + 1) / 2)


def _simpson_two_tailed(t, df, intervals=4000):
    x = np.linspace(0.0, abs(t), intervals + 1)
    weights = np.ones(intervals + 1)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    central = (abs(t) / intervals / 3.0) * np.sum(weights * _t_density(x, df))
    return 1.0 - 2.0 * central


def test_incomplete_beta_closed_forms():
    """Test I_x(1, 1) = x, I_x(a, 1) = x^a and the reflection identity."""
    for x in (0.0, 0.1, 0.5, 0.93, 1.0):
        assert regularized_incomplete_beta(x, 1.0, 1.0) == pytest.approx(x, abs=1e-12)
        assert regularized_incomplete_beta(x, 3.0, 1.0) == pytest.approx(x**3, abs=1e-12)
    assert regularized_incomplete_beta(0.3, 2.5, 0.5) == pytest.approx(
        1.0 - regularized_incomplete_beta(0.7, 0.5, 2.5), abs=1e-12
    )

    with pytest.raises(ValueError):
        regularized_incomplete_beta(1.5, 1.0, 1.0)


def test_two_tailed_p_matches_integrated_density():
    """Test the p-value against numerical integration of the t density."""
    for df in (1, 2, 7, 8, 30):
        previous = 1.0
        for t in np.linspace(0.0, 6.0, 25):
            p = two_tailed_p(float(t), df)
            assert p == pytest.approx(_simpson_two_tailed(t, df), abs=1e-6)
            assert 0.0 < p <= 1.0
            assert p <= previous
            previous = p


def test_student_t_cdf_symmetry():
    """Test F(-t) = 1 - F(t)."""
    assert student_t_cdf(1.3, 5) == pytest.approx(1.0 - student_t_cdf(-1.3, 5), abs=1e-12)
    assert student_t_cdf(0.0, 5) == pytest.approx(0.5)


def test_paired_t_test_textbook_values():
    """Test t, df and p for a small hand-checked sample."""
    result = paired_t_test([1.0, 2.0, 3.0, 4.0], [0.0, 0.0, 0.0, 0.0])

    # d = 1..4: mean 2.5, sd sqrt(5/3)
    assert result.t_statistic == pytest.approx(2.5 / (math.sqrt(5 / 3) / 2))
    assert result.degrees_of_freedom == 3
    assert result.p_value == pytest.approx(_simpson_two_tailed(result.t_statistic, 3), abs=1e-6)
    assert not result.degenerate


def test_paired_t_test_identical_vectors():
    """Test t = 0, p = 1 for zero differences."""
    result = paired_t_test([0.5, 0.7, 0.9], [0.5, 0.7, 0.9])

    assert result.t_statistic == 0.0
    assert result.p_value == 1.0
    assert result.degenerate


def test_paired_t_test_constant_shift():
    """Test p = 0 without a t statistic for constant non-zero differences."""
    result = paired_t_test([0.75, 0.75, 0.75], [0.5, 0.5, 0.5])

    assert result.t_statistic is None
    assert result.p_value == 0.0
    assert result.mean_difference == pytest.approx(0.25)
    assert result.degenerate


def test_paired_t_test_antisymmetry_and_shift():
    """Test that swapping negates t exactly and shifting both sides changes nothing."""
    a = np.array([0.81, 0.77, 0.92, 0.64, 0.70])
    b = np.array([0.79, 0.71, 0.90, 0.66, 0.61])

    forward = paired_t_test(a, b)
    backward = paired_t_test(b, a)
    shifted = paired_t_test(a + 0.05, b + 0.05)

    assert backward.t_statistic == -forward.t_statistic
    assert backward.p_value == forward.p_value
    assert shifted.t_statistic == pytest.approx(forward.t_statistic, rel=1e-9)
    assert shifted.p_value == pytest.approx(forward.p_value, rel=1e-9)


def test_paired_t_test_preconditions():
    """Test length validation."""
    with pytest.raises(ValueError, match="equal lengths"):
        paired_t_test([0.1, 0.2], [0.1])
    with pytest.raises(ValueError, match="two pairs"):
        paired_t_test([0.1], [0.2])


@pytest.mark.parametrize(
    "pair,expected",
    [((GG, LG), 0.028), ((GB, LB), 0.012), ((GG, GB), 0.004), ((LG, LB), 0.008)],
)
def test_table2_without_outlier(table2, pair, expected):
    """Test the four comparisons with cohort 2 (client 8) excluded."""
    [result] = compare_approaches(table2, [pair], exclude=[8])

    assert result.p_value == pytest.approx(expected, abs=1e-3)
    assert result.n_pairs == 8
    assert result.degrees_of_freedom == 7
    assert result.excluded_clients == [8]


@pytest.mark.parametrize(
    "pair,expected",
    [((GG, LG), 0.032), ((LG, LB), 0.010), ((GB, LB), 0.755), ((GG, GB), 0.230)],
)
def test_table2_with_outlier(table2, pair, expected):
    """Test the four comparisons over all nine clients."""
    [result] = compare_approaches(table2, [pair])

    assert result.p_value == pytest.approx(expected, abs=1e-3)
    assert result.degrees_of_freedom == 8
    assert result.excluded_clients == []


def test_compare_approaches_keeps_pair_order(table2):
    """Test one result per pair in request order."""
    results = compare_approaches(table2, [(LG, LB), (GG, LG)], exclude=[8])

    assert [(r.approach_a, r.approach_b) for r in results] == [(LG, LB), (GG, LG)]


def test_compare_approaches_two_clients_left(table2):
    """Test df = 1 when all but two clients are excluded."""
    [result] = compare_approaches(table2, [(GG, GB)], exclude=[2, 3, 4, 6, 7, 8, 9])

    assert result.n_pairs == 2
    assert result.degrees_of_freedom == 1


def test_compare_approaches_names_gaps():
    """Test that missing cells are reported by client and approach."""
    table = ResultTable(
        rows=[
            ResultRow(client_id=0, cohort_id=0, approach=GG, accuracy=0.5),
            ResultRow(client_id=1, cohort_id=0, approach=GG, accuracy=0.6),
            ResultRow(client_id=0, cohort_id=0, approach=LG, accuracy=0.4),
        ]
    )

    with pytest.raises(MissingResultsError, match="client 1/localGrid") as excinfo:
        compare_approaches(table, [(GG, LG)])

    assert excinfo.value.gaps == [(1, "localGrid")]


def test_cohort_summary(table2):
    """Test per-cohort aggregation of the fixture."""
    summaries = {(s.cohort_id, s.approach): s for s in cohort_summary(table2)}

    assert summaries[(1, GG)].mean == pytest.approx(0.8230)
    assert summaries[(1, GG)].count == 3
    assert summaries[(2, GB)].mean == pytest.approx(0.3867)
    assert summaries[(0, LB)].min == summaries[(0, LB)].max == pytest.approx(0.6897)


def test_cohort_summary_single_row_and_empty():
    """Test mean = min = max for one row and the empty-table guard."""
    [summary] = cohort_summary(ResultTable(rows=[ResultRow(client_id=3, cohort_id=1, approach=GB, accuracy=0.42)]))

    assert summary.mean == summary.min == summary.max == 0.42
    with pytest.raises(ValueError):
        cohort_summary(ResultTable())
