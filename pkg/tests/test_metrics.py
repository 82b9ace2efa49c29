import math
from itertools import combinations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bootforge.metrics import (AggregateReport, MetricDomainError, SampleResult,
                               SampleSet, aggregate_runs, build_report,
                               dataset_pass_at_k, edit_pass_at_k, pass_at_k_estimated,
                               pass_at_k_sampled, repair_transitions)


def oracle_pass_at_k(n, c, k):
    """Exhaustive enumeration: fraction of k-subsets containing a success."""
    verdicts = [True] * c + [False] * (n - c)
    subsets = list(combinations(range(n), k))
    hits = sum(1 for s in subsets if any(verdicts[i] for i in s))
    return hits / len(subsets)


def test_estimator_matches_enumeration_oracle():
    for n in range(1, 9):
        for c in range(0, n + 1):
            for k in range(1, n + 1):
                assert pass_at_k_estimated(n, c, k) == pytest.approx(
                    oracle_pass_at_k(n, c, k), abs=1e-12)


def test_known_value():
    assert pass_at_k_estimated(5, 2, 2) == pytest.approx(0.7, abs=1e-12)


def test_boundaries():
    assert pass_at_k_estimated(10, 0, 3) == 0.0
    assert pass_at_k_estimated(10, 8, 3) == 1.0  # n - c < k
    assert pass_at_k_estimated(1, 1, 1) == 1.0


@pytest.mark.parametrize("n,c,k", [(0, 0, 1), (5, 6, 1), (5, 2, 0), (5, 2, 6), (5, -1, 1)])
def test_domain_errors(n, c, k):
    with pytest.raises(MetricDomainError):
        pass_at_k_estimated(n, c, k)


def test_non_integer_rejected():
    with pytest.raises(MetricDomainError):
        pass_at_k_estimated(5.0, 2, 2)


def test_large_n_stable():
    # would overflow comb-based ratios done naively in floats
    value = pass_at_k_estimated(100000, 5, 100)
    assert 0.0 < value < 1.0
    assert math.isfinite(value)


@given(st.integers(1, 200).flatmap(
    lambda n: st.tuples(st.just(n), st.integers(0, n), st.integers(1, n))))
@settings(max_examples=300)
def test_monotone_in_c_and_k(nck):
    n, c, k = nck
    v = pass_at_k_estimated(n, c, k)
    assert 0.0 <= v <= 1.0
    if c < n:
        assert pass_at_k_estimated(n, c + 1, k) >= v - 1e-15
    if k < n:
        assert pass_at_k_estimated(n, c, k + 1) >= v - 1e-15


def test_sampled_uses_first_k():
    verdicts = [False, False, True, False]
    assert not pass_at_k_sampled(verdicts, 2)
    assert pass_at_k_sampled(verdicts, 3)
    with pytest.raises(MetricDomainError):
        pass_at_k_sampled(verdicts, 5)


def make_set(spec, n):
    """spec: task_id -> list of (first, attempted, repair_ok, kind)."""
    samples = {}
    for task_id, rows in spec.items():
        samples[task_id] = tuple(
            SampleResult(first_verdict=f, repair_attempted=a, repair_verdict=r,
                         error_kind=k)
            for f, a, r, k in rows)
    return SampleSet(samples=samples, n=n)


def test_sample_set_rejects_ragged():
    with pytest.raises(MetricDomainError):
        make_set({"a": [(True, False, None, None)],
                  "b": [(True, False, None, None), (False, False, None, None)]}, 1)


def test_edit_pass_at_k_counts_successful_repairs():
    ss = make_set({
        "a": [(False, True, True, "TypeError")],
        "b": [(False, True, False, "Timeout")],
        "c": [(True, False, None, None)],
    }, 1)
    assert dataset_pass_at_k(ss, 1) == pytest.approx(1 / 3)
    assert edit_pass_at_k(ss, 1) == pytest.approx(2 / 3)


def test_edit_never_below_plain():
    ss = make_set({
        "a": [(False, True, True, "TypeError"), (True, False, None, None)],
        "b": [(False, True, False, "Timeout"), (False, False, None, None)],
    }, 2)
    for k in (1, 2):
        for mode in ("estimated", "sampled"):
            assert edit_pass_at_k(ss, k, mode) >= dataset_pass_at_k(ss, k, mode)


def test_aggregate_runs():
    agg = aggregate_runs([0.5, 0.6, 0.7])
    assert agg.mean == pytest.approx(0.6)
    assert agg.std == pytest.approx(0.1)
    assert agg.ci_half_width == pytest.approx(1.96 * 0.1 / math.sqrt(3))
    assert agg.m == 3


def test_aggregate_single_run_has_no_spread():
    agg = aggregate_runs([0.4])
    assert agg == AggregateReport(mean=0.4, std=None, ci_half_width=None, m=1)
    with pytest.raises(MetricDomainError):
        aggregate_runs([])


def test_repair_transitions_and_sankey():
    ss = make_set({
        "a": [(False, True, True, "TypeError")],
        "b": [(False, True, False, "TypeError")],
        "c": [(False, True, False, "Timeout")],
        "d": [(True, False, None, None)],
    }, 1)
    report = repair_transitions(ss)
    assert report.transitions == {"TypeError": (2, 1), "Timeout": (1, 0)}
    sankey = report.to_sankey_json()
    assert '"Repaired"' in sankey and '"Still failing"' in sankey


def test_build_report_pairs_edit_with_2k():
    ss = make_set({
        "a": [(False, True, True, "TypeError"), (True, False, None, None)],
        "b": [(False, True, False, "Timeout"), (False, False, None, None)],
    }, 2)
    report = build_report(ss, ks=(1,))
    assert 2 in report.estimated  # pass@2k computed for the comparison column
    assert 1 in report.edit_estimated
    table = report.to_table()
    assert "edit pass@1" in table and "pass@2k" in table
    assert report.task_count == 2


def test_build_report_without_repairs_has_no_edit_columns():
    ss = make_set({"a": [(True, False, None, None)]}, 1)
    report = build_report(ss, ks=(1,))
    assert report.edit_estimated == {}
    assert "edit" not in report.to_table()
