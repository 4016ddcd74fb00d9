from __future__ import annotations

import random
import statistics

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from askdb.connect import Connection, ConnectionSpec, TableRef
from askdb.profiling import DistinctSketch, approx_distinct, clean_values, profile_table

from .conftest import profile_of


def oracle_fence(values):
    """Independent Tukey filter: stdlib type-7 quartiles, iterated like the
    contract demands (idempotent)."""
    kept = list(values)
    while True:
        if len(kept) == 1:
            return kept
        q1, _, q3 = statistics.quantiles(kept, n=4, method="inclusive")
        iqr = q3 - q1
        nxt = [v for v in kept if q1 - 1.5 * iqr <= v <= q3 + 1.5 * iqr]
        if not nxt:
            return list(values)
        if len(nxt) == len(kept):
            return nxt
        kept = nxt


def test_profile_region_key(profiles):
    p = profile_of(profiles, "region", "r_regionkey")
    assert p.count == 5
    assert p.distinct_estimate == 5
    assert p.distinct_is_exact is True
    assert p.nulls == 0


def test_profile_all_null_column(tmp_path):
    conn = Connection(ConnectionSpec(id="t", location=str(tmp_path / "t.db")))
    path = tmp_path / "n.csv"
    path.write_text("k,v\n" + "\n".join(f"{i}," for i in range(10)) + "\n")
    conn.ingest_csv(path, TableRef("t", "n"))
    profile = profile_table(conn, "n")[1]
    assert profile.count == 10 and profile.nulls == 10
    assert profile.cleaned_sample == []
    assert profile.min is None and profile.max is None


def test_profile_numeric_closed_form(tmp_path):
    conn = Connection(ConnectionSpec(id="t", location=str(tmp_path / "t.db")))
    path = tmp_path / "h.csv"
    path.write_text("v\n" + "\n".join(str(i) for i in range(1, 101)) + "\n")
    conn.ingest_csv(path, TableRef("t", "h"))
    (p,) = profile_table(conn, "h")
    assert p.mean == pytest.approx(50.5)  # closed-form arithmetic mean
    assert p.min == 1 and p.max == 100


def test_clean_drops_numeric_outlier():
    # oracle: statistics.quantiles([1..9,1000], method="inclusive") -> Q1=3.25,
    # Q3=7.75, fence [-3.5, 14.5] excludes only 1000
    values = [1, 2, 3, 4, 5, 6, 7, 8, 9, 1000]
    assert oracle_fence(values) == list(range(1, 10))
    assert clean_values(values, "numeric") == list(range(1, 10))


def test_clean_keeps_equal_values():
    assert clean_values([5, 5, 5, 5], "numeric") == [5, 5, 5, 5]


def test_clean_strings_by_length():
    long = "abcdefghijklmnopqrstuvwxyz0123456789" * 6  # ~200 chars
    values = ["ab", "cd", "ef", long]
    cleaned = clean_values(values, "string")
    assert long not in cleaned
    assert cleaned == ["ab", "cd", "ef"]


def test_clean_passthrough_dates():
    values = ["2020-01-01", None, "1999-12-31"]
    assert clean_values(values, "date") == ["2020-01-01", "1999-12-31"]


@given(st.lists(st.integers(-10**6, 10**6), min_size=1, max_size=200))
@settings(max_examples=200, deadline=None)
def test_clean_idempotent_and_subset(values):
    once = clean_values(values, "numeric")
    assert clean_values(once, "numeric") == once
    remaining = list(values)
    for v in once:
        remaining.remove(v)  # multiset inclusion


def test_clean_matches_oracle_on_random_vectors():
    rng = random.Random(42)
    for _ in range(1000):
        n = rng.randint(1, 60)
        kind = rng.random()
        if kind < 0.4:
            values = [rng.randint(0, 100) for _ in range(n)]
        elif kind < 0.8:
            values = [rng.gauss(0, 10) for _ in range(n)]
        else:
            values = [rng.choice([1, 2, 3, 10 ** rng.randint(1, 6)]) for _ in range(n)]
        assert clean_values(values, "numeric") == oracle_fence(values)


def test_approx_distinct_empty_stream():
    assert approx_distinct([]) == 0


def test_approx_distinct_thousand_values():
    values = list(range(1000))
    true = len(set(values))  # exact oracle on the same stream
    estimate = approx_distinct(values, precision=14)
    assert 950 <= estimate <= 1050
    assert abs(estimate - true) / true <= 0.05


def test_approx_distinct_single_value_repeated():
    estimate = approx_distinct([42] * 10**6, precision=14)
    assert 1 <= estimate < 2


def test_sketch_merge_associative():
    a = DistinctSketch().update(range(0, 600))
    b = DistinctSketch().update(range(400, 1000))
    merged = a.merge(b)
    true_union = 1000
    assert abs(merged.estimate() - true_union) / true_union <= 0.05
    # order independence
    assert a.merge(b).estimate() == b.merge(a).estimate()


def test_sketch_precision_bounds():
    with pytest.raises(ValueError):
        DistinctSketch(precision=3)
    with pytest.raises(ValueError):
        DistinctSketch(precision=17)


def test_profile_reproducible(tpch_conn):
    a = profile_table(tpch_conn, "customer", seed=11)
    b = profile_table(tpch_conn, "customer", seed=11)
    assert [(p.column, p.cleaned_sample, p.distinct_estimate) for p in a] == [
        (p.column, p.cleaned_sample, p.distinct_estimate) for p in b
    ]


def test_cleaned_sample_nonempty_with_four_values(profiles):
    for table, plist in profiles.items():
        for p in plist:
            if p.count - p.nulls >= 4:
                assert p.cleaned_sample, f"{table}.{p.column} lost its sample"
