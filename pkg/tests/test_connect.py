from __future__ import annotations

import hashlib

import pytest

from askdb.connect import Connection, ConnectionSpec, TableRef, infer_column_type
from askdb.errors import IngestError, PolicyError, SchemaError, ScopeError
from askdb.tpch import REGIONS, generate_csvs


def _conn(tmp_path, name="t.db", scope=None):
    return Connection(ConnectionSpec(id="t", location=str(tmp_path / name), scope=scope))


def test_ingest_header_only_creates_empty_table(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("a,b\n")
    conn = _conn(tmp_path)
    assert conn.ingest_csv(path, TableRef("t", "empty")) == 0
    assert conn.count_rows("empty") == 0


def test_ingest_region_csv_loads_five_rows(tmp_path):
    paths = generate_csvs(tmp_path / "csv", seed=7)
    # oracle: count data lines in the generated file
    lines = paths["region"].read_text().strip().splitlines()
    assert len(lines) - 1 == len(REGIONS) == 5
    conn = _conn(tmp_path)
    assert conn.ingest_csv(paths["region"], TableRef("t", "region")) == 5


def test_mixed_column_stays_text(tmp_path):
    # majority-type oracle run by hand: {"1","2","x"} does not fully parse
    assert infer_column_type(["1", "2", "x"]) == "string"
    path = tmp_path / "m.csv"
    path.write_text("v\n1\n2\nx\n")
    conn = _conn(tmp_path)
    conn.ingest_csv(path, TableRef("t", "m"))
    assert conn.visible_columns("m") == [("v", "string")]
    assert conn.execute_sql("SELECT v FROM m").rows == [("1",), ("2",), ("x",)]


def test_ingest_missing_header_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("")
    with pytest.raises(IngestError):
        _conn(tmp_path).ingest_csv(path, TableRef("t", "bad"))


def test_ingest_arity_mismatch_names_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n3\n")
    with pytest.raises(IngestError) as err:
        _conn(tmp_path).ingest_csv(path, TableRef("t", "bad"))
    assert err.value.line == 3


def test_list_tables_tpch_has_eight(tpch_conn):
    tables = tpch_conn.list_tables()
    assert len(tables) == 8
    assert {ref.name for ref, _ in tables} == {
        "customer", "lineitem", "nation", "orders", "part", "partsupp", "region", "supplier",
    }


def test_scope_filters_tables_and_columns(tmp_path):
    generate_csvs(tmp_path / "csv", seed=7)
    open_conn = _conn(tmp_path)
    open_conn.ingest_csv(tmp_path / "csv" / "customer.csv", TableRef("t", "customer"))
    open_conn.ingest_csv(tmp_path / "csv" / "region.csv", TableRef("t", "region"))
    scoped = _conn(tmp_path, scope={"customer": ["c_name", "c_nationkey"]})
    tables = scoped.list_tables()
    assert len(tables) == 1
    assert tables[0][1] == [("c_name", "string"), ("c_nationkey", "numeric")]


def test_scope_of_missing_table_fails_at_connect(tmp_path):
    _conn(tmp_path).ingest_csv(_write_tiny(tmp_path), TableRef("t", "tiny"))
    with pytest.raises(ScopeError):
        _conn(tmp_path, scope={"nope": None})


def _write_tiny(tmp_path):
    path = tmp_path / "tiny.csv"
    path.write_text("x\n1\n2\n3\n")
    return path


def test_fetch_sample_small_table_keeps_all(tmp_path):
    conn = _conn(tmp_path)
    conn.ingest_csv(_write_tiny(tmp_path), TableRef("t", "tiny"))
    batch = conn.fetch_sample("tiny", max_rows=100, seed=1)
    assert len(batch.rows) == 3
    assert batch.truncated is False


def test_fetch_sample_deterministic(tmp_path):
    conn = _conn(tmp_path)
    path = tmp_path / "ten.csv"
    path.write_text("x\n" + "\n".join(str(i) for i in range(10)) + "\n")
    conn.ingest_csv(path, TableRef("t", "ten"))
    a = conn.fetch_sample("ten", max_rows=5, seed=42)
    b = conn.fetch_sample("ten", max_rows=5, seed=42)
    assert a.rows == b.rows and a.truncated and b.truncated
    c = conn.fetch_sample("ten", max_rows=5, seed=43)
    assert c.rows != a.rows  # overwhelmingly likely under a different seed


def test_fetch_sample_lineitem_truncates(tpch_conn):
    assert tpch_conn.count_rows("lineitem") > 100  # generator yields thousands
    batch = tpch_conn.fetch_sample("lineitem", max_rows=100, seed=7)
    assert len(batch.rows) == 100
    assert batch.truncated is True


def test_fetch_sample_unknown_column(tpch_conn):
    with pytest.raises(SchemaError):
        tpch_conn.fetch_sample("region", column="nope", max_rows=10)


def test_execute_select_one(tpch_conn):
    batch = tpch_conn.execute_sql("SELECT 1")
    assert batch.rows == [(1,)]
    assert len(batch.columns) == 1


def test_execute_rejects_writes(tpch_conn):
    with pytest.raises(PolicyError):
        tpch_conn.execute_sql("DROP TABLE region")
    with pytest.raises(PolicyError):
        tpch_conn.execute_sql("SELECT 1; SELECT 2")


def test_region_count_is_five(tpch_conn):
    assert tpch_conn.execute_sql("SELECT COUNT(*) FROM region").rows[0][0] == 5


def test_execute_leaves_store_unchanged(tmp_path):
    conn = _conn(tmp_path)
    conn.ingest_csv(_write_tiny(tmp_path), TableRef("t", "tiny"))
    digest = hashlib.sha256((tmp_path / "t.db").read_bytes()).hexdigest()
    conn.execute_sql("SELECT * FROM tiny")
    conn.fetch_sample("tiny", max_rows=2, seed=1)
    assert hashlib.sha256((tmp_path / "t.db").read_bytes()).hexdigest() == digest


def test_scope_enforced_on_execution(tmp_path):
    generate_csvs(tmp_path / "csv", seed=7)
    base = _conn(tmp_path)
    base.ingest_csv(tmp_path / "csv" / "customer.csv", TableRef("t", "customer"))
    base.ingest_csv(tmp_path / "csv" / "region.csv", TableRef("t", "region"))
    scoped = _conn(tmp_path, scope={"customer": ["c_name", "c_nationkey"]})
    with pytest.raises(PolicyError):
        scoped.execute_sql("SELECT * FROM region")
    with pytest.raises(PolicyError):
        scoped.execute_sql("SELECT c_acctbal FROM customer")
    ok = scoped.execute_sql("SELECT c_name FROM customer", row_limit=3)
    scope_cols = {"c_name", "c_nationkey"}
    assert {n for n, _ in ok.columns} <= scope_cols


def test_row_limit_marks_truncation(tpch_conn):
    batch = tpch_conn.execute_sql("SELECT * FROM customer", row_limit=10)
    assert len(batch.rows) == 10 and batch.truncated
