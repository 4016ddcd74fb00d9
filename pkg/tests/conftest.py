from __future__ import annotations

import pathlib

import pytest

from askdb import tpch
from askdb.adjudicator import DeterministicAdjudicator
from askdb.connect import TableRef
from askdb.graph import build_graph
from askdb.intent import train_keyword_index
from askdb.pipeline import QueryPipeline
from askdb.semantics import CustomMeasure, register_custom_measure

SEED = 7


@pytest.fixture(scope="session")
def tpch_conn(tmp_path_factory):
    db = tmp_path_factory.mktemp("tpch") / "tpch.db"
    return tpch.create_database(db, seed=SEED)


@pytest.fixture(scope="session")
def graph(tpch_conn):
    g = build_graph(tpch_conn, seed=SEED)
    register_custom_measure(
        g,
        CustomMeasure(
            name="revenue",
            sql_expression="SUM(l_extendedprice * (1 - l_discount))",
            source_tables=[TableRef("tpch", "lineitem")],
            aliases=["revenue", "sales"],
        ),
        tpch_conn,
    )
    return g


@pytest.fixture(scope="session")
def keyword_index(graph):
    return train_keyword_index(graph)


@pytest.fixture(scope="session")
def pipeline(graph, tpch_conn, keyword_index):
    return QueryPipeline(graph, tpch_conn, index=keyword_index)


@pytest.fixture()
def adjudicator():
    return DeterministicAdjudicator()


@pytest.fixture(scope="session")
def profiles(tpch_conn):
    from askdb.profiling import profile_table

    return {
        table: profile_table(tpch_conn, table, seed=SEED)
        for table in tpch_conn.visible_tables()
    }


def profile_of(profiles, table, column):
    for p in profiles[table]:
        if p.column == column:
            return p
    raise KeyError(f"{table}.{column}")
