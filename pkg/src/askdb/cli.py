"""Operator-facing command line: train, query, serve, eval, ingest.

Exit codes: 0 success, 2 user error, 1 internal error. Every command offers
--json for machine-readable output.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import evalkit, tpch
from .adjudicator import default_adjudicator
from .connect import Connection, ConnectionSpec, TableRef
from .errors import AskdbError
from .graph import GraphBuilder, load_graph, save_graph
from .intent import predict_tables, train_keyword_index
from .pipeline import QueryPipeline
from .semantics import CustomMeasure, register_custom_measure

USER_ERRORS = (AskdbError, FileNotFoundError, ValueError)


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _adjudicator(kind: str, endpoint: str):
    if kind == "remote" and not endpoint:
        raise click.UsageError("--adjudicator remote requires --endpoint")
    if kind == "remote":
        return default_adjudicator("remote", endpoint=endpoint)
    return default_adjudicator("deterministic")


def _open(conn_id: str, db: str, dialect: str, scope=None) -> Connection:
    return Connection(ConnectionSpec(id=conn_id, dialect=dialect, location=db, scope=scope))


@click.group()
@click.version_option(package_name="askdb")
def main():
    """Natural-language search over relational databases."""


@main.command()
@click.option("--conn", "conn_id", default="default", help="connection id")
@click.option("--db", required=True, help="embedded store file")
@click.option("--out", required=True, help="output graph file (.skg)")
@click.option("--seed", default=7, type=int, show_default=True)
@click.option("--dialect", default="embedded", show_default=True)
@click.option("--adjudicator", "adjudicator_kind", default="deterministic",
              type=click.Choice(["deterministic", "remote"]), show_default=True)
@click.option("--endpoint", default="", help="remote adjudicator base URL")
@click.option("--sample-size", default=100_000, type=int, show_default=True)
@click.option("--questions-per-table", default=50, type=int, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def train(conn_id, db, out, seed, dialect, adjudicator_kind, endpoint, sample_size,
          questions_per_table, as_json):
    """Build the semantic knowledge graph and save it."""
    try:
        conn = _open(conn_id, db, dialect)
        builder = GraphBuilder(
            conn,
            adjudicator=_adjudicator(adjudicator_kind, endpoint),
            seed=seed,
            sample_size=sample_size,
            questions_per_table=questions_per_table,
        )
        existing = Path(out)
        if existing.exists():
            graph, report = builder.incremental_update(load_graph(existing))
            changes = report.lines() or ["no changes"]
        else:
            graph = builder.build()
            changes = [f"trained {len(graph.tables)} tables, {len(graph.joins)} joins, "
                       f"{len(graph.measures)} measures, {len(graph.question_bank)} sample questions"]
        save_graph(graph, out)
        if as_json:
            click.echo(json.dumps({"graph": str(out), "version": graph.version, "changes": changes}))
        else:
            click.echo(f"graph v{graph.version} -> {out}")
            for line in changes:
                click.echo(f"  {line}")
    except USER_ERRORS as exc:
        _fail(str(exc), 2)


@main.command()
@click.argument("question")
@click.option("--graph", "graph_path", required=True)
@click.option("--db", required=True)
@click.option("--conn", "conn_id", default="default")
@click.option("--dialect", default="embedded", show_default=True)
@click.option("--adjudicator", "adjudicator_kind", default="deterministic",
              type=click.Choice(["deterministic", "remote"]), show_default=True)
@click.option("--endpoint", default="")
@click.option("--limit", default=100, type=int, show_default=True, help="row limit")
@click.option("--measure", "measures", multiple=True,
              help="register a custom measure, NAME=SQL_EXPRESSION@TABLE")
@click.option("--json", "as_json", is_flag=True)
def query(question, graph_path, db, conn_id, dialect, adjudicator_kind, endpoint,
          limit, measures, as_json):
    """Compile one question, print the breakdown and the result table."""
    try:
        graph = load_graph(graph_path)
        conn = _open(graph.connection_id or conn_id, db, dialect)
        for spec in measures:
            name, _, rest = spec.partition("=")
            expression, _, table = rest.rpartition("@")
            register_custom_measure(
                graph,
                CustomMeasure(
                    name=name.strip(),
                    sql_expression=expression.strip(),
                    source_tables=[TableRef(graph.connection_id, table.strip())],
                ),
                conn,
            )
        pipeline = QueryPipeline(
            graph, conn, adjudicator=_adjudicator(adjudicator_kind, endpoint), dialect=dialect
        )
        response = pipeline.answer(question, row_limit=limit)
        if as_json:
            click.echo(json.dumps(response.to_dict(), default=str))
            return
        click.echo(f"SQL: {response.sql.text}")
        breakdown = response.breakdown
        for label in ("inputs", "joins", "filters", "grouping", "aggregates", "ordering"):
            if breakdown.get(label):
                click.echo(f"{label}: {'; '.join(breakdown[label])}")
        if breakdown.get("limit"):
            click.echo(f"limit: {breakdown['limit']}")
        if breakdown.get("uninterpreted"):
            click.echo(f"uninterpreted: {'; '.join(breakdown['uninterpreted'])}")
        if response.summary:
            click.echo(f"summary: {response.summary}")
        _print_table(response)
    except USER_ERRORS as exc:
        _fail(str(exc), 2)


def _print_table(response) -> None:
    names = [n for n, _ in response.rows.columns]
    widths = [len(n) for n in names]
    rows = [[_cell(v) for v in r] for r in response.rows.rows[:50]]
    for row in rows:
        widths = [max(w, len(c)) for w, c in zip(widths, row)]
    click.echo(" | ".join(n.ljust(w) for n, w in zip(names, widths)))
    click.echo("-+-".join("-" * w for w in widths))
    for row in rows:
        click.echo(" | ".join(c.ljust(w) for c, w in zip(row, widths)))
    if len(response.rows.rows) > 50:
        click.echo(f"... {len(response.rows.rows) - 50} more rows")


def _cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.2f}"
    return "" if v is None else str(v)


@main.command()
@click.option("--config", "config_path", required=True, help="service.toml")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=None, type=int)
def serve(config_path, host, port):
    """Start the HTTP service."""
    try:
        from .service import serve as run_service

        run_service(config_path, host=host, port=port)
    except USER_ERRORS as exc:
        _fail(str(exc), 2)


@main.command()
@click.option("--db", required=True, help="embedded store file")
@click.option("--conn", "conn_id", default="default")
@click.option("--table", "table_name", default="", help="target table (defaults to file stem)")
@click.option("--csv", "csv_path", default="", help="CSV file to load")
@click.option("--demo", default="", type=click.Choice(["", "tpch"]), help="generate a bundled demo dataset")
@click.option("--seed", default=7, type=int, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def ingest(db, conn_id, table_name, csv_path, demo, seed, as_json):
    """Load a CSV (or the bundled demo dataset) into the embedded store."""
    try:
        if demo == "tpch":
            conn = tpch.create_database(db, seed=seed, connection_id=conn_id)
            counts = {t: conn.count_rows(t) for t in conn.visible_tables()}
            if as_json:
                click.echo(json.dumps({"tables": counts}))
            else:
                for t, n in counts.items():
                    click.echo(f"{t}: {n} rows")
            return
        if not csv_path:
            raise click.UsageError("either --csv or --demo is required")
        conn = _open(conn_id, db, "embedded")
        table = table_name or Path(csv_path).stem
        loaded = conn.ingest_csv(csv_path, TableRef(conn_id, table))
        if as_json:
            click.echo(json.dumps({"table": table, "rows": loaded}))
        else:
            click.echo(f"{table}: {loaded} rows")
    except USER_ERRORS as exc:
        _fail(str(exc), 2)


@main.command(name="eval")
@click.option("--suite", required=True, type=click.Choice(["join", "retrieval", "e2e", "all"]))
@click.option("--graph", "graph_path", required=True)
@click.option("--db", required=True)
@click.option("--gold", "gold_path", default="", help="override the bundled gold file")
@click.option("--json", "as_json", is_flag=True)
def eval_cmd(suite, graph_path, db, gold_path, as_json):
    """Run the evaluation suites and print metric tables."""
    try:
        graph = load_graph(graph_path)
        conn = _open(graph.connection_id or "default", db, "embedded")
        out: dict = {}
        if suite in ("join", "all"):
            gold_text = Path(gold_path).read_text() if gold_path and suite == "join" else tpch.gold_joins_text()
            gold = evalkit.parse_gold_joins(gold_text)
            p, r, f1 = evalkit.compute_join_metrics(graph.joins, gold)
            out["join"] = {"precision": p, "recall": r, "f1": f1}
        if suite in ("retrieval", "all"):
            gold_text = Path(gold_path).read_text() if gold_path and suite == "retrieval" else tpch.gold_retrieval_text()
            gold = evalkit.parse_gold_retrieval(gold_text)
            index = train_keyword_index(graph)
            adjudicator = default_adjudicator("deterministic")
            predicted = []
            for question, _ in gold:
                try:
                    scores, _m = predict_tables(question, index, graph, adjudicator)
                    predicted.append(set(scores))
                except AskdbError:
                    predicted.append(set())
            metrics = evalkit.compute_retrieval_metrics(predicted, [g for _, g in gold])
            out["retrieval"] = {
                "precision": metrics.precision,
                "recall": metrics.recall,
                "f1": metrics.f1,
                "perfect_recall": metrics.perfect_recall,
            }
        if suite in ("e2e", "all"):
            gold_text = Path(gold_path).read_text() if gold_path and suite == "e2e" else tpch.gold_e2e_text()
            cases = evalkit.parse_gold_e2e(gold_text)
            if graph.table("lineitem") and not any(m.name == "revenue" for m in graph.measures):
                register_custom_measure(
                    graph,
                    CustomMeasure(
                        name="revenue",
                        sql_expression="SUM(l_extendedprice * (1 - l_discount))",
                        source_tables=[TableRef(graph.connection_id, "lineitem")],
                        aliases=["revenue", "sales"],
                    ),
                    conn,
                )
            pipeline = QueryPipeline(graph, conn)
            results = evalkit.run_e2e_suite(
                lambda q: pipeline.compile(q).artifact.text, conn, cases, schema=graph
            )
            matched = sum(r.rows_match for r in results)
            out["e2e"] = {
                "matched": matched,
                "total": len(results),
                "verdicts": {
                    v: sum(1 for r in results if r.verdict and r.verdict.overall == v)
                    for v in ("Correct", "Partial", "Incorrect")
                },
            }
        if as_json:
            click.echo(json.dumps(out))
            return
        if "join" in out:
            j = out["join"]
            click.echo(f"join inference: precision={j['precision']:.3f} recall={j['recall']:.3f} f1={j['f1']:.3f}")
        if "retrieval" in out:
            r = out["retrieval"]
            click.echo(
                f"table retrieval: precision={r['precision']:.3f} recall={r['recall']:.3f} "
                f"f1={r['f1']:.3f} perfect_recall={r['perfect_recall']:.3f}"
            )
        if "e2e" in out:
            e = out["e2e"]
            click.echo(f"end-to-end: {e['matched']}/{e['total']} row-set matches, verdicts={e['verdicts']}")
    except USER_ERRORS as exc:
        _fail(str(exc), 2)


if __name__ == "__main__":
    main()
