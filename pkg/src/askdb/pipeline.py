"""End-to-end query pipeline: intent -> fragment -> parse -> ground -> tree
-> consolidate -> qualify -> decode -> execute, with a human-readable
breakdown of every interpreted operator.

Also hosts the auto-prompt scope logic: guided construction bypasses the
natural-language stages entirely and builds the tree directly.
"""

from __future__ import annotations

import time
import uuid
from dataclasses import dataclass, field
from datetime import date
from typing import Optional

from .adjudicator import AdjudicationRequest, DeterministicAdjudicator
from .connect import Connection, RowBatch, DATE, NUMERIC, STRING
from .errors import AskdbError, NoInputError, PlanError
from .graph import SemanticKnowledgeGraph
from .intent import (
    IntentResolution,
    KeywordIndex,
    resolve_intent,
    select_join_path,
    train_keyword_index,
)
from .plan import (
    build_tree,
    consolidate,
    fragment_query,
    ground_operators,
    parse_fragments,
    qualify_rls,
)
from .plan.ground import GroundedColumn, GroundedMeasure, GroundedOperators
from .plan.parsing import AggregateSpec, Condition, Literal, OrderKey
from .plan.tree import Aggregate, Filter, Join, Limit, OperatorTree, OrderBy, Project, Qualify, Scan, walk
from .sqlgen import SqlArtifact, decode_sql, rewrite_and_validate

_OP_WORDS = {
    "eq": "is", "neq": "is not", "gt": "is greater than", "gte": "is at least",
    "lt": "is less than", "lte": "is at most", "between": "is between",
    "in": "is one of", "contains": "contains", "prefix": "starts with",
}


@dataclass
class QueryResponse:
    rows: RowBatch
    sql: SqlArtifact
    breakdown: dict
    summary: Optional[str] = None
    timing: dict = field(default_factory=dict)
    request_id: str = ""

    def to_dict(self) -> dict:
        return {
            "request_id": self.request_id,
            "rows": {
                "columns": [{"name": n, "type": t} for n, t in self.rows.columns],
                "values": [list(r) for r in self.rows.rows],
                "truncated": self.rows.truncated,
            },
            "sql": {
                "dialect": self.sql.dialect,
                "text": self.sql.text,
                "provenance": self.sql.provenance,
            },
            "breakdown": self.breakdown,
            "summary": self.summary,
            "timing": self.timing,
        }


@dataclass
class CompiledQuery:
    tree: OperatorTree
    artifact: SqlArtifact
    resolution: IntentResolution
    timing: dict = field(default_factory=dict)


class QueryPipeline:
    """Request-scoped composition over an immutable graph + index."""

    def __init__(
        self,
        graph: SemanticKnowledgeGraph,
        conn: Optional[Connection] = None,
        adjudicator=None,
        index: Optional[KeywordIndex] = None,
        dialect: str = "embedded",
        hierarchies: Optional[dict] = None,
        now: Optional[date] = None,
        rls: Optional[dict] = None,
        rewrite: bool = False,
        context_k: int = 5,
    ):
        self.graph = graph
        self.conn = conn
        self.adjudicator = adjudicator or DeterministicAdjudicator()
        self.index = index or train_keyword_index(graph)
        self.dialect = dialect
        self.hierarchies = hierarchies or {}
        self.now = now
        self.rls = rls or {}
        self.rewrite = rewrite
        self.context_k = context_k

    # -- compile ----------------------------------------------------------------

    def compile(self, question: str, role: str = "") -> CompiledQuery:
        timing: dict[str, float] = {}
        t0 = time.perf_counter()

        def mark(stage: str) -> None:
            nonlocal t0
            now_t = time.perf_counter()
            timing[stage] = round((now_t - t0) * 1000.0, 3)
            t0 = now_t

        resolution = resolve_intent(
            question, self.graph, self.index, self.adjudicator, k=self.context_k
        )
        mark("intent")

        fragments = fragment_query(question, resolution.operation_context, self.adjudicator)
        mark("fragment")
        parsed = parse_fragments(fragments)
        mark("parse")

        reachable = resolution.reachable_tables()
        grounded = ground_operators(
            parsed, self.graph, reachable, self.adjudicator, seed_tables=resolution.seed_tables
        )
        mark("ground")

        effective = grounded.column_tables()
        if not effective:
            if grounded.limit is None and not grounded.uninterpreted and not question.strip():
                raise PlanError("nothing to plan: empty question")
            effective = set(resolution.seed_tables)
        if not effective:
            raise NoInputError("cannot identify relevant data")
        path = select_join_path(effective, self.graph, question, self.adjudicator)
        tree = build_tree(grounded, path, self.graph)
        mark("tree")

        tree = consolidate(tree)
        mark("consolidate")
        tree = qualify_rls(tree, self.rls, role)
        mark("qualify")

        artifact = decode_sql(
            tree,
            self.dialect,
            self.graph,
            hierarchies=self.hierarchies,
            now=self.now,
        )
        if self.rewrite and self.conn is not None:
            predicates = [n.predicate for n in walk(tree.root) if isinstance(n, Qualify)]
            artifact = rewrite_and_validate(
                artifact, question, self.graph, self.adjudicator, self.conn, predicates
            )
        mark("decode")
        return CompiledQuery(tree=tree, artifact=artifact, resolution=resolution, timing=timing)

    # -- answer -------------------------------------------------------------------

    def answer(
        self,
        question: str,
        role: str = "",
        row_limit: int = 10_000,
        summarize: bool = True,
    ) -> QueryResponse:
        compiled = self.compile(question, role=role)
        t0 = time.perf_counter()
        if self.conn is None:
            raise AskdbError("no connection bound to this pipeline")
        rows = self.conn.execute_sql(compiled.artifact.text, row_limit=row_limit)
        compiled.timing["execute"] = round((time.perf_counter() - t0) * 1000.0, 3)
        breakdown = build_breakdown(compiled.tree, compiled.resolution, self.graph)
        summary = None
        if summarize:
            resp = self.adjudicator.complete(
                AdjudicationRequest(
                    "summarize",
                    {
                        "question": question,
                        "columns": [n for n, _ in rows.columns],
                        "rows": [list(r) for r in rows.rows[:50]],
                    },
                )
            )
            summary = resp.parsed if resp.usable and isinstance(resp.parsed, str) else None
        return QueryResponse(
            rows=rows,
            sql=compiled.artifact,
            breakdown=breakdown,
            summary=summary,
            timing=compiled.timing,
            request_id=uuid.uuid4().hex,
        )


# ---------------------------------------------------------------------------
# Query breakdown
# ---------------------------------------------------------------------------


def _column_phrase(col) -> str:
    sem = getattr(col, "sem", None)
    return sem.simplified_name if sem is not None else str(col)


def _literal_phrase(lit: Literal) -> str:
    return f"'{lit.value}'" if lit.kind in ("string", "date") else str(lit.value)


def _condition_phrase(cond: Condition) -> str:
    op = _OP_WORDS.get(cond.op, cond.op)
    if cond.op == "between":
        lits = f"{_literal_phrase(cond.literals[0])} and {_literal_phrase(cond.literals[1])}"
    elif cond.op == "in":
        lits = ", ".join(_literal_phrase(l) for l in cond.literals)
    else:
        lits = _literal_phrase(cond.literals[0])
    return f"{_column_phrase(cond.operand)} {op} {lits}"


def _aggregate_phrase(spec: AggregateSpec) -> str:
    if spec.func == "measure" and isinstance(spec.operand, GroundedMeasure):
        return spec.operand.measure.name
    if spec.operand == "*":
        return "row count" if spec.func in ("count", "count_distinct") else f"{spec.func} of all"
    names = {
        "sum": "total", "avg": "average", "min": "minimum", "max": "maximum",
        "count": "count of", "count_distinct": "distinct count of",
    }
    return f"{names.get(spec.func, spec.func)} {_column_phrase(spec.operand)}"


def build_breakdown(tree: OperatorTree, resolution: IntentResolution, graph) -> dict:
    inputs = []
    for node in walk(tree.root):
        if isinstance(node, Scan):
            how = "seed" if node.table.name in resolution.seed_tables else "joined in"
            inputs.append(f"{node.table.name} ({how})")
        elif isinstance(node, Qualify):
            inputs.append(f"{node.table.name} (row-level security applied)")
    joins = [
        f"{n.edge.from_table.name}.{n.edge.from_column} matches {n.edge.to_table.name}.{n.edge.to_column}"
        for n in walk(tree.root)
        if isinstance(n, Join)
    ]
    filters = []
    grouping = []
    aggregates = []
    ordering = []
    limit = None
    for node in walk(tree.root):
        if isinstance(node, Filter):
            filters.extend(_condition_phrase(c) for c in node.conditions)
        elif isinstance(node, Aggregate):
            aggregates.extend(_aggregate_phrase(a) for a in node.aggregates)
            grouping.extend(_column_phrase(g) for g in node.group_by)
        elif isinstance(node, OrderBy):
            for key in node.keys:
                target = (
                    _aggregate_phrase(key.target)
                    if isinstance(key.target, AggregateSpec)
                    else _column_phrase(key.target)
                )
                ordering.append(f"{target} ({'descending' if key.direction == 'desc' else 'ascending'})")
        elif isinstance(node, Limit):
            limit = node.n
    return {
        "inputs": inputs,
        "joins": joins,
        "filters": filters,
        "grouping": grouping,
        "aggregates": aggregates,
        "ordering": ordering,
        "limit": limit,
        "method": resolution.method,
        "uninterpreted": list(tree.uninterpreted),
    }


# ---------------------------------------------------------------------------
# Auto-prompting: scope narrowing and direct tree construction
# ---------------------------------------------------------------------------

AUTOPROMPT_VERBS = ["show", "list", "analyze", "compare", "count"]
_REACH_HOPS = 4


def _neighbor_tables(graph: SemanticKnowledgeGraph, start: set[str], hops: int = _REACH_HOPS) -> set[str]:
    reach = set(start)
    for _ in range(hops):
        grew = False
        for edge in graph.joins:
            a, b = edge.from_table.name, edge.to_table.name
            if a in reach and b not in reach:
                reach.add(b)
                grew = True
            if b in reach and a not in reach:
                reach.add(a)
                grew = True
        if not grew:
            break
    return reach


def autoprompt_scope(graph: SemanticKnowledgeGraph, selection: dict) -> dict:
    """Options for the next step, restricted to tables reachable from what
    is already selected."""
    measures = selection.get("measures") or []
    dimensions = selection.get("dimensions") or []
    anchors: set[str] = set()
    for name in measures:
        m = _find_measure(graph, name)
        if m is None:
            raise AskdbError(f"unknown measure {name!r} in selection")
        anchors.update(r.name for r in m[1])
    for ident in dimensions:
        table = ident.split(".")[0]
        if graph.table(table) is None:
            raise AskdbError(f"unknown dimension {ident!r} in selection")
        anchors.add(table)
    reach = _neighbor_tables(graph, anchors) if anchors else {e.ref.name for e in graph.tables}

    measure_options = []
    for m in graph.measures:
        if all(r.name in reach for r in m.source_tables) or not anchors:
            measure_options.append({"name": m.name, "tables": [r.name for r in m.source_tables]})
    for entry in graph.tables:
        if anchors and entry.ref.name not in reach:
            continue
        for sem in entry.columns:
            if sem.role == "measure" and sem.data_type == NUMERIC:
                measure_options.append(
                    {"name": f"total {sem.simplified_name}", "tables": [entry.ref.name]}
                )
    dimension_options = []
    filter_options = []
    for entry in graph.tables:
        if anchors and entry.ref.name not in reach:
            continue
        for sem, prof in zip(entry.columns, entry.profiles):
            if sem.role != "dimension" or sem.pii:
                continue
            if sem.data_type not in (STRING, DATE):
                continue
            ident = f"{entry.ref.name}.{sem.name}"
            dimension_options.append({"id": ident, "label": sem.simplified_name})
            if sem.data_type == STRING and 0 < prof.distinct_estimate <= 50:
                filter_options.append(
                    {
                        "id": ident,
                        "label": sem.simplified_name,
                        "values": sorted({str(v) for v in (prof.distinct_values or prof.cleaned_sample)})[:50],
                    }
                )
    complete = bool(selection.get("verb")) and bool(measures) and bool(dimensions)
    return {
        "verbs": AUTOPROMPT_VERBS,
        "measures": measure_options,
        "dimensions": dimension_options,
        "filters": filter_options,
        "complete": complete,
    }


def _find_measure(graph: SemanticKnowledgeGraph, name: str):
    low = name.strip().lower()
    for m in graph.measures:
        if m.name.lower() == low or low in [a.lower() for a in m.aliases]:
            return ("measure", m.source_tables, m)
    if low.startswith("total "):
        rest = low[6:]
        for entry in graph.tables:
            for sem in entry.columns:
                if sem.simplified_name == rest and sem.role == "measure":
                    return ("column", [entry.ref], sem)
    return None


def compile_autoprompt(
    graph: SemanticKnowledgeGraph, selection: dict, adjudicator=None
) -> OperatorTree:
    """A fully specified selection compiles directly into a valid tree,
    bypassing fragmentation, parsing and grounding."""
    measures = selection.get("measures") or []
    dimensions = selection.get("dimensions") or []
    raw_filters = selection.get("filters") or []
    if not measures or not dimensions:
        raise PlanError("auto-prompt selection needs at least one measure and one dimension")
    grounded = GroundedOperators()
    tables: set[str] = set()
    for name in measures:
        found = _find_measure(graph, name)
        if found is None:
            raise AskdbError(f"unknown measure {name!r} in selection")
        kind, refs, obj = found
        tables.update(r.name for r in refs)
        if kind == "measure":
            grounded.aggregates.append(AggregateSpec("measure", GroundedMeasure(obj)))
        else:
            grounded.aggregates.append(AggregateSpec("sum", GroundedColumn(obj)))
    for ident in dimensions:
        table, _, column = ident.partition(".")
        sem = graph.column(table, column)
        if sem is None:
            raise AskdbError(f"unknown dimension {ident!r} in selection")
        grounded.group_by.append(GroundedColumn(sem))
        tables.add(table)
    for f in raw_filters:
        table, _, column = str(f.get("id", "")).partition(".")
        sem = graph.column(table, column)
        if sem is None:
            raise AskdbError(f"unknown filter column {f.get('id')!r} in selection")
        op = f.get("op", "eq")
        values = f.get("values") or [f.get("value")]
        lits = [Literal(v, "string" if isinstance(v, str) else "number") for v in values if v is not None]
        grounded.filters.append(Condition(GroundedColumn(sem), "in" if len(lits) > 1 else op, lits))
        tables.add(table)
    path = select_join_path(tables, graph, adjudicator=adjudicator)
    tree = build_tree(grounded, path, graph)
    return consolidate(tree)
