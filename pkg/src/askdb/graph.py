"""The semantic knowledge graph: assembly, persistence, versioning,
incremental update, and the pre-generated sample-question bank.

Training is single-writer; a built graph is immutable on the serving path.
All per-table randomness is derived from (seed, table name) so an
incremental update reproduces exactly what a from-scratch rebuild computes.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from .adjudicator import DeterministicAdjudicator
from .connect import BOOLEAN, DATE, NUMERIC, STRING, Connection, TableRef
from .errors import GraphError, GraphFormatError
from .joins import JoinConfig, JoinEdge, PrimaryKey, detect_primary_keys, score_ind_candidates, validate_joins
from .profiling import ColumnProfile, profile_table
from .semantics import (
    ColumnSemantics,
    CustomMeasure,
    auto_count_distinct_measures,
    build_aliases,
    classify_column,
    describe_entity,
    detect_pii,
    simplify_name,
)

FORMAT_VERSION = 1


def _derive_seed(seed: int, *parts: str) -> int:
    digest = hashlib.blake2b(
        ("|".join([str(seed), *parts])).encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big")


@dataclass
class SampleQuestion:
    text: str
    tables: list[str]
    operations: dict = field(default_factory=dict)

    def to_payload(self) -> dict:
        return {"text": self.text, "operations": self.operations}


@dataclass
class TableEntry:
    ref: TableRef
    description: str
    columns: list[ColumnSemantics]
    profiles: list[ColumnProfile]
    fingerprint: str
    row_count: int

    def column(self, name: str) -> Optional[ColumnSemantics]:
        for sem in self.columns:
            if sem.name == name:
                return sem
        return None


@dataclass
class SemanticKnowledgeGraph:
    connection_id: str
    version: int = 1
    seed: int = 7
    tables: list[TableEntry] = field(default_factory=list)
    joins: list[JoinEdge] = field(default_factory=list)
    measures: list[CustomMeasure] = field(default_factory=list)
    primary_keys: list[PrimaryKey] = field(default_factory=list)
    question_bank: list[SampleQuestion] = field(default_factory=list)
    created_at: str = ""
    updated_at: str = ""

    def table(self, name: str) -> Optional[TableEntry]:
        for entry in self.tables:
            if entry.ref.name == name:
                return entry
        return None

    def table_refs(self) -> list[TableRef]:
        return [entry.ref for entry in self.tables]

    def column(self, table: str, name: str) -> Optional[ColumnSemantics]:
        entry = self.table(table)
        return entry.column(name) if entry else None

    def bump_version(self) -> None:
        self.version += 1
        self.updated_at = _now()
        self._catalog = None  # grounding catalog is derived state

    def validate(self) -> list[str]:
        """Referential closure; returns violations (empty when valid)."""
        problems = []
        names = {e.ref.name for e in self.tables}
        columns = {(e.ref.name, c.name) for e in self.tables for c in e.columns}
        for edge in self.joins:
            for table, col in (
                (edge.from_table.name, edge.from_column),
                (edge.to_table.name, edge.to_column),
            ):
                if (table, col) not in columns:
                    problems.append(f"dangling join edge {edge}")
                    break
        for measure in self.measures:
            for ref in measure.source_tables:
                if ref.name not in names:
                    problems.append(f"measure {measure.name!r} references missing table {ref.name!r}")
        for pk in self.primary_keys:
            if (pk.table.name, pk.column) not in columns:
                problems.append(f"primary key {pk.table.name}.{pk.column} missing")
        for q in self.question_bank:
            for t in q.tables:
                if t not in names:
                    problems.append(f"question {q.text!r} references missing table {t!r}")
        for entry in self.tables:
            for sem, prof in zip(entry.columns, entry.profiles):
                if sem.pii and (prof.cleaned_sample or prof.distinct_values):
                    problems.append(f"PII column {entry.ref.name}.{sem.name} retains samples")
        return problems


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def fingerprint_table(conn: Connection, table: str) -> str:
    """Cheap change detection: DDL + row count + per-column min/max/distinct."""
    pieces = [conn.table_ddl(table), str(conn.count_rows(table))]
    for column, _ in conn.visible_columns(table):
        row = conn.execute_sql(
            f'SELECT MIN("{column}"), MAX("{column}"), COUNT(DISTINCT "{column}") FROM "{table}"',
            row_limit=1,
        ).rows[0]
        pieces.append(f"{column}|{row[0]}|{row[1]}|{row[2]}")
    return hashlib.sha256("\n".join(pieces).encode()).hexdigest()


@dataclass
class ChangeReport:
    reprofiled: list[str] = field(default_factory=list)
    added_tables: list[str] = field(default_factory=list)
    dropped_tables: list[str] = field(default_factory=list)
    joins_added: list[str] = field(default_factory=list)
    joins_removed: list[str] = field(default_factory=list)
    measures_added: list[str] = field(default_factory=list)
    measures_removed: list[str] = field(default_factory=list)

    def empty(self) -> bool:
        return not any(getattr(self, f) for f in self.__dataclass_fields__)

    def lines(self) -> list[str]:
        out = []
        for label, items in (
            ("re-profiled", self.reprofiled),
            ("added table", self.added_tables),
            ("dropped table", self.dropped_tables),
            ("join added", self.joins_added),
            ("join removed", self.joins_removed),
            ("measure added", self.measures_added),
            ("measure removed", self.measures_removed),
        ):
            out.extend(f"{label}: {item}" for item in items)
        return out


class GraphBuilder:
    """Runs profile -> semantics -> join inference -> question generation.

    `stage_calls` counts per-stage table work so incremental runs can be
    asserted to touch only what changed.
    """

    def __init__(
        self,
        conn: Connection,
        adjudicator=None,
        seed: int = 7,
        sample_size: int = 100_000,
        questions_per_table: int = 50,
        join_config: Optional[JoinConfig] = None,
    ):
        self.conn = conn
        self.adjudicator = adjudicator or DeterministicAdjudicator()
        self.seed = seed
        self.sample_size = sample_size
        self.questions_per_table = questions_per_table
        self.join_config = join_config or JoinConfig()
        self.stage_calls: dict[str, list[str]] = {
            "profile": [],
            "semantics": [],
            "joins": [],
            "questions": [],
        }

    # -- stages ---------------------------------------------------------------

    def _profile(self, table: str) -> tuple[list[ColumnProfile], list[ColumnProfile]]:
        self.stage_calls["profile"].append(table)
        round1 = profile_table(
            self.conn, table, self.sample_size, seed=_derive_seed(self.seed, "profile1", table)
        )
        round2 = profile_table(
            self.conn, table, self.sample_size, seed=_derive_seed(self.seed, "profile2", table)
        )
        return round1, round2

    def _semantics(self, table: str, profiles: list[ColumnProfile]) -> TableEntry:
        self.stage_calls["semantics"].append(table)
        columns: list[ColumnSemantics] = []
        for profile in profiles:
            sem = classify_column(profile, {"table": table}, self.adjudicator)
            sem.simplified_name = simplify_name(profile.column, table, self.adjudicator)
            sem.aliases = build_aliases(profile.column, sem.simplified_name, table)
            sem.pii = detect_pii(profile, profile.column, self.adjudicator)
            if sem.pii:
                profile.cleaned_sample = []
                profile.distinct_values = []
                profile.raw_sample_size = 0
            sem.description = describe_entity(
                "column",
                profile.column,
                sem.simplified_name,
                profile=profile,
                pii=sem.pii,
                adjudicator=self.adjudicator,
            )
            columns.append(sem)
        row_count = profiles[0].count if profiles else 0
        described = describe_entity(
            "table",
            table,
            table,
            extra=f"{len(columns)} columns and {row_count} rows",
            adjudicator=self.adjudicator,
        )
        return TableEntry(
            ref=TableRef(self.conn.spec.id, table),
            description=described,
            columns=columns,
            profiles=profiles,
            fingerprint=fingerprint_table(self.conn, table),
            row_count=row_count,
        )

    def _joins(
        self,
        round1: dict[str, list[ColumnProfile]],
        round2: dict[str, list[ColumnProfile]],
    ) -> tuple[list[PrimaryKey], list[JoinEdge]]:
        self.stage_calls["joins"].append("*")
        pks = detect_primary_keys([round1, round2], self.adjudicator)
        candidates = score_ind_candidates(round1, pks, self.join_config)
        edges = validate_joins(candidates, self.adjudicator, self.join_config)
        return pks, edges

    # -- orchestration ----------------------------------------------------------

    def build(self) -> SemanticKnowledgeGraph:
        tables = self.conn.visible_tables()
        if not tables:
            raise GraphError("stage profile failed: no tables visible on this connection")
        graph = SemanticKnowledgeGraph(connection_id=self.conn.spec.id, seed=self.seed)
        round1: dict[str, list[ColumnProfile]] = {}
        round2: dict[str, list[ColumnProfile]] = {}
        stage = "profile"
        try:
            for table in tables:
                r1, r2 = self._profile(table)
                round1[table], round2[table] = r1, r2
            stage = "semantics"
            for table in tables:
                graph.tables.append(self._semantics(table, round1[table]))
            stage = "joins"
            graph.primary_keys, graph.joins = self._joins(round1, round2)
            stage = "measures"
            graph.measures = auto_count_distinct_measures(
                [(e.ref, e.columns) for e in graph.tables],
                {(pk.table.name, pk.column) for pk in graph.primary_keys},
            )
            stage = "questions"
            graph.question_bank = generate_question_bank(
                graph, per_table=self.questions_per_table, seed=self.seed
            )
            for table in tables:
                self.stage_calls["questions"].append(table)
        except GraphError:
            raise
        except Exception as exc:
            raise GraphError(f"stage {stage} failed: {exc}") from exc
        graph.created_at = graph.updated_at = _now()
        problems = graph.validate()
        if problems:
            raise GraphError("invalid graph: " + "; ".join(problems))
        return graph

    def incremental_update(
        self, graph: SemanticKnowledgeGraph
    ) -> tuple[SemanticKnowledgeGraph, ChangeReport]:
        """Re-profile only tables whose fingerprint moved; carry everything
        else verbatim. The result equals a from-scratch rebuild on content."""
        report = ChangeReport()
        current = self.conn.visible_tables()
        old_entries = {e.ref.name: e for e in graph.tables}
        fingerprints = {t: fingerprint_table(self.conn, t) for t in current}

        changed = [
            t for t in current if t in old_entries and old_entries[t].fingerprint != fingerprints[t]
        ]
        added = [t for t in current if t not in old_entries]
        dropped = [t for t in old_entries if t not in current]
        if not changed and not added and not dropped:
            return graph, report

        report.reprofiled = list(changed)
        report.added_tables = list(added)
        report.dropped_tables = list(dropped)

        new_graph = SemanticKnowledgeGraph(
            connection_id=graph.connection_id, seed=graph.seed, version=graph.version
        )
        round1: dict[str, list[ColumnProfile]] = {}
        round2: dict[str, list[ColumnProfile]] = {}
        for table in current:
            if table in changed or table in added:
                r1, r2 = self._profile(table)
                round1[table], round2[table] = r1, r2
                new_graph.tables.append(self._semantics(table, r1))
            else:
                entry = old_entries[table]
                new_graph.tables.append(entry)
                round1[table] = entry.profiles
                round2[table] = entry.profiles  # carried: already validated twice
        old_edges = {str(e) for e in graph.joins}
        new_graph.primary_keys, new_graph.joins = self._rejoin(
            graph, round1, round2, set(changed) | set(added) | set(dropped)
        )
        new_edges = {str(e) for e in new_graph.joins}
        report.joins_added = sorted(new_edges - old_edges)
        report.joins_removed = sorted(old_edges - new_edges)

        old_measures = {m.name for m in graph.measures}
        auto = auto_count_distinct_measures(
            [(e.ref, e.columns) for e in new_graph.tables],
            {(pk.table.name, pk.column) for pk in new_graph.primary_keys},
        )
        user = [
            m
            for m in graph.measures
            if m.origin == "user" and all(r.name in {t for t in current} for r in m.source_tables)
        ]
        new_graph.measures = auto + user
        new_names = {m.name for m in new_graph.measures}
        report.measures_added = sorted(new_names - old_measures)
        report.measures_removed = sorted(old_measures - new_names)

        new_graph.question_bank = generate_question_bank(
            new_graph, per_table=self.questions_per_table, seed=graph.seed
        )
        new_graph.created_at = graph.created_at
        new_graph.updated_at = _now()
        new_graph.version = graph.version + 1
        problems = new_graph.validate()
        if problems:
            raise GraphError("invalid graph after update: " + "; ".join(problems))
        return new_graph, report

    def _rejoin(self, old_graph, round1, round2, touched: set[str]):
        """Score all pairs (pure math); adjudicate only pairs touching
        changed tables, carrying prior decisions for the rest."""
        pks = detect_primary_keys([round1, round2], self.adjudicator)
        candidates = score_ind_candidates(round1, pks, self.join_config)
        fresh = [
            c
            for c in candidates
            if c.from_table.name in touched or c.to_table.name in touched
        ]
        stale = [c for c in candidates if c not in fresh]
        validated_fresh = validate_joins(fresh, self.adjudicator, self.join_config)
        previously = {str(e) for e in old_graph.joins}
        carried = [c for c in stale if str(c) in previously]
        for edge in carried:
            edge.validated = True
        merged: dict[tuple[str, str], JoinEdge] = {}
        for edge in carried + validated_fresh:
            slot = (edge.from_table.name, edge.from_column)
            if slot not in merged or edge.score > merged[slot].score:
                merged[slot] = edge
        return pks, sorted(merged.values(), key=lambda e: e.key())


def build_graph(conn: Connection, adjudicator=None, seed: int = 7, **options) -> SemanticKnowledgeGraph:
    return GraphBuilder(conn, adjudicator=adjudicator, seed=seed, **options).build()


def incremental_update(
    graph: SemanticKnowledgeGraph, conn: Connection, adjudicator=None, **options
) -> tuple[SemanticKnowledgeGraph, ChangeReport]:
    builder = GraphBuilder(conn, adjudicator=adjudicator, seed=graph.seed, **options)
    return builder.incremental_update(graph)


# ---------------------------------------------------------------------------
# Question bank
# ---------------------------------------------------------------------------


def generate_question_bank(
    graph: SemanticKnowledgeGraph, per_table: int = 50, seed: int = 7
) -> list[SampleQuestion]:
    """Templated (question, operations) exemplars over each table, its
    measures and its validated join neighbors. Literals are drawn from
    cleaned samples only (never PII columns, which carry no samples)."""
    bank: list[SampleQuestion] = []
    for entry in sorted(graph.tables, key=lambda e: e.ref.name):
        rng = random.Random(_derive_seed(seed, "bank", entry.ref.name))
        bank.extend(_table_questions(graph, entry, per_table, rng))
    return bank


def _sample_literal(profile: ColumnProfile, rng: random.Random):
    values = sorted({str(v) for v in profile.cleaned_sample})
    return rng.choice(values) if values else None


def _table_questions(
    graph: SemanticKnowledgeGraph, entry: TableEntry, per_table: int, rng: random.Random
) -> list[SampleQuestion]:
    table = entry.ref.name
    dims = [
        (sem, prof)
        for sem, prof in zip(entry.columns, entry.profiles)
        if sem.role == "dimension" and not sem.pii
    ]
    string_dims = [(s, p) for s, p in dims if s.data_type == STRING]
    date_dims = [(s, p) for s, p in dims if s.data_type == DATE]
    measures = [
        (sem, prof)
        for sem, prof in zip(entry.columns, entry.profiles)
        if sem.role == "measure" and sem.data_type == NUMERIC
    ]
    out: list[SampleQuestion] = []

    def push(text: str, tables: list[str], **ops) -> None:
        if len(out) >= per_table:
            return
        operations = {k: v for k, v in ops.items() if v}
        out.append(SampleQuestion(text=text, tables=tables, operations=operations))

    # projections
    for sem, _ in dims[:4]:
        push(
            f"Show the {sem.simplified_name} for {table}.",
            [table],
            projections=[sem.simplified_name],
        )

    # equality filters with sampled literals
    for sem, prof in string_dims[:6]:
        value = _sample_literal(prof, rng)
        if value is None or prof.distinct_estimate > 200:
            continue
        push(
            f"List {table} records with {sem.simplified_name} {value}.",
            [table],
            filters=[f"{sem.simplified_name}='{value}'"],
        )

    # numeric threshold filters
    for sem, prof in measures[:4]:
        if prof.mean is None:
            continue
        threshold = round(prof.mean, 2)
        push(
            f"Show {table} records with {sem.simplified_name} greater than {threshold}.",
            [table],
            filters=[f"{sem.simplified_name}>{threshold}"],
        )

    # date filters
    for sem, prof in date_dims[:2]:
        years = sorted({str(v)[:4] for v in prof.cleaned_sample if v})
        if not years:
            continue
        year = rng.choice(years)
        push(
            f"List {table} records with {sem.simplified_name} after {year}.",
            [table],
            filters=[f"{sem.simplified_name}>{year}"],
        )

    # aggregates with group by
    group_dims = [
        (s, p) for s, p in string_dims if 1 < p.distinct_estimate <= 50
    ] or string_dims[:2]
    for m_sem, _ in measures[:3]:
        for g_sem, _ in group_dims[:2]:
            push(
                f"What is the total {m_sem.simplified_name} per {g_sem.simplified_name}?",
                [table],
                aggregates=[f"sum({m_sem.simplified_name})"],
                group_by=[g_sem.simplified_name],
            )
            push(
                f"Average {m_sem.simplified_name} by {g_sem.simplified_name}.",
                [table],
                aggregates=[f"avg({m_sem.simplified_name})"],
                group_by=[g_sem.simplified_name],
            )

    # counts per dimension
    for g_sem, _ in group_dims[:2]:
        push(
            f"How many {table} records per {g_sem.simplified_name}?",
            [table],
            aggregates=["count(*)"],
            group_by=[g_sem.simplified_name],
        )

    # ordered top-k
    for m_sem, _ in measures[:1]:
        for g_sem, _ in group_dims[:1]:
            push(
                f"Top 5 {g_sem.simplified_name} by total {m_sem.simplified_name}.",
                [table],
                aggregates=[f"sum({m_sem.simplified_name})"],
                group_by=[g_sem.simplified_name],
                order_by=[f"sum({m_sem.simplified_name}) desc"],
                limit="5",
            )

    # join templates along validated edges
    for edge in graph.joins:
        other = None
        if edge.from_table.name == table:
            other = edge.to_table.name
        elif edge.to_table.name == table:
            other = edge.from_table.name
        if other is None:
            continue
        other_entry = graph.table(other)
        if other_entry is None:
            continue
        other_dims = [
            s
            for s in other_entry.columns
            if s.role == "dimension" and s.data_type == STRING and not s.pii
        ]
        if not other_dims or not measures:
            continue
        m_sem = measures[0][0]
        g_sem = other_dims[0]
        push(
            f"Total {m_sem.simplified_name} per {g_sem.simplified_name}.",
            sorted({table, other}),
            aggregates=[f"sum({m_sem.simplified_name})"],
            group_by=[g_sem.simplified_name],
        )

    return out[:per_table]


# ---------------------------------------------------------------------------
# Persistence: a single human-diffable canonical text document
# ---------------------------------------------------------------------------


def _ref_to_dict(ref: TableRef) -> dict:
    return {"connection_id": ref.connection_id, "name": ref.name, "schema": ref.schema}


def _ref_from_dict(d: dict) -> TableRef:
    return TableRef(d["connection_id"], d["name"], d.get("schema"))


def _profile_to_dict(p: ColumnProfile) -> dict:
    return {
        "table": _ref_to_dict(p.table),
        "column": p.column,
        "data_type": p.data_type,
        "count": p.count,
        "distinct_estimate": p.distinct_estimate,
        "distinct_is_exact": p.distinct_is_exact,
        "nulls": p.nulls,
        "min": p.min,
        "max": p.max,
        "mean": p.mean,
        "stddev": p.stddev,
        "cleaned_sample": list(p.cleaned_sample),
        "raw_sample_size": p.raw_sample_size,
        "distinct_values": list(p.distinct_values),
    }


def _profile_from_dict(d: dict) -> ColumnProfile:
    return ColumnProfile(
        table=_ref_from_dict(d["table"]),
        column=d["column"],
        data_type=d["data_type"],
        count=d["count"],
        distinct_estimate=d["distinct_estimate"],
        distinct_is_exact=d["distinct_is_exact"],
        nulls=d["nulls"],
        min=d["min"],
        max=d["max"],
        mean=d["mean"],
        stddev=d["stddev"],
        cleaned_sample=list(d["cleaned_sample"]),
        raw_sample_size=d["raw_sample_size"],
        distinct_values=list(d.get("distinct_values", [])),
    )


def _semantics_to_dict(s: ColumnSemantics) -> dict:
    return {
        "table": _ref_to_dict(s.table),
        "name": s.name,
        "role": s.role,
        "simplified_name": s.simplified_name,
        "description": s.description,
        "aliases": list(s.aliases),
        "data_type": s.data_type,
        "value_type": s.value_type,
        "valid_aggregates": sorted(s.valid_aggregates),
        "value_aspect": s.value_aspect,
        "pii": s.pii,
        "hierarchical_code_system": s.hierarchical_code_system,
        "confidence": s.confidence,
    }


def _semantics_from_dict(d: dict) -> ColumnSemantics:
    return ColumnSemantics(
        table=_ref_from_dict(d["table"]),
        name=d["name"],
        role=d["role"],
        simplified_name=d["simplified_name"],
        description=d["description"],
        aliases=list(d["aliases"]),
        data_type=d["data_type"],
        value_type=d["value_type"],
        valid_aggregates=set(d["valid_aggregates"]),
        value_aspect=d["value_aspect"],
        pii=d["pii"],
        hierarchical_code_system=d["hierarchical_code_system"],
        confidence=d.get("confidence", 1.0),
    )


def _edge_to_dict(e: JoinEdge) -> dict:
    return {
        "from_table": _ref_to_dict(e.from_table),
        "from_column": e.from_column,
        "to_table": _ref_to_dict(e.to_table),
        "to_column": e.to_column,
        "score": e.score,
        "components": dict(sorted(e.components.items())),
        "validated": e.validated,
    }


def _edge_from_dict(d: dict) -> JoinEdge:
    return JoinEdge(
        from_table=_ref_from_dict(d["from_table"]),
        from_column=d["from_column"],
        to_table=_ref_from_dict(d["to_table"]),
        to_column=d["to_column"],
        score=d["score"],
        components=d["components"],
        validated=d["validated"],
    )


def graph_to_dict(graph: SemanticKnowledgeGraph) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "connection_id": graph.connection_id,
        "version": graph.version,
        "seed": graph.seed,
        "created_at": graph.created_at,
        "updated_at": graph.updated_at,
        "tables": [
            {
                "ref": _ref_to_dict(e.ref),
                "description": e.description,
                "columns": [_semantics_to_dict(c) for c in e.columns],
                "profiles": [_profile_to_dict(p) for p in e.profiles],
                "fingerprint": e.fingerprint,
                "row_count": e.row_count,
            }
            for e in graph.tables
        ],
        "joins": [_edge_to_dict(e) for e in graph.joins],
        "measures": [
            {
                "name": m.name,
                "sql_expression": m.sql_expression,
                "source_tables": [_ref_to_dict(r) for r in m.source_tables],
                "origin": m.origin,
                "aliases": list(m.aliases),
            }
            for m in graph.measures
        ],
        "primary_keys": [
            {"table": _ref_to_dict(pk.table), "columns": list(pk.columns), "evidence": pk.evidence}
            for pk in graph.primary_keys
        ],
        "question_bank": [
            {"text": q.text, "tables": list(q.tables), "operations": q.operations}
            for q in graph.question_bank
        ],
    }


def graph_from_dict(data: dict) -> SemanticKnowledgeGraph:
    if not isinstance(data, dict) or "format_version" not in data:
        raise GraphFormatError("not a knowledge-graph document")
    if data["format_version"] != FORMAT_VERSION:
        raise GraphFormatError(
            f"file format version {data['format_version']} unsupported; this build reads {FORMAT_VERSION}"
        )
    graph = SemanticKnowledgeGraph(
        connection_id=data["connection_id"],
        version=data["version"],
        seed=data.get("seed", 7),
        created_at=data.get("created_at", ""),
        updated_at=data.get("updated_at", ""),
    )
    for e in data["tables"]:
        graph.tables.append(
            TableEntry(
                ref=_ref_from_dict(e["ref"]),
                description=e["description"],
                columns=[_semantics_from_dict(c) for c in e["columns"]],
                profiles=[_profile_from_dict(p) for p in e["profiles"]],
                fingerprint=e["fingerprint"],
                row_count=e["row_count"],
            )
        )
    graph.joins = [_edge_from_dict(e) for e in data["joins"]]
    graph.measures = [
        CustomMeasure(
            name=m["name"],
            sql_expression=m["sql_expression"],
            source_tables=[_ref_from_dict(r) for r in m["source_tables"]],
            origin=m["origin"],
            aliases=list(m["aliases"]),
        )
        for m in data["measures"]
    ]
    graph.primary_keys = [
        PrimaryKey(table=_ref_from_dict(p["table"]), columns=list(p["columns"]), evidence=p["evidence"])
        for p in data["primary_keys"]
    ]
    graph.question_bank = [
        SampleQuestion(text=q["text"], tables=list(q["tables"]), operations=q["operations"])
        for q in data["question_bank"]
    ]
    return graph


def save_graph(graph: SemanticKnowledgeGraph, path: str | Path) -> None:
    text = json.dumps(graph_to_dict(graph), sort_keys=True, indent=2, ensure_ascii=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_graph(path: str | Path) -> SemanticKnowledgeGraph:
    raw = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"corrupt graph file: {exc}") from exc
    graph = graph_from_dict(data)
    problems = graph.validate()
    if problems:
        raise GraphError("invalid graph file: " + "; ".join(problems))
    return graph
