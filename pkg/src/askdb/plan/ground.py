"""Grounding: resolve raw operand strings and literals against the graph.

Resolution ladder, cheapest first: exact hash on names/aliases/measures,
then bounded edit distance, then embedding cosine, then adjudicated choice
among the top candidates. Every resolution records its method and
confidence; the hash-first contract is observable through that provenance.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .. import text
from ..adjudicator import AdjudicationRequest
from ..connect import DATE, STRING, TableRef
from ..errors import AggregateValidityError, GroundingError
from ..semantics import ColumnSemantics, CustomMeasure
from .parsing import AggregateSpec, Condition, Literal, OrderKey, ParsedOperators

PROXIMITY_MAX_RATIO = 0.34
EMBED_MIN_COSINE = 0.6
FLOORS = {"hash": 1.0, "proximity": 0.7, "embedding": 0.6, "adjudicated": 0.5}
VALUE_INDEX_CAP = 1000


@dataclass
class GroundedColumn:
    sem: ColumnSemantics

    @property
    def table(self) -> TableRef:
        return self.sem.table

    @property
    def name(self) -> str:
        return self.sem.name

    def __str__(self) -> str:
        return f"{self.sem.table.name}.{self.sem.name}"


@dataclass
class GroundedMeasure:
    measure: CustomMeasure

    @property
    def name(self) -> str:
        return self.measure.name

    def __str__(self) -> str:
        return f"measure:{self.measure.name}"


@dataclass
class GroundedTable:
    ref: TableRef

    def __str__(self) -> str:
        return f"table:{self.ref.name}"


Entity = Union[GroundedColumn, GroundedMeasure, GroundedTable]


@dataclass
class GroundingResolution:
    raw: str
    resolved: str
    method: str
    confidence: float

    def __post_init__(self):
        if self.confidence < FLOORS.get(self.method, 0.0) - 1e-9:
            raise ValueError(f"confidence {self.confidence} below {self.method} floor")


@dataclass
class GroundedOperators:
    projections: list[GroundedColumn] = field(default_factory=list)
    filters: list[Condition] = field(default_factory=list)
    aggregates: list[AggregateSpec] = field(default_factory=list)
    group_by: list[GroundedColumn] = field(default_factory=list)
    order_by: list[OrderKey] = field(default_factory=list)
    limit: Optional[int] = None
    hint_tables: list[TableRef] = field(default_factory=list)
    resolutions: list[GroundingResolution] = field(default_factory=list)
    uninterpreted: list[str] = field(default_factory=list)
    confidence: float = 1.0

    def table_refs(self) -> list[TableRef]:
        out: list[TableRef] = []

        def add(ref: TableRef):
            if all(r.name != ref.name for r in out):
                out.append(ref)

        for col in self.projections + self.group_by:
            add(col.table)
        for cond in self.filters:
            if isinstance(cond.operand, GroundedColumn):
                add(cond.operand.table)
        for agg in self.aggregates:
            if isinstance(agg.operand, GroundedColumn):
                add(agg.operand.table)
            elif isinstance(agg.operand, GroundedMeasure):
                for ref in agg.operand.measure.source_tables:
                    add(ref)
        for key in self.order_by:
            target = key.target
            if isinstance(target, AggregateSpec):
                target = target.operand
            if isinstance(target, GroundedColumn):
                add(target.table)
        for ref in self.hint_tables:
            add(ref)
        return out

    def column_tables(self) -> set[str]:
        return {r.name for r in self.table_refs() if r.name}


def _norm(phrase: str) -> str:
    return " ".join(text.stem(w) for w in text.words(phrase))


class Catalog:
    """Name -> entity lookup built once per graph (derivable, immutable)."""

    def __init__(self, graph):
        self.entries: dict[str, list[Entity]] = {}
        self.values: dict[str, list[tuple[ColumnSemantics, object]]] = {}
        self.names: list[tuple[str, Entity]] = []
        for entry in graph.tables:
            ref = entry.ref
            table_entity = GroundedTable(ref)
            for key in {ref.name, text.singularize(ref.name)}:
                self._add(key, table_entity)
            for sem in entry.columns:
                entity = GroundedColumn(sem)
                keys = {sem.name, sem.simplified_name, *sem.aliases}
                for key in keys:
                    self._add(key, entity)
            for sem, profile in zip(entry.columns, entry.profiles):
                if (
                    sem.data_type == STRING
                    and not sem.pii
                    and profile.distinct_estimate <= VALUE_INDEX_CAP
                ):
                    for value in profile.distinct_values or profile.cleaned_sample:
                        self.values.setdefault(_norm(str(value)), []).append((sem, value))
        for measure in graph.measures:
            entity = GroundedMeasure(measure)
            for key in {measure.name, *measure.aliases}:
                self._add(key, entity)

    def _add(self, key: str, entity: Entity) -> None:
        norm = _norm(key)
        if not norm:
            return
        bucket = self.entries.setdefault(norm, [])
        if not any(str(e) == str(entity) for e in bucket):
            bucket.append(entity)
        self.names.append((norm, entity))

    def lookup_value(self, phrase: str) -> list[tuple[ColumnSemantics, object]]:
        return self.values.get(_norm(phrase), [])


def catalog_for(graph) -> Catalog:
    cached = getattr(graph, "_catalog", None)
    if cached is None:
        cached = Catalog(graph)
        graph._catalog = cached
    return cached


def _entity_table(entity: Entity) -> Optional[str]:
    if isinstance(entity, GroundedColumn):
        return entity.table.name
    if isinstance(entity, GroundedTable):
        return entity.ref.name
    if isinstance(entity, GroundedMeasure):
        tables = entity.measure.source_tables
        return tables[0].name if tables else None
    return None


def _pick_reachable(entities: list[Entity], reachable: set[str]) -> Entity:
    if len(entities) == 1:
        return entities[0]
    in_reach = [e for e in entities if _entity_table(e) in reachable]
    pool = in_reach or entities
    # measures beat columns beat tables for identical names
    rank = {GroundedMeasure: 0, GroundedColumn: 1, GroundedTable: 2}
    return sorted(pool, key=lambda e: (rank[type(e)], str(e)))[0]


class Grounder:
    def __init__(self, graph, reachable: set[str], adjudicator=None):
        self.catalog = catalog_for(graph)
        self.graph = graph
        self.reachable = set(reachable)
        self.adjudicator = adjudicator
        self.resolutions: list[GroundingResolution] = []

    # -- ladder --------------------------------------------------------------

    def resolve(self, raw: str, *, kinds: tuple = (GroundedMeasure, GroundedColumn, GroundedTable)) -> Optional[Entity]:
        norm = _norm(raw)
        if not norm:
            return None
        bucket = [e for e in self.catalog.entries.get(norm, []) if isinstance(e, kinds)]
        if bucket:
            entity = _pick_reachable(bucket, self.reachable)
            self._record(raw, entity, "hash", 1.0)
            return entity

        candidates = [(k, e) for k, e in self.catalog.names if isinstance(e, kinds)]
        best: Optional[tuple[float, str, Entity]] = None
        for key, entity in candidates:
            dist = text.edit_distance(norm, key)
            ratio = dist / max(len(norm), 1)
            if ratio <= PROXIMITY_MAX_RATIO:
                score = 1.0 - ratio
                bonus = 0.001 if _entity_table(entity) in self.reachable else 0.0
                if best is None or (score + bonus, key) > (best[0], best[1]):
                    best = (score + bonus, key, entity)
        if best is not None:
            self._record(raw, best[2], "proximity", 0.7)
            return best[2]

        embedder = self.adjudicator.embed if self.adjudicator else None
        if embedder is not None:
            keys = sorted({k for k, _ in candidates})
            if keys:
                vectors = embedder([norm] + keys)
                target, rest = vectors[0], vectors[1:]
                scored = sorted(
                    (
                        (text.cosine(target, vec), key)
                        for key, vec in zip(keys, rest)
                    ),
                    reverse=True,
                )
                top = [(s, k) for s, k in scored[:3] if s >= EMBED_MIN_COSINE]
                if top:
                    if len(top) > 1 and self.adjudicator is not None:
                        resp = self.adjudicator.complete(
                            AdjudicationRequest(
                                "judge_path",
                                {
                                    "kind": "grounding_choice",
                                    "raw": raw,
                                    "candidates": [k for _, k in top],
                                },
                            )
                        )
                        idx = resp.parsed if resp.usable and isinstance(resp.parsed, int) else 0
                        idx = idx if 0 <= idx < len(top) else 0
                        method, conf = "adjudicated", 0.5
                    else:
                        idx, method, conf = 0, "embedding", top[0][0]
                    chosen_key = top[idx][1]
                    bucket = [e for e in self.catalog.entries.get(chosen_key, []) if isinstance(e, kinds)]
                    if bucket:
                        entity = _pick_reachable(bucket, self.reachable)
                        self._record(raw, entity, method, max(conf, FLOORS[method]))
                        return entity
        return None

    def nearest_names(self, raw: str, k: int = 3) -> list[str]:
        norm = _norm(raw)
        scored = sorted(
            ((text.edit_distance(norm, key), key) for key, _ in self.catalog.names),
        )
        out: list[str] = []
        for _, key in scored:
            if key not in out:
                out.append(key)
            if len(out) >= k:
                break
        return out

    def _record(self, raw: str, entity: Entity, method: str, confidence: float) -> None:
        self.resolutions.append(
            GroundingResolution(raw=raw, resolved=str(entity), method=method, confidence=confidence)
        )

    # -- literals --------------------------------------------------------------

    def canonical_literal(self, column: ColumnSemantics, literal: Literal, profile=None) -> Literal:
        """Map a spoken literal onto the stored value shape (e.g. 'high' ->
        '2-HIGH') using the column's cleaned sample."""
        if literal.kind != "string" or column.data_type != STRING:
            return literal
        sample = []
        if profile is not None:
            sample = profile.distinct_values or profile.cleaned_sample
        else:
            entry = self.graph.table(column.table.name)
            if entry is not None:
                for sem, prof in zip(entry.columns, entry.profiles):
                    if sem.name == column.name:
                        sample = prof.distinct_values or prof.cleaned_sample
                        break
        want = str(literal.value).lower()
        distinct = sorted({str(v) for v in sample})
        exact = [v for v in distinct if v.lower() == want]
        if exact:
            return Literal(exact[0], "string")
        suffix = [v for v in distinct if v.lower().endswith(want) or v.lower().startswith(want)]
        if suffix:
            return Literal(suffix[0], "string")
        wordhits = [v for v in distinct if want in text.words(v.lower())]
        if wordhits:
            return Literal(wordhits[0], "string")
        return literal


def ground_operators(
    parsed: ParsedOperators,
    graph,
    reachable: set[str],
    adjudicator=None,
    seed_tables: Optional[set[str]] = None,
) -> GroundedOperators:
    """Ground every parsed operator; mentions (projections) may turn into
    table hints, measure aggregates, or value filters."""
    g = Grounder(graph, reachable or set(), adjudicator)
    out = GroundedOperators(limit=parsed.limit, uninterpreted=list(parsed.uninterpreted))

    for cond in parsed.filters:
        out.filters.append(_ground_condition(g, cond))

    for agg in parsed.aggregates:
        out.aggregates.append(_ground_aggregate(g, agg, out))

    for raw in parsed.group_by:
        column = _ground_group_key(g, raw)
        out.group_by.append(column)

    for raw in parsed.projections:
        _ground_mention(g, raw, out)

    for key in parsed.order_by:
        grounded_key = _ground_order_key(g, key, out)
        if grounded_key is not None:
            out.order_by.append(grounded_key)

    out.resolutions = g.resolutions
    if g.resolutions:
        out.confidence = sum(r.confidence for r in g.resolutions) / len(g.resolutions)
    return out


def _ground_condition(g: Grounder, cond: Condition) -> Condition:
    raw = str(cond.operand)
    if raw == "@date":
        column = _default_date_column(g)
        if column is None:
            raise GroundingError("no date column reachable for temporal filter", token=raw)
        g._record(raw, column, "hash", 1.0)
        literals = cond.literals
        return replace(cond, operand=column, literals=literals)
    entity = g.resolve(raw, kinds=(GroundedColumn,))
    if entity is None:
        raise GroundingError(
            f"cannot ground filter operand {raw!r}; nearest: {g.nearest_names(raw)}",
            token=raw,
            candidates=g.nearest_names(raw),
        )
    literals = [g.canonical_literal(entity.sem, lit) for lit in cond.literals]
    return replace(cond, operand=entity, literals=literals)


def _default_date_column(g: Grounder) -> Optional[GroundedColumn]:
    candidates = []
    for table in sorted(g.reachable):
        entry = g.graph.table(table)
        if entry is None:
            continue
        for ordinal, sem in enumerate(entry.columns):
            if sem.data_type == DATE:
                candidates.append((table, ordinal, sem))
    if not candidates:
        return None
    candidates.sort(key=lambda c: (c[0], c[1]))
    return GroundedColumn(candidates[0][2])


def _ground_aggregate(g: Grounder, agg: AggregateSpec, out: GroundedOperators) -> AggregateSpec:
    raw = str(agg.operand).strip()
    if raw in {"*", ""}:
        return replace(agg, operand="*")
    entity = g.resolve(raw)
    if entity is None:
        raise GroundingError(
            f"cannot ground aggregate operand {raw!r}; nearest: {g.nearest_names(raw)}",
            token=raw,
            candidates=g.nearest_names(raw),
        )
    if isinstance(entity, GroundedTable):
        # "how many orders" -> COUNT(*) over the orders scan
        out.hint_tables.append(entity.ref)
        return replace(agg, operand="*", func="count" if agg.func != "count_distinct" else agg.func)
    if isinstance(entity, GroundedMeasure):
        return replace(agg, operand=entity, func="measure")
    if agg.func not in entity.sem.valid_aggregates:
        raise AggregateValidityError(
            f"{agg.func} is not valid for {entity} (valid: {sorted(entity.sem.valid_aggregates)})",
            token=raw,
        )
    return replace(agg, operand=entity)


def _ground_group_key(g: Grounder, raw: str) -> GroundedColumn:
    entity = g.resolve(raw, kinds=(GroundedColumn, GroundedTable))
    if isinstance(entity, GroundedTable):
        label = _label_column(g, entity.ref.name)
        if label is not None:
            return label
        entity = None
    if entity is None:
        raise GroundingError(
            f"cannot ground group-by operand {raw!r}; nearest: {g.nearest_names(raw)}",
            token=raw,
            candidates=g.nearest_names(raw),
        )
    return entity


def _label_column(g: Grounder, table: str) -> Optional[GroundedColumn]:
    entry = g.graph.table(table)
    if entry is None:
        return None
    for sem in entry.columns:
        if sem.data_type == STRING and not sem.pii:
            return GroundedColumn(sem)
    return GroundedColumn(entry.columns[0]) if entry.columns else None


def _ground_mention(g: Grounder, raw: str, out: GroundedOperators) -> None:
    """A bare mention resolves to a measure (-> aggregate), a column
    (-> projection), a table (-> input hint) or a sampled value (-> filter);
    otherwise it degrades to an uninterpreted span."""
    entity = g.resolve(raw)
    if isinstance(entity, GroundedMeasure):
        out.aggregates.append(AggregateSpec("measure", entity))
        return
    if isinstance(entity, GroundedColumn):
        out.projections.append(entity)
        return
    if isinstance(entity, GroundedTable):
        out.hint_tables.append(entity.ref)
        return
    hits = g.catalog.lookup_value(raw)
    if hits:
        sem, value = sorted(hits, key=lambda h: (h[0].table.name, h[0].name, str(h[1])))[0]
        column = GroundedColumn(sem)
        g._record(raw, column, "hash", 1.0)
        out.filters.append(Condition(column, "eq", [Literal(value, "string")]))
        return
    out.uninterpreted.append(raw)


def _ground_order_key(g: Grounder, key: OrderKey, out: GroundedOperators) -> Optional[OrderKey]:
    target = key.target
    if isinstance(target, AggregateSpec):
        grounded = _ground_aggregate(g, target, out)
        return replace(key, target=grounded)
    raw = str(target)
    entity = g.resolve(raw)
    if entity is None:
        out.uninterpreted.append(raw)
        return None
    if isinstance(entity, GroundedMeasure):
        return replace(key, target=AggregateSpec("measure", entity))
    if isinstance(entity, GroundedTable):
        label = _label_column(g, entity.ref.name)
        if label is None:
            out.uninterpreted.append(raw)
            return None
        return replace(key, target=label)
    return replace(key, target=entity)
