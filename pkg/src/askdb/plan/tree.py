"""Operator trees: the staged relational plan.

Canonical composition order (bottom-up): Scan/Join -> Qualify -> Filter ->
Aggregate -> Project -> OrderBy -> Limit. Nodes are plain dataclasses; trees
are rebuilt rather than mutated wherever practical.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

from ..connect import TableRef
from ..errors import PlanError, ReachError
from ..joins import JoinEdge
from .parsing import AggregateSpec, Condition, OrderKey


@dataclass
class Scan:
    table: TableRef


@dataclass
class Qualify:
    child: "Scan"
    predicate: str

    @property
    def table(self) -> TableRef:
        return self.child.table


@dataclass
class Join:
    left: "RelNode"
    right: "RelNode"
    edge: JoinEdge


RelNode = Union[Scan, Qualify, Join]


@dataclass
class Filter:
    child: "Node"
    conditions: list[Condition]


@dataclass
class Aggregate:
    child: "Node"
    aggregates: list[AggregateSpec]
    group_by: list = field(default_factory=list)


@dataclass
class Project:
    child: "Node"
    columns: list = field(default_factory=list)


@dataclass
class OrderBy:
    child: "Node"
    keys: list[OrderKey] = field(default_factory=list)


@dataclass
class Limit:
    child: "Node"
    n: int = 0


Node = Union[Scan, Qualify, Join, Filter, Aggregate, Project, OrderBy, Limit]

_ORDER = {"Scan": 0, "Qualify": 1, "Join": 2, "Filter": 3, "Aggregate": 4, "Project": 5, "OrderBy": 6, "Limit": 7}


@dataclass
class OperatorTree:
    root: Node
    resolutions: list = field(default_factory=list)
    uninterpreted: list[str] = field(default_factory=list)
    confidence: float = 1.0
    needs_fallback_reasoning: bool = False

    def scans(self) -> list[Scan]:
        return [n for n in walk(self.root) if isinstance(n, Scan)]

    def qualified_tables(self) -> set[str]:
        return {n.table.name for n in walk(self.root) if isinstance(n, Qualify)}

    def scan_tables(self) -> set[str]:
        return {s.table.name for s in self.scans()}

    def find(self, kind) -> Optional[Node]:
        for node in walk(self.root):
            if isinstance(node, kind):
                return node
        return None


def walk(node: Node):
    yield node
    if isinstance(node, Join):
        yield from walk(node.left)
        yield from walk(node.right)
    elif isinstance(node, Qualify):
        yield from walk(node.child)
    elif hasattr(node, "child"):
        yield from walk(node.child)


def replace_child(node: Node, new_child: Node) -> Node:
    return replace(node, child=new_child)


def base_of(node: Node) -> RelNode:
    """Descend through the unary pipeline to the scan/join base."""
    while not isinstance(node, (Scan, Qualify, Join)):
        node = node.child
    return node


def build_tree(grounded, join_path: list[JoinEdge], graph=None) -> OperatorTree:
    """Compose grounded operators into a canonical tree.

    Scans cover every table on the join path; implicit joins come in free
    because the path was selected over seeds plus grounded tables.
    """
    tables = _path_tables(grounded, join_path)
    if not tables:
        raise PlanError("nothing to plan: no tables resolved for this question")

    referenced = _referenced_tables(grounded)
    unreachable = referenced - set(tables)
    if unreachable:
        raise ReachError(
            f"columns reference tables outside the join path: {sorted(unreachable)}; "
            "extend the path or re-run intent with these tables as seeds"
        )

    base: Node = Scan(_ref(tables[0], join_path, grounded))
    joined = {tables[0]}
    pending = list(join_path)
    while pending:
        progressed = False
        for edge in list(pending):
            a, b = edge.from_table.name, edge.to_table.name
            if a in joined and b not in joined:
                base = Join(base, Scan(edge.to_table), edge)
                joined.add(b)
            elif b in joined and a not in joined:
                base = Join(base, Scan(edge.from_table), edge)
                joined.add(a)
            elif a in joined and b in joined:
                pass
            else:
                continue
            pending.remove(edge)
            progressed = True
        if not progressed:
            raise PlanError("join path is not connected")

    node: Node = base
    if grounded.filters:
        node = Filter(node, list(grounded.filters))
    if grounded.aggregates or grounded.group_by:
        group_by = list(grounded.group_by)
        # plain projected columns become grouping keys under aggregation
        for col in grounded.projections:
            if all(
                (col.table.name, col.name) != (g.table.name, g.name) for g in group_by
            ):
                group_by.append(col)
        node = Aggregate(node, list(grounded.aggregates), group_by)
    elif grounded.projections:
        node = Project(node, list(grounded.projections))
    if grounded.order_by:
        node = OrderBy(node, list(grounded.order_by))
    if grounded.limit is not None:
        node = Limit(node, grounded.limit)

    tree = OperatorTree(
        root=node,
        resolutions=list(grounded.resolutions),
        uninterpreted=list(grounded.uninterpreted),
        confidence=grounded.confidence,
    )
    problems = validate_tree(tree)
    if problems:
        raise PlanError("; ".join(problems))
    return tree


def _ref(table_name: str, join_path, grounded) -> TableRef:
    for edge in join_path:
        if edge.from_table.name == table_name:
            return edge.from_table
        if edge.to_table.name == table_name:
            return edge.to_table
    for ref in grounded.table_refs():
        if ref.name == table_name:
            return ref
    return TableRef("", table_name)


def _path_tables(grounded, join_path: list[JoinEdge]) -> list[str]:
    seen: list[str] = []
    for edge in join_path:
        for name in (edge.from_table.name, edge.to_table.name):
            if name not in seen:
                seen.append(name)
    for ref in grounded.table_refs():
        if ref.name not in seen:
            seen.append(ref.name)
    if join_path and len(seen) > len(join_path) + 1:
        # tables not touched by any edge cannot be joined in
        connected = set()
        for edge in join_path:
            connected.add(edge.from_table.name)
            connected.add(edge.to_table.name)
        orphans = [t for t in seen if t not in connected]
        raise ReachError(f"tables {orphans} are disconnected from the join path")
    return seen


def _referenced_tables(grounded) -> set[str]:
    out = set()
    for ref in grounded.column_tables():
        out.add(ref)
    return out


_CANONICAL_SEQUENCE = ["Limit", "OrderBy", "Project", "Aggregate", "Filter"]


def validate_tree(tree: OperatorTree) -> list[str]:
    """Structural invariants; returns human-readable violations (empty when
    well-formed)."""
    problems: list[str] = []
    node = tree.root
    position = 0
    while not isinstance(node, (Scan, Qualify, Join)):
        kind = type(node).__name__
        try:
            idx = _CANONICAL_SEQUENCE.index(kind, position)
        except ValueError:
            problems.append(f"node {kind} out of canonical order")
            break
        position = idx + 1
        if isinstance(node, Limit) and node.n <= 0:
            problems.append("limit must be positive")
        if isinstance(node, Aggregate) and not node.aggregates and not node.group_by:
            problems.append("empty aggregate node")
        node = node.child
    for rel in walk(node):
        if isinstance(rel, (Filter, Aggregate, Project, OrderBy, Limit)):
            problems.append(f"{type(rel).__name__} below the relational base")
    problems.extend(_check_aggregate_validity(tree))
    return problems


def _check_aggregate_validity(tree: OperatorTree) -> list[str]:
    problems = []
    agg = tree.find(Aggregate)
    if agg is None:
        return problems
    for spec in agg.aggregates:
        sem = getattr(spec.operand, "sem", None)
        if sem is not None and spec.func not in ("measure",):
            if spec.func not in sem.valid_aggregates:
                problems.append(
                    f"aggregate {spec.func} not valid for {sem.name} "
                    f"(valid: {sorted(sem.valid_aggregates)})"
                )
    return problems
