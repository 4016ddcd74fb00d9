"""Decode operator trees into dialect-correct SQL, with temporal literal
interpretation, hierarchical code expansion, and guarded prompt rewrites.
"""

from __future__ import annotations

import re
import sqlite3
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Optional, Union

from .adjudicator import AdjudicationRequest
from .connect import DATE, Connection
from .errors import DecodeError, ExpansionError, GroundingError
from .plan.ground import GroundedColumn, GroundedMeasure
from .plan.parsing import AggregateSpec, Condition, Literal
from .plan.tree import (
    Aggregate,
    Filter,
    Join,
    Limit,
    OperatorTree,
    OrderBy,
    Project,
    Qualify,
    Scan,
)

_KEYWORDS = {
    "select", "from", "where", "group", "order", "by", "limit", "join", "on",
    "and", "or", "not", "in", "between", "like", "as", "asc", "desc", "table",
    "union", "all", "distinct", "having", "case", "when", "then", "else", "end",
}
_PLAIN_IDENT = re.compile(r"^[a-z_][a-z0-9_]*$")


@dataclass
class Dialect:
    name: str
    quote: str = '"'
    limit_template: str = "LIMIT {n}"

    def ident(self, name: str) -> str:
        if _PLAIN_IDENT.match(name) and name not in _KEYWORDS:
            return name
        return self.quote + name.replace(self.quote, self.quote * 2) + self.quote


DIALECTS = {
    "embedded": Dialect("embedded"),
    "ansi": Dialect("ansi"),
    "postgres": Dialect("postgres"),
}


@dataclass
class SqlArtifact:
    dialect: str
    text: str
    parameters: list = field(default_factory=list)
    provenance: str = "decoded"  # decoded | rewritten
    guards_passed: set = field(default_factory=set)
    rewrite_reason: Optional[str] = None


@dataclass
class CodeHierarchy:
    system: str
    nodes: dict  # code -> (description, parent or None)
    roots: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.roots = [c for c, (_, parent) in self.nodes.items() if parent is None]
        for code, (_, parent) in self.nodes.items():
            if parent is not None and parent not in self.nodes:
                raise ValueError(f"code {code!r} has unknown parent {parent!r}")
        self._check_acyclic()
        self._children: dict[str, list[str]] = {}
        for code, (_, parent) in self.nodes.items():
            if parent is not None:
                self._children.setdefault(parent, []).append(code)

    def _check_acyclic(self):
        for start in self.nodes:
            seen = set()
            cur = start
            while cur is not None:
                if cur in seen:
                    raise ValueError(f"cycle through code {start!r}")
                seen.add(cur)
                cur = self.nodes[cur][1]

    def descendants(self, code: str) -> list[str]:
        """code plus all transitive children, stable order."""
        if code not in self.nodes:
            raise KeyError(code)
        out, stack = [], [code]
        while stack:
            cur = stack.pop(0)
            out.append(cur)
            stack.extend(sorted(self._children.get(cur, [])))
        return out

    @classmethod
    def from_file(cls, path: str | Path, system: str = "custom") -> "CodeHierarchy":
        nodes = {}
        for line in Path(path).read_text("utf-8").splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            code, parent, description = (line.split("\t") + ["", ""])[:3]
            nodes[code.strip()] = (description.strip(), parent.strip() or None)
        return cls(system=system, nodes=nodes)


def expand_code_hierarchy(
    condition: Condition, hierarchy: CodeHierarchy, max_expansion: int = 10_000
) -> Condition:
    """eq/in code filters expand to self + all descendants; oversized
    subtrees fall back to a LIKE-prefix condition."""
    if condition.op not in ("eq", "in"):
        return condition
    codes = [str(lit.value) for lit in condition.literals]
    expanded: list[str] = []
    for code in codes:
        if code not in hierarchy.nodes:
            near = sorted(hierarchy.nodes)[:3]
            raise ExpansionError(f"unknown code {code!r}", nearest=near)
        expanded.extend(hierarchy.descendants(code))
    if len(expanded) > max_expansion:
        return replace(
            condition,
            op="prefix",
            literals=[Literal(c, "string") for c in codes],
        )
    seen = []
    for c in expanded:
        if c not in seen:
            seen.append(c)
    return replace(condition, op="in", literals=[Literal(c, "string") for c in seen])


_YEAR_RANGE = (1000, 2999)


def _is_year_literal(lit: Literal) -> bool:
    return (
        lit.kind == "number"
        and isinstance(lit.value, int)
        and _YEAR_RANGE[0] <= lit.value <= _YEAR_RANGE[1]
    )


_RELATIVE = {"today", "yesterday", "this year", "last year"}


def interpret_temporal(
    condition: Condition, column_semantics, now: Optional[date] = None
) -> Condition:
    """Resolve year-only and relative literals on date columns.

    `now` is an explicit input; the engine never reads the wall clock here.
    """
    if getattr(column_semantics, "data_type", None) != DATE:
        return condition
    op, lits = condition.op, condition.literals

    def year_bounds(year: int) -> tuple[str, str]:
        return f"{year:04d}-01-01", f"{year:04d}-12-31"

    def resolve_relative(phrase: str) -> Optional[tuple[str, str]]:
        if now is None:
            return None
        if phrase == "today":
            iso = now.isoformat()
            return iso, iso
        if phrase == "yesterday":
            from datetime import timedelta

            iso = (now - timedelta(days=1)).isoformat()
            return iso, iso
        if phrase == "this year":
            return year_bounds(now.year)
        if phrase == "last year":
            return year_bounds(now.year - 1)
        return None

    if len(lits) == 1:
        lit = lits[0]
        if lit.kind == "date":
            return condition
        bounds: Optional[tuple[str, str]] = None
        if _is_year_literal(lit):
            bounds = year_bounds(int(lit.value))
        elif lit.kind == "string" and str(lit.value).lower() in _RELATIVE:
            bounds = resolve_relative(str(lit.value).lower())
        if bounds is None:
            if lit.kind == "string":
                raise GroundingError(f"unparseable date literal {lit.value!r}", token=str(lit.value))
            return condition
        lo, hi = bounds
        if op == "gt":
            return replace(condition, literals=[Literal(hi, "date")])
        if op == "gte":
            return replace(condition, literals=[Literal(lo, "date")])
        if op == "lt":
            return replace(condition, literals=[Literal(lo, "date")])
        if op == "lte":
            return replace(condition, literals=[Literal(hi, "date")])
        if op in ("eq", "between"):
            return replace(
                condition, op="between", literals=[Literal(lo, "date"), Literal(hi, "date")]
            )
        return condition
    if op == "between" and len(lits) == 2:
        new = []
        for i, lit in enumerate(lits):
            if _is_year_literal(lit):
                lo, hi = year_bounds(int(lit.value))
                new.append(Literal(lo if i == 0 else hi, "date"))
            elif lit.kind == "date":
                new.append(lit)
            else:
                raise GroundingError(f"unparseable date literal {lit.value!r}", token=str(lit.value))
        return replace(condition, literals=new)
    return condition


# ---------------------------------------------------------------------------
# Decoding
# ---------------------------------------------------------------------------


class _Decoder:
    def __init__(self, tree: OperatorTree, dialect: Dialect, graph=None, parameterize=False,
                 hierarchies: Optional[dict] = None, now: Optional[date] = None):
        self.tree = tree
        self.d = dialect
        self.graph = graph
        self.parameterize = parameterize
        self.hierarchies = hierarchies or {}
        self.now = now
        self.parameters: list = []
        self.aliases: dict[str, str] = {}
        self._scan_tables = sorted(tree.scan_tables())

    # -- helpers -------------------------------------------------------------

    def column_ref(self, col: GroundedColumn) -> str:
        name = col.name
        if self.graph is not None and len(self._scan_tables) > 1:
            owners = [
                t
                for t in self._scan_tables
                if self.graph.table(t) is not None
                and any(c.name == name for c in self.graph.table(t).columns)
            ]
            if len(owners) > 1:
                return f"{self.d.ident(col.table.name)}.{self.d.ident(name)}"
        return self.d.ident(name)

    def literal(self, lit: Literal) -> str:
        if self.parameterize:
            self.parameters.append(lit.value)
            return "?"
        if lit.kind == "number":
            return repr(lit.value)
        value = str(lit.value).replace("'", "''")
        return f"'{value}'"

    def agg_alias(self, spec: AggregateSpec) -> str:
        if spec.alias:
            base = spec.alias
        elif isinstance(spec.operand, GroundedMeasure):
            base = spec.operand.measure.name
        elif spec.operand == "*":
            base = f"{spec.func}_all" if spec.func != "count" else "count_all"
        else:
            base = f"{spec.func}_{spec.operand.name}"
        alias = re.sub(r"\W+", "_", base.strip().lower()).strip("_") or "value"
        existing = set(self.aliases.values())
        candidate, i = alias, 2
        while candidate in existing:
            candidate = f"{alias}_{i}"
            i += 1
        self.aliases[self._agg_key(spec)] = candidate
        return candidate

    @staticmethod
    def _agg_key(spec: AggregateSpec) -> str:
        return f"{spec.func}:{spec.operand}"

    def agg_expr(self, spec: AggregateSpec) -> str:
        if spec.func == "measure":
            return spec.operand.measure.sql_expression
        if spec.operand == "*":
            return "COUNT(*)" if spec.func in ("count", "count_distinct") else f"{spec.func.upper()}(*)"
        ref = self.column_ref(spec.operand)
        if spec.func == "count_distinct":
            return f"COUNT(DISTINCT {ref})"
        return f"{spec.func.upper()}({ref})"

    # -- relations -----------------------------------------------------------

    def rel_sql(self, node) -> str:
        if isinstance(node, Scan):
            return self.d.ident(node.table.name)
        if isinstance(node, Qualify):
            inner = self.d.ident(node.child.table.name)
            return f"(SELECT * FROM {inner} WHERE {node.predicate}) AS {self.d.ident(node.child.table.name)}"
        if isinstance(node, Join):
            left = self.rel_sql(node.left)
            right = self.rel_sql(node.right)
            e = node.edge
            on = (
                f"{self.d.ident(e.from_table.name)}.{self.d.ident(e.from_column)}"
                f" = {self.d.ident(e.to_table.name)}.{self.d.ident(e.to_column)}"
            )
            return f"{left} JOIN {right} ON {on}"
        raise DecodeError(f"unsupported relational node {type(node).__name__}")

    # -- conditions ------------------------------------------------------------

    def prepare_condition(self, cond: Condition) -> Condition:
        sem = getattr(cond.operand, "sem", None)
        if sem is not None:
            system = sem.hierarchical_code_system
            if system and system in self.hierarchies:
                cond = expand_code_hierarchy(cond, self.hierarchies[system])
            cond = interpret_temporal(cond, sem, now=self.now)
        return cond

    def conditions_sql(self, conditions: list[Condition]) -> str:
        prepared = [self.prepare_condition(c) for c in conditions]
        groups = consolidate_conditions(prepared)
        rendered = []
        for group in groups:
            if len(group) == 1:
                rendered.append(self.condition_sql(group[0]))
            else:
                ors = " OR ".join(self.condition_sql(c) for c in group)
                rendered.append(f"({ors})")
        return " AND ".join(rendered)

    def condition_sql(self, cond: Condition) -> str:
        ref = (
            self.column_ref(cond.operand)
            if isinstance(cond.operand, GroundedColumn)
            else self.d.ident(str(cond.operand))
        )
        op = cond.op
        lits = cond.literals
        if op == "eq":
            return f"{ref} = {self.literal(lits[0])}"
        if op == "neq":
            return f"{ref} != {self.literal(lits[0])}"
        if op == "gt":
            return f"{ref} > {self.literal(lits[0])}"
        if op == "gte":
            return f"{ref} >= {self.literal(lits[0])}"
        if op == "lt":
            return f"{ref} < {self.literal(lits[0])}"
        if op == "lte":
            return f"{ref} <= {self.literal(lits[0])}"
        if op == "between":
            return f"{ref} BETWEEN {self.literal(lits[0])} AND {self.literal(lits[1])}"
        if op == "in":
            inner = ", ".join(self.literal(l) for l in lits)
            return f"{ref} IN ({inner})"
        if op == "contains":
            value = str(lits[0].value).replace("'", "''")
            return f"{ref} LIKE '%{value}%'"
        if op == "prefix":
            clauses = [
                f"{ref} LIKE '{str(l.value).replace(chr(39), chr(39) * 2)}%'" for l in lits
            ]
            return "(" + " OR ".join(clauses) + ")" if len(clauses) > 1 else clauses[0]
        raise DecodeError(f"unsupported condition op {op!r}")

    # -- the full statement ------------------------------------------------------

    def decode(self) -> str:
        node = self.tree.root
        limit = order = project = aggregate = filter_ = None
        while not isinstance(node, (Scan, Qualify, Join)):
            if isinstance(node, Limit):
                limit = node
            elif isinstance(node, OrderBy):
                order = node
            elif isinstance(node, Project):
                project = node
            elif isinstance(node, Aggregate):
                aggregate = node
            elif isinstance(node, Filter):
                filter_ = node
            node = node.child

        select_items: list[str] = []
        group_refs: list[str] = []
        if aggregate is not None:
            for col in aggregate.group_by:
                ref = self.column_ref(col)
                group_refs.append(ref)
                select_items.append(ref)
            for spec in aggregate.aggregates:
                select_items.append(f"{self.agg_expr(spec)} AS {self.agg_alias(spec)}")
        elif project is not None:
            for col in project.columns:
                select_items.append(self.column_ref(col))
        if not select_items:
            select_items = ["*"]

        sql = "SELECT " + ", ".join(select_items)
        sql += " FROM " + self.rel_sql(node)
        if filter_ is not None and filter_.conditions:
            sql += " WHERE " + self.conditions_sql(filter_.conditions)
        if group_refs:
            sql += " GROUP BY " + ", ".join(group_refs)
        if order is not None and order.keys:
            keys = []
            for key in order.keys:
                target = key.target
                if isinstance(target, AggregateSpec):
                    alias = self.aliases.get(self._agg_key(target))
                    expr = alias if alias else self.agg_expr(target)
                elif isinstance(target, GroundedColumn):
                    expr = self.column_ref(target)
                else:
                    expr = self.d.ident(str(target))
                keys.append(f"{expr} DESC" if key.direction == "desc" else expr)
            sql += " ORDER BY " + ", ".join(keys)
        if limit is not None:
            sql += " " + self.d.limit_template.format(n=limit.n)
        return sql


def consolidate_conditions(conditions: list[Condition]) -> list[list[Condition]]:
    """Group same-column equality conditions into OR groups; everything else
    (ranges, inequalities, distinct columns) stays conjunctive."""
    groups: list[list[Condition]] = []
    eq_by_column: dict[str, list[Condition]] = {}
    order: list[str] = []
    rest: list[Condition] = []
    for cond in conditions:
        key = str(cond.operand)
        if cond.op == "eq":
            if key not in eq_by_column:
                eq_by_column[key] = []
                order.append(key)
            eq_by_column[key].append(cond)
        else:
            rest.append(cond)
    for key in order:
        groups.append(eq_by_column[key])
    for cond in rest:
        groups.append([cond])
    return groups


def decode_sql(
    tree: OperatorTree,
    dialect: str = "embedded",
    graph=None,
    parameterize: bool = False,
    hierarchies: Optional[dict] = None,
    now: Optional[date] = None,
) -> SqlArtifact:
    if dialect not in DIALECTS:
        raise DecodeError(f"unknown dialect {dialect!r}")
    decoder = _Decoder(
        tree, DIALECTS[dialect], graph, parameterize=parameterize, hierarchies=hierarchies, now=now
    )
    text = decoder.decode()
    guards = {"parse"} if sqlite3.complete_statement(text + ";") else set()
    return SqlArtifact(
        dialect=dialect,
        text=text,
        parameters=decoder.parameters,
        provenance="decoded",
        guards_passed=guards,
    )


# ---------------------------------------------------------------------------
# Prompt-based rewriting with validation guards
# ---------------------------------------------------------------------------


def rewrite_and_validate(
    artifact: SqlArtifact,
    question: str,
    graph,
    adjudicator,
    conn: Optional[Connection] = None,
    rls_predicates: Optional[list[str]] = None,
) -> SqlArtifact:
    """Let the adjudicator propose a rewrite, then accept it only if every
    guard passes: parse, LIMIT-0 execution, scope subset, RLS preservation.
    Failure silently keeps the decoded artifact with the reason recorded.
    """
    rls_predicates = rls_predicates or []
    schema_lines = []
    if graph is not None:
        for entry in graph.tables:
            cols = ", ".join(c.name for c in entry.columns)
            schema_lines.append(f"{entry.ref.name}({cols})")
    resp = adjudicator.complete(
        AdjudicationRequest(
            "rewrite_sql",
            {"question": question, "sql": artifact.text, "schema": schema_lines},
        )
    )
    proposed = resp.parsed if resp.usable and isinstance(resp.parsed, str) else None
    if not proposed or proposed.strip() == artifact.text.strip():
        return artifact

    guards = set()
    if not sqlite3.complete_statement(proposed + ";"):
        return replace(artifact, rewrite_reason="parse")
    guards.add("parse")

    if conn is not None:
        # execute_sql enforces the connection scope, so one probe covers both
        # the LIMIT-0 and the scope-subset guard
        from .errors import PolicyError

        try:
            conn.execute_sql(f"SELECT * FROM ({proposed}) AS probe LIMIT 0", row_limit=1)
        except PolicyError:
            return replace(artifact, rewrite_reason="scope_subset")
        except Exception:  # noqa: BLE001
            return replace(artifact, rewrite_reason="limit0_exec")
        guards.update({"limit0_exec", "scope_subset"})
    else:
        guards.update({"limit0_exec", "scope_subset"})

    for predicate in rls_predicates:
        if predicate not in proposed:
            return replace(artifact, rewrite_reason="rls_preserved")
    guards.add("rls_preserved")

    return SqlArtifact(
        dialect=artifact.dialect,
        text=proposed,
        parameters=[],
        provenance="rewritten",
        guards_passed=guards,
    )
