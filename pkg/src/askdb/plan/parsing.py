"""Tolerant parsing of raw fragment strings into typed operators.

The parser is total: any byte string either yields an operator or lands in
`uninterpreted`, never an exception. Keywords are case-insensitive, quotes
optional, trailing prose ignored with a warning.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .fragments import OperatorFragments, _split_list

EQ, NEQ, GT, GTE, LT, LTE, BETWEEN, IN, CONTAINS = (
    "eq", "neq", "gt", "gte", "lt", "lte", "between", "in", "contains",
)

_SYMBOL_OPS = [("<=", LTE), (">=", GTE), ("!=", NEQ), ("<>", NEQ), ("=", EQ), ("<", LT), (">", GT)]
_WORD_OPS = {"in": IN, "between": BETWEEN, "contains": CONTAINS, "like": CONTAINS, "is": EQ}

_ARITY = {BETWEEN: (2, 2), IN: (1, None)}

AGG_FUNCS = {
    "sum": "sum",
    "avg": "avg",
    "average": "avg",
    "mean": "avg",
    "min": "min",
    "minimum": "min",
    "max": "max",
    "maximum": "max",
    "count": "count",
    "count_distinct": "count_distinct",
    "countd": "count_distinct",
}

_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")
_NUM_RE = re.compile(r"^[+-]?(\d+\.\d*|\.\d+|\d+)$")


@dataclass
class Literal:
    value: Union[int, float, str]
    kind: str  # number | date | string

    def __str__(self) -> str:
        return str(self.value)


@dataclass
class Condition:
    operand: object  # raw string before grounding, grounded column after
    op: str
    literals: list[Literal]

    def __post_init__(self):
        lo, hi = _ARITY.get(self.op, (1, 1))
        if len(self.literals) < lo or (hi is not None and len(self.literals) > hi):
            raise ValueError(f"{self.op} expects {lo}..{hi or 'n'} literals, got {len(self.literals)}")


@dataclass
class AggregateSpec:
    func: str
    operand: object  # "*", raw string, grounded column, or measure
    alias: Optional[str] = None

    def render_raw(self) -> str:
        return f"{self.func}({self.operand})"


@dataclass
class OrderKey:
    target: object  # raw string, AggregateSpec, or grounded entity
    direction: str = "asc"


@dataclass
class ParsedOperators:
    projections: list[str] = field(default_factory=list)
    filters: list[Condition] = field(default_factory=list)
    aggregates: list[AggregateSpec] = field(default_factory=list)
    group_by: list[str] = field(default_factory=list)
    order_by: list[OrderKey] = field(default_factory=list)
    limit: Optional[int] = None
    uninterpreted: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def operator_count(self) -> int:
        return (
            len(self.projections)
            + len(self.filters)
            + len(self.aggregates)
            + len(self.group_by)
            + len(self.order_by)
            + (1 if self.limit is not None else 0)
        )


def parse_literal(raw: str) -> Literal:
    s = raw.strip()
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "'\"":
        return Literal(s[1:-1], "string")
    if _DATE_RE.match(s):
        return Literal(s, "date")
    if _NUM_RE.match(s):
        return Literal(int(s) if re.fullmatch(r"[+-]?\d+", s) else float(s), "number")
    return Literal(s, "string")


def parse_condition(raw: str) -> Optional[Condition]:
    s = raw.strip()
    if not s:
        return None
    # word operators need token boundaries; check them before symbols so
    # "x in (1,2)" does not split on a stray '=' inside a literal
    padded = " " + s.lower() + " "
    for word, op in _WORD_OPS.items():
        m = re.search(rf"\s{word}\s", padded)
        if not m:
            continue
        p = m.start()  # position of the leading space, s index p-1
        operand = s[: p - 1].strip() if p >= 1 else ""
        rest = s[p + len(word) + 1 :].strip()
        if not operand or not rest:
            continue
        if op == BETWEEN:
            parts = re.split(r"\s+and\s+", rest, maxsplit=1, flags=re.I)
            if len(parts) != 2:
                continue
            try:
                return Condition(operand, BETWEEN, [parse_literal(parts[0]), parse_literal(parts[1])])
            except ValueError:
                continue
        if op == IN:
            items = _split_list(rest.strip().strip("()"))
            if not items:
                continue
            return Condition(operand, IN, [parse_literal(x) for x in items])
        return Condition(operand, op, [parse_literal(rest)])
    for symbol, op in _SYMBOL_OPS:
        idx = s.find(symbol)
        if idx > 0:
            operand = s[:idx].strip()
            rest = s[idx + len(symbol) :].strip()
            if operand and rest:
                return Condition(operand, op, [parse_literal(rest)])
    return None


_AGG_RE = re.compile(
    r"^\s*(?P<func>[A-Za-z_ ]+?)\s*(?:\(\s*(?P<parens>[^)]*)\s*\)|\s+of\s+(?P<of>.+))\s*$",
    re.I,
)


def parse_aggregate(raw: str) -> Optional[AggregateSpec]:
    s = raw.strip()
    alias = None
    m_alias = re.search(r"\s+as\s+([A-Za-z_][A-Za-z0-9_ ]*)$", s, re.I)
    if m_alias:
        alias = m_alias.group(1).strip()
        s = s[: m_alias.start()].strip()
    m = _AGG_RE.match(s)
    if m:
        func_raw = re.sub(r"\s+", "_", m.group("func").strip().lower())
        func = AGG_FUNCS.get(func_raw) or AGG_FUNCS.get(func_raw.replace("_", ""))
        if func is None and func_raw in {"count_of_distinct", "count_distinct_of"}:
            func = "count_distinct"
        operand = (m.group("parens") if m.group("parens") is not None else m.group("of") or "").strip()
        if func:
            if func == "count" and operand.lower().startswith("distinct "):
                func, operand = "count_distinct", operand[9:].strip()
            return AggregateSpec(func, operand or "*", alias)
        return None
    # bare "<func> <operand>" without parens
    parts = s.split(None, 1)
    if len(parts) == 2 and parts[0].lower() in AGG_FUNCS:
        func = AGG_FUNCS[parts[0].lower()]
        operand = parts[1].strip()
        if func == "count" and operand.lower().startswith("distinct "):
            func, operand = "count_distinct", operand[9:].strip()
        return AggregateSpec(func, operand, alias)
    return None


def parse_order_key(raw: str) -> Optional[OrderKey]:
    s = raw.strip()
    if not s:
        return None
    direction = "asc"
    m = re.search(r"\s+(asc|ascending|desc|descending)\.?$", s, re.I)
    if m:
        direction = "desc" if m.group(1).lower().startswith("desc") else "asc"
        s = s[: m.start()].strip()
    if not s:
        return None
    agg = parse_aggregate(s)
    if agg is not None:
        return OrderKey(agg, direction)
    return OrderKey(s, direction)


def parse_fragments(fragments: OperatorFragments) -> ParsedOperators:
    """Total function from raw fragments to typed operators."""
    out = ParsedOperators()
    out.uninterpreted = list(fragments.uninterpreted)

    for raw in fragments.projections:
        s = str(raw).strip()
        if s:
            out.projections.append(s)

    for raw in fragments.filters:
        try:
            cond = parse_condition(str(raw))
        except Exception:  # noqa: BLE001 - totality
            cond = None
        if cond is not None:
            out.filters.append(cond)
        elif str(raw).strip():
            out.uninterpreted.append(str(raw).strip())
            out.warnings.append(f"unparseable filter: {raw!r}")

    for raw in fragments.aggregates:
        try:
            agg = parse_aggregate(str(raw))
        except Exception:  # noqa: BLE001
            agg = None
        if agg is not None:
            out.aggregates.append(agg)
        elif str(raw).strip():
            out.uninterpreted.append(str(raw).strip())
            out.warnings.append(f"unparseable aggregate: {raw!r}")

    for raw in fragments.group_by:
        s = str(raw).strip()
        if s:
            out.group_by.append(s)

    for raw in fragments.order_by:
        try:
            key = parse_order_key(str(raw))
        except Exception:  # noqa: BLE001
            key = None
        if key is not None:
            out.order_by.append(key)
        elif str(raw).strip():
            out.uninterpreted.append(str(raw).strip())
            out.warnings.append(f"unparseable order key: {raw!r}")

    if fragments.limit is not None:
        m = re.search(r"\d+", str(fragments.limit))
        if m and int(m.group(0)) > 0:
            out.limit = int(m.group(0))
        else:
            out.uninterpreted.append(str(fragments.limit))
            out.warnings.append(f"unparseable limit: {fragments.limit!r}")

    return out
