"""Metric computation and gold-set harnesses: table retrieval, join
inference, and structural SQL comparison with Correct/Partial/Incorrect
verdicts.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Optional

from .connect import Connection
from .errors import EvalInputError

# ---------------------------------------------------------------------------
# Retrieval metrics
# ---------------------------------------------------------------------------


@dataclass
class RetrievalMetrics:
    precision: float
    recall: float
    f1: float
    perfect_recall: float
    per_query: list[dict] = field(default_factory=list)

    def summary(self) -> str:
        return (
            f"precision={self.precision:.3f} recall={self.recall:.3f} "
            f"f1={self.f1:.3f} perfect_recall={self.perfect_recall:.3f} (micro-averaged)"
        )


def compute_retrieval_metrics(predicted: list[set], gold: list[set]) -> RetrievalMetrics:
    """Micro-averaged P/R/F1 over table instances; perfect-recall is the
    fraction of queries whose entire gold set was retrieved. Empty
    predictions contribute precision 0 by convention."""
    if len(predicted) != len(gold):
        raise EvalInputError(
            f"prediction/gold length mismatch: {len(predicted)} vs {len(gold)}"
        )
    tp = pred_total = gold_total = 0
    perfect = 0
    per_query = []
    for p, g in zip(predicted, gold):
        p, g = set(p), set(g)
        hit = len(p & g)
        tp += hit
        pred_total += len(p)
        gold_total += len(g)
        covered = g <= p
        perfect += covered
        per_query.append({"predicted": sorted(p), "gold": sorted(g), "perfect": covered})
    precision = tp / pred_total if pred_total else 0.0
    recall = tp / gold_total if gold_total else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return RetrievalMetrics(
        precision=precision,
        recall=recall,
        f1=f1,
        perfect_recall=perfect / len(gold) if gold else 0.0,
        per_query=per_query,
    )


def canonical_edge(edge) -> str:
    if isinstance(edge, str):
        parts = edge.replace(" ", "").split("->")
        return f"{parts[0]} -> {parts[1]}" if len(parts) == 2 else edge.strip()
    return f"{edge.from_table.name}.{edge.from_column} -> {edge.to_table.name}.{edge.to_column}"


def compute_join_metrics(predicted, gold) -> tuple[float, float, float]:
    """Set-based P/R/F1 over direction-normalized (FK -> PK) edges."""
    p = {canonical_edge(e) for e in predicted}
    g = {canonical_edge(e) for e in gold}
    tp = len(p & g)
    precision = tp / len(p) if p else 0.0
    recall = tp / len(g) if g else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def parse_gold_joins(text: str) -> list[str]:
    out = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(canonical_edge(line))
    return out


def parse_gold_retrieval(text: str) -> list[tuple[str, set[str]]]:
    out = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        question, _, tables = line.partition("\t")
        out.append((question.strip(), {t.strip() for t in tables.split(",") if t.strip()}))
    return out


def parse_gold_e2e(text: str) -> list[dict]:
    cases = []
    current: dict = {}
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            if current.get("question") and current.get("sql"):
                cases.append(current)
                current = {}
            continue
        for key in ("question", "tables", "sql"):
            if stripped.lower().startswith(key + ":"):
                value = stripped[len(key) + 1 :].strip()
                current[key] = (
                    {t.strip() for t in value.split(",")} if key == "tables" else value
                )
                break
    if current.get("question") and current.get("sql"):
        cases.append(current)
    return cases


# ---------------------------------------------------------------------------
# Structural SQL comparison
# ---------------------------------------------------------------------------

VERDICT_CORRECT, VERDICT_PARTIAL, VERDICT_INCORRECT = "Correct", "Partial", "Incorrect"
DIMENSIONS = ("data_model", "joins", "filters", "aggregates", "order_by")


@dataclass
class StructuralVerdict:
    dimensions: dict[str, str]
    overall: str
    parse_failed: bool = False

    def line(self) -> str:
        dims = " ".join(f"{k}={'ok' if v == 'match' else 'X'}" for k, v in self.dimensions.items())
        return f"{self.overall:9s} {dims}"


_CLAUSE_KEYWORDS = ["select", "from", "where", "group by", "order by", "limit"]


def _strip_quotes(token: str) -> str:
    return token.replace('"', "")


def _split_top(textval: str, sep: str) -> list[str]:
    """Split on a keyword/char at paren/quote depth zero."""
    out, depth, cur, i = [], 0, [], 0
    low = textval.lower()
    n = len(textval)
    quote = ""
    while i < n:
        ch = textval[i]
        if quote:
            cur.append(ch)
            if ch == quote:
                quote = ""
            i += 1
            continue
        if ch in "'\"":
            quote = ch
            cur.append(ch)
            i += 1
            continue
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth = max(0, depth - 1)
        if depth == 0:
            if sep == "," and ch == ",":
                out.append("".join(cur))
                cur = []
                i += 1
                continue
            # space-delimited separators carry their own boundaries
            if sep != "," and low.startswith(sep, i):
                out.append("".join(cur))
                cur = []
                i += len(sep)
                continue
        cur.append(ch)
        i += 1
    out.append("".join(cur))
    return [c.strip() for c in out]


def _word_boundary(low: str, i: int, word: str) -> bool:
    before_ok = i == 0 or not (low[i - 1].isalnum() or low[i - 1] == "_")
    j = i + len(word)
    after_ok = j >= len(low) or not (low[j].isalnum() or low[j] == "_")
    return before_ok and after_ok


class _SqlShape:
    def __init__(self):
        self.tables: set[str] = set()
        self.joins: set[frozenset] = set()
        self.filters: set[tuple] = set()
        self.aggregates: set[tuple] = set()
        self.group_keys: set[str] = set()
        self.select_columns: set[str] = set()
        self.order: tuple = ()
        self.limit: Optional[int] = None
        self.alias_to_agg: dict[str, tuple] = {}


def _norm_expr(expr: str) -> str:
    return re.sub(r"\s+", "", _strip_quotes(expr).lower())


def _clauses(sql: str) -> dict[str, str]:
    s = sql.strip().rstrip(";").strip()
    low = s.lower()
    if not low.startswith("select"):
        raise ValueError("only SELECT statements are comparable")
    positions = []
    for kw in _CLAUSE_KEYWORDS:
        idx = _find_top(low, kw)
        if idx is not None:
            positions.append((idx, kw))
    positions.sort()
    clauses = {}
    for i, (start, kw) in enumerate(positions):
        end = positions[i + 1][0] if i + 1 < len(positions) else len(s)
        clauses[kw] = s[start + len(kw) : end].strip()
    return clauses


def _find_top(low: str, word: str) -> Optional[int]:
    depth = 0
    quote = ""
    i = 0
    while i < len(low):
        ch = low[i]
        if quote:
            if ch == quote:
                quote = ""
            i += 1
            continue
        if ch in "'\"":
            quote = ch
        elif ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif depth == 0 and low.startswith(word, i) and _word_boundary(low, i, word):
            return i
        i += 1
    return None


_AGG_RE = re.compile(r"^(sum|avg|min|max|count)\s*\((.*)\)$", re.I | re.S)


def _resolve_column(name: str, owners: dict[str, set[str]], tables: set[str]) -> str:
    name = _strip_quotes(name).strip().lower()
    if "." in name:
        t, _, c = name.partition(".")
        return f"{t}.{c}"
    holders = sorted(t for t in tables if name in owners.get(t, set()))
    if len(holders) == 1:
        return f"{holders[0]}.{name}"
    return name


def _parse_shape(sql: str, owners: dict[str, set[str]]) -> _SqlShape:
    shape = _SqlShape()
    clauses = _clauses(sql)

    # FROM: relations and join predicates; RLS subqueries fold their
    # predicate into the filter set
    from_clause = clauses.get("from", "")
    extra_filters: list[str] = []
    for part in _split_top(from_clause, " join "):
        on_split = _split_top(part, " on ")
        relation = on_split[0].strip()
        m = re.match(r"^\(\s*select\s+\*\s+from\s+(\S+)\s+where\s+(.*)\)\s*(?:as\s+)?(\S+)?$",
                     relation, re.I | re.S)
        if m:
            shape.tables.add(_strip_quotes(m.group(1)).lower())
            extra_filters.append(m.group(2))
        else:
            shape.tables.add(_strip_quotes(relation.split()[0]).lower())
        for cond in on_split[1:]:
            sides = [x.strip() for x in cond.split("=")]
            if len(sides) == 2:
                shape.joins.add(
                    frozenset(
                        _resolve_column(side, owners, shape.tables) for side in sides
                    )
                )

    # SELECT list
    for item in _split_top(clauses.get("select", ""), ","):
        if not item:
            continue
        alias = None
        m_alias = re.search(r"\s+as\s+([A-Za-z_][A-Za-z0-9_]*)$", item, re.I)
        if m_alias:
            alias = m_alias.group(1).lower()
            item = item[: m_alias.start()].strip()
        if item == "*":
            continue
        m = _AGG_RE.match(item.strip())
        if m:
            func = m.group(1).lower()
            inner = m.group(2).strip()
            if func == "count" and inner.lower().startswith("distinct"):
                agg = ("count_distinct", _norm_expr(inner[8:]))
            elif inner == "*":
                agg = ("count", "*")
            elif re.fullmatch(r'[\w".]+', inner):
                agg = (func, _resolve_column(inner, owners, shape.tables))
            else:
                agg = (func, _norm_expr(item))
            shape.aggregates.add(agg)
            if alias:
                shape.alias_to_agg[alias] = agg
        elif re.search(r"[(+\-*/]", item):
            agg = ("expr", _norm_expr(item))
            shape.aggregates.add(agg)
            if alias:
                shape.alias_to_agg[alias] = agg
        else:
            shape.select_columns.add(_resolve_column(item, owners, shape.tables))

    # WHERE
    where = clauses.get("where", "")
    conjuncts = []
    if where:
        conjuncts.extend(_split_top(where, " and "))
    for extra in extra_filters:
        conjuncts.extend(_split_top(extra, " and "))
    merged: list[str] = []
    skip_next = False
    for i, conj in enumerate(conjuncts):
        # re-join BETWEEN lobes split by the AND splitter
        if skip_next:
            skip_next = False
            continue
        if re.search(r"\bbetween\b", conj, re.I) and i + 1 < len(conjuncts):
            merged.append(conj + " AND " + conjuncts[i + 1])
            skip_next = True
        else:
            merged.append(conj)
    for conj in merged:
        parsed = _parse_filter(conj, owners, shape.tables)
        shape.filters.update(parsed)

    # GROUP BY / ORDER BY / LIMIT
    for key in _split_top(clauses.get("group by", ""), ","):
        if key:
            shape.group_keys.add(_resolve_column(key, owners, shape.tables))
    order = []
    for key in _split_top(clauses.get("order by", ""), ","):
        if not key:
            continue
        direction = "asc"
        m = re.search(r"\s+(asc|desc)$", key, re.I)
        if m:
            direction = m.group(1).lower()
            key = key[: m.start()].strip()
        magg = _AGG_RE.match(key)
        if magg:
            inner = magg.group(2).strip()
            if re.fullmatch(r'[\w".]+', inner):
                target = (magg.group(1).lower(), _resolve_column(inner, owners, shape.tables))
            else:
                target = (magg.group(1).lower(), _norm_expr(key))
        elif key.lower() in shape.alias_to_agg:
            target = shape.alias_to_agg[key.lower()]
        else:
            target = ("col", _resolve_column(key, owners, shape.tables))
        order.append((target, direction))
    shape.order = tuple(order)
    limit = clauses.get("limit", "").strip()
    if limit.isdigit():
        shape.limit = int(limit)
    return shape


def _parse_filter(conj: str, owners, tables) -> set[tuple]:
    conj = conj.strip()
    if conj.startswith("(") and conj.endswith(")"):
        inner = conj[1:-1]
        parts = _split_top(inner, " or ")
        if len(parts) > 1:
            eqs = []
            for p in parts:
                sides = p.split("=")
                if len(sides) != 2:
                    break
                eqs.append((sides[0].strip(), _norm_literal(sides[1])))
            else:
                cols = {_resolve_column(c, owners, tables) for c, _ in eqs}
                if len(cols) == 1:
                    return {(cols.pop(), "in", frozenset(v for _, v in eqs))}
        conj = inner
    m = re.match(
        r"^(.+?)\s+between\s+(.+?)\s+and\s+(.+)$", conj, re.I
    )
    if m:
        col = _resolve_column(m.group(1), owners, tables)
        return {
            (col, ">=", _norm_literal(m.group(2))),
            (col, "<=", _norm_literal(m.group(3))),
        }
    m = re.match(r"^(.+?)\s+in\s*\((.+)\)$", conj, re.I)
    if m:
        col = _resolve_column(m.group(1), owners, tables)
        values = frozenset(_norm_literal(v) for v in _split_top(m.group(2), ","))
        return {(col, "in", values)}
    m = re.match(r"^(.+?)\s+like\s+(.+)$", conj, re.I)
    if m:
        return {(_resolve_column(m.group(1), owners, tables), "like", _norm_literal(m.group(2)))}
    for op in ("<=", ">=", "!=", "<>", "=", "<", ">"):
        idx = conj.find(op)
        if idx > 0:
            col = _resolve_column(conj[:idx], owners, tables)
            norm_op = "!=" if op == "<>" else op
            return {(col, norm_op, _norm_literal(conj[idx + len(op):]))}
    return {("raw", "expr", _norm_expr(conj))}


def _norm_literal(raw: str):
    s = raw.strip().rstrip(")").strip()
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "'\"":
        return s[1:-1]
    try:
        return float(s)
    except ValueError:
        return s.lower()


def _owners(schema) -> dict[str, set[str]]:
    if schema is None:
        return {}
    if hasattr(schema, "tables"):
        return {
            e.ref.name.lower(): {c.name.lower() for c in e.columns} for e in schema.tables
        }
    return {t.lower(): {c.lower() for c in cols} for t, cols in dict(schema).items()}


def structural_compare(predicted_sql: str, gold_sql: str, schema=None) -> StructuralVerdict:
    """Deterministic comparator across five dimensions; Correct iff all
    match, Incorrect iff the data model mismatches, Partial otherwise."""
    owners = _owners(schema)
    try:
        a = _parse_shape(predicted_sql, owners)
        b = _parse_shape(gold_sql, owners)
    except Exception:  # noqa: BLE001
        return StructuralVerdict(
            dimensions={d: "mismatch" for d in DIMENSIONS},
            overall=VERDICT_INCORRECT,
            parse_failed=True,
        )
    dims = {
        "data_model": "match" if a.tables == b.tables else "mismatch",
        "joins": "match" if a.joins == b.joins else "mismatch",
        "filters": "match" if a.filters == b.filters else "mismatch",
        "aggregates": "match"
        if (a.aggregates, a.group_keys, a.select_columns) == (b.aggregates, b.group_keys, b.select_columns)
        else "mismatch",
        "order_by": "match" if (a.order, a.limit) == (b.order, b.limit) else "mismatch",
    }
    if all(v == "match" for v in dims.values()):
        overall = VERDICT_CORRECT
    elif dims["data_model"] == "mismatch":
        overall = VERDICT_INCORRECT
    else:
        overall = VERDICT_PARTIAL
    return StructuralVerdict(dimensions=dims, overall=overall)


# ---------------------------------------------------------------------------
# Suite runners
# ---------------------------------------------------------------------------


def _normalize_rows(rows: list[tuple]) -> list[tuple]:
    out = []
    for row in rows:
        out.append(
            tuple(round(v, 6) if isinstance(v, float) else v for v in row)
        )
    return out


def rowsets_equal(a: list[tuple], b: list[tuple], ordered: bool) -> bool:
    na, nb = _normalize_rows(a), _normalize_rows(b)
    if ordered:
        return na == nb
    key = lambda r: tuple(str(x) for x in r)  # noqa: E731
    return sorted(na, key=key) == sorted(nb, key=key)


@dataclass
class E2EResult:
    question: str
    generated_sql: str
    gold_sql: str
    executed: bool
    rows_match: bool
    verdict: Optional[StructuralVerdict] = None
    error: str = ""


def run_e2e_suite(
    answer_fn: Callable[[str], str],
    conn: Connection,
    cases: list[dict],
    schema=None,
    row_limit: int = 100_000,
) -> list[E2EResult]:
    results = []
    for case in cases:
        question, gold_sql = case["question"], case["sql"]
        try:
            generated = answer_fn(question)
        except Exception as exc:  # noqa: BLE001
            results.append(
                E2EResult(question, "", gold_sql, False, False, error=f"{type(exc).__name__}: {exc}")
            )
            continue
        try:
            got = conn.execute_sql(generated, row_limit=row_limit)
            want = conn.execute_sql(gold_sql, row_limit=row_limit)
        except Exception as exc:  # noqa: BLE001
            results.append(
                E2EResult(question, generated, gold_sql, False, False, error=f"{type(exc).__name__}: {exc}")
            )
            continue
        ordered = _find_top(gold_sql.lower(), "order by") is not None
        match = rowsets_equal(got.rows, want.rows, ordered)
        verdict = structural_compare(generated, gold_sql, schema)
        results.append(E2EResult(question, generated, gold_sql, True, match, verdict=verdict))
    return results
