"""Question fragmentation: split a natural-language question into raw
operation strings (the canonical fragment syntax).

The deterministic fragmenter combines a rule pass (aggregate/group/filter/
order/limit trigger phrases) with template substitution against the nearest
sample-question exemplar. Anything it cannot consume lands verbatim in
`uninterpreted`; the worst case is a fully uninterpreted question, never a
failure.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .. import text
from ..adjudicator import AdjudicationRequest


@dataclass
class OperatorFragments:
    projections: list[str] = field(default_factory=list)
    filters: list[str] = field(default_factory=list)
    aggregates: list[str] = field(default_factory=list)
    group_by: list[str] = field(default_factory=list)
    order_by: list[str] = field(default_factory=list)
    limit: Optional[str] = None
    uninterpreted: list[str] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not (
            self.projections
            or self.filters
            or self.aggregates
            or self.group_by
            or self.order_by
            or self.limit
        )


def render_fragments(f: OperatorFragments) -> str:
    lines = []
    if f.projections:
        lines.append(f"Projections: [{', '.join(f.projections)}]")
    if f.filters:
        lines.append(f"Filters: [{', '.join(f.filters)}]")
    if f.aggregates:
        lines.append(f"Aggregates: [{', '.join(f.aggregates)}]")
    if f.group_by:
        lines.append(f"GroupBy: [{', '.join(f.group_by)}]")
    if f.order_by:
        lines.append(f"OrderBy: [{', '.join(f.order_by)}]")
    if f.limit:
        lines.append(f"Limit: {f.limit}")
    if f.uninterpreted:
        lines.append(f"Uninterpreted: [{', '.join(f.uninterpreted)}]")
    return "\n".join(lines)


_LABELS = {
    "projections": "projections",
    "filters": "filters",
    "aggregates": "aggregates",
    "groupby": "group_by",
    "group by": "group_by",
    "orderby": "order_by",
    "order by": "order_by",
    "limit": "limit",
    "uninterpreted": "uninterpreted",
}


def _split_list(body: str) -> list[str]:
    """Split a bracketed fragment list on commas, respecting parentheses and
    quotes."""
    body = body.strip()
    if body.startswith("[") and body.endswith("]"):
        body = body[1:-1]
    out, depth, quote, cur = [], 0, "", []
    for ch in body:
        if quote:
            cur.append(ch)
            if ch == quote:
                quote = ""
            continue
        if ch in "'\"":
            quote = ch
            cur.append(ch)
        elif ch == "(":
            depth += 1
            cur.append(ch)
        elif ch == ")":
            depth = max(0, depth - 1)
            cur.append(ch)
        elif ch == "," and depth == 0:
            item = "".join(cur).strip()
            if item:
                out.append(item)
            cur = []
        else:
            cur.append(ch)
    item = "".join(cur).strip()
    if item:
        out.append(item)
    return out


def parse_rendered_fragments(block: str) -> OperatorFragments:
    """Parse a canonical fragment block (tolerantly)."""
    f = OperatorFragments()
    for line in block.splitlines():
        line = line.strip()
        if not line or ":" not in line:
            continue
        label, _, body = line.partition(":")
        key = _LABELS.get(label.strip().lower())
        if key is None:
            continue
        if key == "limit":
            f.limit = body.strip() or None
        else:
            getattr(f, key).extend(_split_list(body))
    return f


# ---------------------------------------------------------------------------
# Deterministic fragmenter
# ---------------------------------------------------------------------------

_AGG_TRIGGERS = {
    "total": "sum",
    "sum": "sum",
    "overall": "sum",
    "average": "avg",
    "avg": "avg",
    "mean": "avg",
    "minimum": "min",
    "min": "min",
    "lowest": "min",
    "smallest": "min",
    "cheapest": "min",
    "maximum": "max",
    "max": "max",
    "highest": "max",
    "largest": "max",
    "biggest": "max",
    "count": "count",
    "number": "count",
}

# "order"/"group" are NOT boundaries: the order-by/group-by passes run first
# and consume their keywords, and phrases like "order status" must survive
_BOUNDARIES = {
    "for", "with", "where", "per", "by", "and", "or", "in", "of", "from",
    "whose", "having", "after", "before", "between", "since", "until", "than",
    "top", "limit", "first", "each", "versus", "vs", "asc", "ascending",
    "desc", "descending", "decreasing", "above", "below",
}

_VERBS = {"show", "list", "display", "give", "get", "find", "what", "which", "who", "are", "is", "me", "all", "the"}

_CMP_PATTERNS = [
    (re.compile(r"\b(greater|more|bigger|larger|higher) than\b"), ">"),
    (re.compile(r"\b(less|lower|smaller|fewer) than\b"), "<"),
    (re.compile(r"\bat least\b"), ">="),
    (re.compile(r"\bat most\b"), "<="),
    (re.compile(r"\b(equal to|equals)\b"), "="),
]

_WORD_SPAN_RE = re.compile(r"[A-Za-z0-9][A-Za-z0-9.'-]*")


class _Tokens:
    """Token list with consumption tracking for uninterpreted-span recovery."""

    def __init__(self, question: str):
        self.question = question
        self.spans = [(m.group(0), m.start(), m.end()) for m in _WORD_SPAN_RE.finditer(question)]
        self.words = [w.lower() for w, _, _ in self.spans]
        self.consumed = [False] * len(self.words)

    def consume(self, i: int, j: int) -> None:
        for k in range(i, min(j, len(self.consumed))):
            self.consumed[k] = True

    def uninterpreted_spans(self) -> list[str]:
        out = []
        run: list[int] = []
        for idx, done in enumerate(self.consumed):
            meaningful = self.words[idx] not in text.stopwords() and self.words[idx] not in _VERBS
            if not done and meaningful:
                run.append(idx)
            else:
                if run:
                    out.append(self._slice(run))
                run = []
        if run:
            out.append(self._slice(run))
        return out

    def _slice(self, run: list[int]) -> str:
        start = self.spans[run[0]][1]
        end = self.spans[run[-1]][2]
        return self.question[start:end]


def _is_number(tok: str) -> bool:
    return bool(re.fullmatch(r"\d+(\.\d+)?", tok))


def _is_year(tok: str) -> bool:
    return bool(re.fullmatch(r"(1[89]|20)\d{2}", tok))


def _is_literalish(word: str, original: str) -> bool:
    return _is_number(word) or original.isupper() or (original[:1].isupper())


def _phrase(tokens: _Tokens, start: int, *, stop_extra: frozenset = frozenset()) -> tuple[str, int]:
    """Collect a noun phrase from `start` until a boundary token, a consumed
    token, a number, or an ALLCAPS literal; returns the phrase and the index
    after its last token."""
    words = []
    i = start
    while i < len(tokens.words):
        w = tokens.words[i]
        original = tokens.spans[i][0]
        if (
            w in _BOUNDARIES
            or w in stop_extra
            or _is_number(w)
            or tokens.consumed[i]
            or (original.isupper() and len(original) > 1)
        ):
            break
        words.append(w)
        i += 1
        if len(words) >= 5:
            break
    return " ".join(words), i


def deterministic_fragment(question: str, exemplars: list[dict] | None = None) -> OperatorFragments:
    """Rule pass plus exemplar template substitution."""
    f = OperatorFragments()
    if not question or not question.strip():
        return f
    tokens = _Tokens(question)
    n = len(tokens.words)
    words = tokens.words

    # -- order by -----------------------------------------------------------
    i = 0
    while i < n - 1:
        two = f"{words[i]} {words[i + 1]}"
        if two in {"order by", "ordered by", "sorted by", "sort by"}:
            phrase, j = _agg_or_phrase(tokens, i + 2)
            direction = ""
            if j < n and words[j] in {"asc", "ascending"}:
                direction = " asc"
                j += 1
            elif j < n and words[j] in {"desc", "descending", "decreasing"}:
                direction = " desc"
                j += 1
            if phrase:
                f.order_by.append(phrase + direction)
                tokens.consume(i, j)
        i += 1

    # -- top N <dim> by <measure> / limit N ----------------------------------
    for i in range(n):
        if tokens.consumed[i]:
            continue
        if words[i] in {"top", "first"} and i + 1 < n and _is_number(words[i + 1]):
            f.limit = words[i + 1]
            j = i + 2
            dim, j2 = _phrase(tokens, j)
            tokens.consume(i, j2)
            if dim:
                f.group_by.append(dim)
            if j2 < n and words[j2] == "by":
                measure, j3 = _agg_or_phrase(tokens, j2 + 1)
                if measure:
                    if "(" in measure:
                        f.aggregates.append(measure)
                    if not f.order_by:
                        f.order_by.append(measure + " desc")
                    tokens.consume(j2, j3)
        elif words[i] == "limit" and i + 1 < n and _is_number(words[i + 1]):
            f.limit = words[i + 1]
            tokens.consume(i, i + 2)

    # -- aggregates -----------------------------------------------------------
    i = 0
    while i < n:
        if tokens.consumed[i]:
            i += 1
            continue
        w = words[i]
        if w == "how" and i + 1 < n and words[i + 1] == "many":
            phrase, j = _phrase(tokens, i + 2)
            f.aggregates.append(f"count({phrase or '*'})")
            tokens.consume(i, j)
            i = j
            continue
        if w in _AGG_TRIGGERS and not tokens.consumed[i]:
            func = _AGG_TRIGGERS[w]
            j = i + 1
            distinct = False
            if j < n and words[j] == "of":
                j += 1
            if j < n and words[j] in {"distinct", "unique"}:
                distinct = True
                j += 1
            phrase, j2 = _phrase(tokens, j)
            if phrase:
                if func == "count":
                    f.aggregates.append(f"count_distinct({phrase})" if distinct else f"count({phrase})")
                else:
                    f.aggregates.append(f"{func}({phrase})")
                tokens.consume(i, j2)
                i = j2
                continue
        i += 1

    # -- group by -------------------------------------------------------------
    i = 0
    while i < n:
        if tokens.consumed[i]:
            i += 1
            continue
        w = words[i]
        if w in {"per", "by"} or (w == "each" and i > 0 and words[i - 1] == "for"):
            phrase, j = _phrase(tokens, i + 1)
            if phrase:
                f.group_by.append(phrase)
                tokens.consume(i, j)
                i = j
                continue
        if w in {"grouped", "group"} and i + 1 < n and words[i + 1] == "by":
            phrase, j = _phrase(tokens, i + 2)
            if phrase:
                f.group_by.append(phrase)
                tokens.consume(i, j)
                i = j
                continue
        i += 1

    _rule_filters(tokens, f)
    _leading_projections(tokens, f)

    if exemplars:
        _apply_exemplar(question, tokens, f, exemplars)

    f.uninterpreted = tokens.uninterpreted_spans()
    return f


def _agg_or_phrase(tokens: _Tokens, start: int) -> tuple[str, int]:
    """An order-by target may itself be an aggregate expression."""
    words = tokens.words
    if start < len(words) and words[start] in _AGG_TRIGGERS:
        func = _AGG_TRIGGERS[words[start]]
        j = start + 1
        if j < len(words) and words[j] == "of":
            j += 1
        phrase, j2 = _phrase(tokens, j)
        if phrase:
            return f"{func}({phrase})", j2
    return _phrase(tokens, start)


def _rule_filters(tokens: _Tokens, f: OperatorFragments) -> None:
    words, n = tokens.words, len(tokens.words)
    question_low = tokens.question.lower()

    # comparison phrases: "<phrase> greater than <number>"
    for pattern, op in _CMP_PATTERNS:
        for m in pattern.finditer(question_low):
            before = [i for i, (w, s, e) in enumerate(tokens.spans) if e <= m.start()]
            after = [i for i, (w, s, e) in enumerate(tokens.spans) if s >= m.end()]
            if not after or not _is_number(words[after[0]]):
                continue
            phrase_idx = []
            for i in reversed(before):
                if tokens.consumed[i] or words[i] in _BOUNDARIES or words[i] in _VERBS or _is_number(words[i]):
                    break
                phrase_idx.insert(0, i)
            if not phrase_idx:
                continue
            phrase = " ".join(words[i] for i in phrase_idx)
            f.filters.append(f"{phrase}{op}{words[after[0]]}")
            tokens.consume(phrase_idx[0], after[0] + 1)

    # between a and b
    i = 0
    while i < n:
        if words[i] == "between" and i + 3 < n and _is_number(words[i + 1]) and words[i + 2] == "and" and _is_number(words[i + 3]):
            phrase_idx = []
            for k in reversed(range(i)):
                if tokens.consumed[k] or words[k] in _BOUNDARIES or words[k] in _VERBS or _is_number(words[k]):
                    break
                phrase_idx.insert(0, k)
            operand = " ".join(words[k] for k in phrase_idx) or "@date"
            f.filters.append(f"{operand} between {words[i + 1]} and {words[i + 3]}")
            start = phrase_idx[0] if phrase_idx else i
            tokens.consume(start, i + 4)
            i += 4
            continue
        i += 1

    # temporal: "<phrase>? after/before/since 1996[-06-30]"
    for i in range(n):
        if tokens.consumed[i]:
            continue
        if words[i] in {"after", "before", "since", "until"} and i + 1 < n:
            lit_idx = i + 1
            lit = words[lit_idx]
            if not (_is_year(lit) or re.fullmatch(r"\d{4}-\d{2}-\d{2}", lit)):
                continue
            phrase_idx = []
            for k in reversed(range(i)):
                if tokens.consumed[k] or words[k] in _BOUNDARIES or words[k] in _VERBS or _is_number(words[k]):
                    break
                phrase_idx.insert(0, k)
            dateish = [w for w in (words[k] for k in phrase_idx) if True]
            phrase = " ".join(dateish)
            if not phrase or not any(t in {"date", "day", "time", "year"} for t in phrase.split()):
                operand = "@date"
            else:
                operand = phrase
                tokens.consume(phrase_idx[0], i)
            op = {"after": ">", "before": "<", "since": ">=", "until": "<="}[words[i]]
            f.filters.append(f"{operand}{op}{lit}")
            tokens.consume(i, lit_idx + 1)

    # value filters: "for <phrase> <LITERAL> [or|and <LITERAL>]*"
    for i in range(n):
        if tokens.consumed[i] or words[i] not in {"for", "with", "where", "whose", "in"}:
            continue
        phrase, j = _phrase(tokens, i + 1)
        if not phrase:
            continue
        literals = []
        k = j
        while k < n and not tokens.consumed[k]:
            original = tokens.spans[k][0]
            if _is_literalish(words[k], original) and words[k] not in _BOUNDARIES:
                literals.append(original if original.isupper() else words[k])
                k += 1
                if k < n and words[k] in {"or", "and"}:
                    k += 1
                    continue
                break
            break
        if not literals:
            # lowercase value lists: "for <w..> <a> or <b>" splits the last
            # tokens around the connective into literals
            segment = []
            k = i + 1
            while k < n and not tokens.consumed[k] and words[k] not in (_BOUNDARIES - {"or", "and"}):
                segment.append(k)
                k += 1
            connectives = [p for p, idx in enumerate(segment) if words[idx] in {"or", "and"}]
            if connectives:
                p = connectives[0]
                if 1 <= p - 1 and p + 1 < len(segment) and p - 1 >= 1:
                    operand = " ".join(words[idx] for idx in segment[: p - 1])
                    lits = [words[segment[p - 1]], words[segment[p + 1]]]
                    if operand:
                        f.filters.append(f"{operand} in ({', '.join(lits)})")
                        tokens.consume(i, segment[p + 1] + 1)
                        continue
        if literals:
            if len(literals) == 1:
                f.filters.append(f"{phrase}={literals[0]}")
            else:
                f.filters.append(f"{phrase} in ({', '.join(literals)})")
            tokens.consume(i, k)


def _leading_projections(tokens: _Tokens, f: OperatorFragments) -> None:
    """Leading noun phrases become projections/mentions; grounding later
    decides whether each one is a column, a measure, a table hint or a
    value."""
    words, n = tokens.words, len(tokens.words)
    i = 0
    while i < n and (words[i] in _VERBS or words[i] in text.stopwords()):
        tokens.consume(i, i + 1)
        i += 1
    while i < n and not tokens.consumed[i]:
        phrase, j = _phrase(tokens, i)
        if not phrase:
            break
        f.projections.append(phrase)
        tokens.consume(i, j)
        if j < n and words[j] == "and" and j + 1 < n and not tokens.consumed[j + 1]:
            tokens.consume(j, j + 1)
            i = j + 1
            continue
        break


_LITERAL_IN_OP_RE = re.compile(r"'([^']*)'|\b(\d{4}-\d{2}-\d{2})\b|\b(\d+(?:\.\d+)?)\b")


def _apply_exemplar(
    question: str, tokens: _Tokens, f: OperatorFragments, exemplars: list[dict]
) -> None:
    """Template substitution against the closest exemplar: keep its
    operations, swapping literal slots for the question's literals."""
    q_tokens = set(text.normalize_tokens(question))
    q_numbers = [w for w in tokens.words if _is_number(w)]
    best, best_score = None, 0.0
    for ex in exemplars:
        ex_text = ex.get("text", "")
        ops = ex.get("operations", {})
        literal_tokens = set()
        for entries in ops.values():
            if not isinstance(entries, list):
                entries = [entries] if entries else []
            for entry in entries:
                for m in _LITERAL_IN_OP_RE.finditer(str(entry)):
                    literal = next(g for g in m.groups() if g is not None)
                    literal_tokens.update(text.normalize_tokens(literal))
        ex_content = set(text.normalize_tokens(ex_text)) - literal_tokens
        if not ex_content:
            continue
        q_content = q_tokens - literal_tokens
        overlap = len(ex_content & q_content) / len(ex_content | q_content)
        if overlap > best_score:
            best, best_score = ex, overlap
    if best is None or best_score < 0.45:
        return
    ops = best.get("operations", {})
    used_numbers: list[str] = []

    def substitute(entry: str) -> Optional[str]:
        out = entry
        for m in _LITERAL_IN_OP_RE.finditer(entry):
            quoted, iso, number = m.groups()
            if number is not None and not iso:
                candidates = [x for x in q_numbers if x not in used_numbers]
                if candidates:
                    used_numbers.append(candidates[0])
                    out = out.replace(number, candidates[0], 1)
                elif number not in tokens.words:
                    return None  # literal slot with nothing to fill
            elif quoted is not None:
                value_tokens = set(text.normalize_tokens(quoted))
                if value_tokens & q_tokens:
                    continue  # the value itself is mentioned; keep as-is
                return None
        return out

    for kind in ("filters", "aggregates", "group_by", "order_by", "projections"):
        extra = []
        for entry in ops.get(kind, []) or []:
            swapped = substitute(str(entry))
            if swapped is not None:
                extra.append(swapped)
        if extra:
            current = getattr(f, kind)
            if kind == "filters":
                merged = extra + [
                    c for c in current if not _covered_by(c, extra)
                ]
                f.filters = merged
            elif kind == "aggregates":
                # projections may still promote to measures at grounding;
                # never graft exemplar aggregates on top of them
                if not f.aggregates and not f.projections:
                    f.aggregates = extra
            elif kind == "group_by":
                # grouping only makes sense with aggregate evidence from the
                # question itself
                if f.aggregates and not f.group_by:
                    f.group_by = extra
            elif kind == "order_by":
                if f.aggregates and not f.order_by:
                    f.order_by = extra
            elif kind == "projections":
                if not f.projections and not f.aggregates:
                    f.projections = extra
            elif not current:
                setattr(f, kind, extra)
    if not f.limit and ops.get("limit"):
        f.limit = str(ops["limit"])
    # Exemplar adoption consumes the filter-ish tokens it explained.
    for i, w in enumerate(tokens.words):
        if _is_number(w) and w in used_numbers:
            tokens.consume(i, i + 1)
        if any(w in str(e).lower() for e in f.filters):
            tokens.consume(i, i + 1)


def _covered_by(rule_entry: str, exemplar_entries: list[str]) -> bool:
    """A rule-pass filter is dropped when an exemplar entry explains the same
    literal (e.g. the @date sentinel resolved to a real column)."""
    rule_literals = {m.group(0) for m in re.finditer(r"\d+(?:\.\d+)?", rule_entry)}
    for entry in exemplar_entries:
        entry_literals = {m.group(0) for m in re.finditer(r"\d+(?:\.\d+)?", entry)}
        if rule_literals and rule_literals <= entry_literals:
            return True
    return False


def fragment_query(question: str, operation_context: list | None, adjudicator) -> OperatorFragments:
    """Adjudicated fragmentation; the adjudicator prompt carries the top-k
    exemplars and must answer in the canonical syntax."""
    exemplars = [
        ex.to_payload() if hasattr(ex, "to_payload") else ex
        for ex in (operation_context or [])
    ]
    resp = adjudicator.complete(
        AdjudicationRequest("fragment", {"question": question, "exemplars": exemplars})
    )
    if resp.usable and isinstance(resp.parsed, OperatorFragments):
        return resp.parsed
    if resp.usable and isinstance(resp.parsed, str):
        return parse_rendered_fragments(resp.parsed)
    return deterministic_fragment(question, exemplars)
