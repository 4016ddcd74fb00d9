"""Inferred column meaning: dimension/measure roles, human-friendly names,
descriptions, ontologies, PII flags, aliases, and custom measures.

Hierarchy of evidence: deterministic rules first, the adjudicator only for
residual ties, so the whole layer is testable offline.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

from . import text
from .adjudicator import AdjudicationRequest, text_simplify
from .connect import BOOLEAN, DATE, NUMERIC, STRING, Connection, TableRef
from .errors import ValidationError
from .profiling import ColumnProfile

DIMENSION, MEASURE = "dimension", "measure"
IDENTIFIER, DESCRIPTION, CONTINUOUS = "identifier", "description", "continuous"

ALL_AGGREGATES = ("sum", "avg", "min", "max", "count", "count_distinct")

# Classification thresholds (see module docs): measures need dispersion and
# must not look key-like.
CV_THRESHOLD = 0.01
IDENTIFIER_DISTINCT_RATIO = 0.98
_KEY_TOKENS = {"key", "id", "uuid", "guid", "pk"}
_CURRENCY_TOKENS = {"price", "cost", "balance", "amount", "charge", "revenue", "total"}
_PERCENT_TOKENS = {"percent", "pct", "percentage"}
_HIERARCHY_TOKENS = {"icd": "icd", "cpt": "cpt", "loinc": "loinc"}


@dataclass
class ColumnSemantics:
    table: TableRef
    name: str
    role: str = DIMENSION
    simplified_name: str = ""
    description: str = ""
    aliases: list[str] = field(default_factory=list)
    data_type: str = STRING
    value_type: str = DESCRIPTION
    valid_aggregates: set[str] = field(default_factory=set)
    value_aspect: Optional[dict] = None
    pii: bool = False
    hierarchical_code_system: Optional[str] = None
    confidence: float = 1.0

    def __post_init__(self):
        if self.value_type == IDENTIFIER:
            self.valid_aggregates -= {"sum", "avg"}


@dataclass
class CustomMeasure:
    name: str
    sql_expression: str
    source_tables: list[TableRef]
    origin: str = "user"  # user | auto_count_distinct
    aliases: list[str] = field(default_factory=list)


def _is_key_like(name: str) -> bool:
    tokens = text.split_identifier(name)
    if not tokens:
        return False
    last = tokens[-1]
    expanded_last = text.expand_token(last).split()[-1]
    return (
        last in _KEY_TOKENS
        or expanded_last in _KEY_TOKENS
        or last.endswith(("key", "_id"))
        or name.lower() in _KEY_TOKENS
    )


def classify_column(
    profile: ColumnProfile,
    schema_context: dict | None = None,
    adjudicator=None,
) -> ColumnSemantics:
    """Rule table first; the adjudicator only breaks residual ties and its
    absence merely lowers the confidence flag."""
    table_name = (schema_context or {}).get("table", profile.table.name)
    sem = ColumnSemantics(table=profile.table, name=profile.column, data_type=profile.data_type)
    key_like = _is_key_like(profile.column)
    ratio = profile.distinct_ratio
    cv = 0.0
    if profile.mean and profile.stddev is not None:
        cv = abs(profile.stddev / profile.mean) if profile.mean else 0.0

    integral = all(
        isinstance(v, int) or (isinstance(v, float) and v.is_integer())
        for v in profile.cleaned_sample[:500]
    )
    if profile.data_type == BOOLEAN:
        sem.role, sem.value_type = DIMENSION, DESCRIPTION
        sem.valid_aggregates = {"count"}
    elif key_like or (
        profile.data_type == NUMERIC
        and integral
        and ratio >= IDENTIFIER_DISTINCT_RATIO
        and profile.nulls == 0
    ):
        sem.role, sem.value_type = DIMENSION, IDENTIFIER
        sem.valid_aggregates = {"count", "count_distinct"}
    elif profile.data_type == NUMERIC:
        # fractional values are continuous regardless of distinct ratio
        looks_measure = cv > CV_THRESHOLD and (ratio < IDENTIFIER_DISTINCT_RATIO or not integral)
        looks_code = ratio < IDENTIFIER_DISTINCT_RATIO and cv <= CV_THRESHOLD
        default = MEASURE if looks_measure else DIMENSION
        if looks_measure or looks_code:
            sem.role = default
        elif adjudicator is not None:
            # Boundary case: dispersion and cardinality signals disagree.
            try:
                resp = adjudicator.complete(
                    AdjudicationRequest(
                        "classify_column",
                        {
                            "table": table_name,
                            "column": profile.column,
                            "distinct_ratio": round(ratio, 4),
                            "coefficient_of_variation": round(cv, 4),
                            "default": default,
                        },
                    )
                )
                sem.role = resp.parsed if resp.usable and resp.parsed in (DIMENSION, MEASURE) else default
            except Exception:  # noqa: BLE001
                sem.role = default
                sem.confidence = 0.5
        else:
            sem.role = default
            sem.confidence = 0.5
        if sem.role == MEASURE:
            sem.value_type = CONTINUOUS
            sem.valid_aggregates = set(ALL_AGGREGATES)
        else:
            sem.value_type = DESCRIPTION
            sem.valid_aggregates = {"min", "max", "count", "count_distinct"}
    elif profile.data_type == DATE:
        sem.role, sem.value_type = DIMENSION, CONTINUOUS
        sem.valid_aggregates = {"min", "max", "count", "count_distinct"}
    else:
        ident_string = ratio >= IDENTIFIER_DISTINCT_RATIO and profile.nulls == 0 and profile.count > 8
        sem.role = DIMENSION
        sem.value_type = IDENTIFIER if ident_string else DESCRIPTION
        sem.valid_aggregates = {"count", "count_distinct"}

    if sem.value_type == IDENTIFIER:
        sem.valid_aggregates -= {"sum", "avg"}
    if profile.data_type == NUMERIC and sem.role == MEASURE:
        sem.value_aspect = _value_aspect(profile)
    tokens = set(text.split_identifier(profile.column))
    for token, system in _HIERARCHY_TOKENS.items():
        if token in tokens:
            sem.hierarchical_code_system = system
    return sem


def _value_aspect(profile: ColumnProfile) -> dict:
    tokens = set(text.split_identifier(profile.column))
    precision = 0
    for v in profile.cleaned_sample[:200]:
        if isinstance(v, float):
            frac = repr(v).split(".")[-1]
            if frac != "0":
                precision = max(precision, len(frac))
    return {
        "unit": None,
        "currency": "usd" if tokens & _CURRENCY_TOKENS else None,
        "is_percentage": bool(tokens & _PERCENT_TOKENS),
        "precision": precision,
    }


def simplify_name(raw: str, table_context: str = "", adjudicator=None) -> str:
    if not raw:
        raise ValueError("raw name must be non-empty")
    if adjudicator is not None:
        try:
            resp = adjudicator.complete(
                AdjudicationRequest(
                    "simplify_name", {"raw": raw, "table_context": table_context}
                )
            )
            if resp.usable and isinstance(resp.parsed, str) and resp.parsed.strip():
                return resp.parsed.strip().lower()
        except Exception:  # noqa: BLE001
            pass
    return text_simplify(raw, table_context)


def build_aliases(raw: str, simplified: str, table_context: str = "") -> list[str]:
    """Compact grounding aliases: the simplified name, the raw name, the
    un-prefixed variant, capped at 24 chars each."""
    out = []
    candidates = [simplified, raw.lower(), " ".join(text.split_identifier(raw))]
    table_word = text.singularize(table_context.lower()) if table_context else ""
    if table_word and simplified.startswith(table_word + " "):
        candidates.append(simplified[len(table_word) + 1 :])
    for cand in candidates:
        cand = cand.strip()
        if cand and len(cand) <= 24 and cand not in out:
            out.append(cand)
    if simplified and simplified not in out:
        out.insert(0, simplified)
    return out


def describe_entity(
    kind: str,
    name: str,
    simplified: str,
    profile: Optional[ColumnProfile] = None,
    pii: bool = False,
    extra: str = "",
    adjudicator=None,
) -> str:
    """1-2 sentence description; PII columns are described from metadata only."""
    if kind == "table":
        default = f"Table {simplified or name} with {extra}."
    else:
        assert profile is not None
        bits = f"Column {simplified or name} of type {profile.data_type}"
        distinct = int(profile.distinct_estimate)
        bits += f" with {distinct} distinct values"
        if not pii and profile.cleaned_sample:
            shown = ", ".join(str(v) for v in profile.cleaned_sample[:3])
            bits += f" such as {shown}"
        default = bits + "."
    if adjudicator is not None:
        try:
            payload = {
                "kind": "describe",
                "entity": kind,
                "name": name,
                "default": default,
            }
            if profile is not None and not pii:
                payload["samples"] = [str(v) for v in profile.cleaned_sample[:5]]
            resp = adjudicator.complete(AdjudicationRequest("summarize", payload))
            if resp.usable and isinstance(resp.parsed, str) and resp.parsed.strip():
                return resp.parsed.strip()
        except Exception:  # noqa: BLE001
            pass
    return default


class PiiRules:
    def __init__(self, name_keywords: list[str], patterns: list[tuple[str, re.Pattern]]):
        self.name_keywords = name_keywords
        self.patterns = patterns

    @classmethod
    def parse(cls, raw: str) -> "PiiRules":
        keywords: list[str] = []
        patterns: list[tuple[str, re.Pattern]] = []
        section = ""
        for line in raw.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("["):
                section = line.strip("[]")
                continue
            if section == "name_keywords":
                keywords.append(line.lower())
            elif section == "value_patterns":
                strength, _, pattern = line.partition("\t")
                patterns.append((strength.strip(), re.compile(pattern.strip())))
        return cls(keywords, patterns)

    @classmethod
    def bundled(cls) -> "PiiRules":
        raw = resources.files("askdb.data").joinpath("pii_patterns.txt").read_text("utf-8")
        return cls.parse(raw)

    @classmethod
    def from_file(cls, path) -> "PiiRules":
        from pathlib import Path

        return cls.parse(Path(path).read_text("utf-8"))


_PII_RULES: Optional[PiiRules] = None


def _pii_rules() -> PiiRules:
    global _PII_RULES
    if _PII_RULES is None:
        _PII_RULES = PiiRules.bundled()
    return _PII_RULES


def detect_pii(profile: ColumnProfile, name: str, adjudicator=None) -> bool:
    rules = _pii_rules()
    normalized = "_".join(text.split_identifier(name))
    name_hint = any(kw in normalized for kw in rules.name_keywords)
    if name_hint:
        return True
    samples = [str(v) for v in profile.cleaned_sample[:200] if v is not None]
    if samples:
        for strength, pattern in rules.patterns:
            hits = sum(1 for s in samples if pattern.fullmatch(s))
            if hits / len(samples) >= 0.8 and (strength == "strong" or name_hint):
                return True
    return False


def compile_check(conn: Connection, measure: CustomMeasure) -> None:
    """Validate a measure expression by LIMIT-0 execution on the source."""
    tables = ", ".join(f'"{t.name}"' for t in measure.source_tables)
    sql = f"SELECT {measure.sql_expression} FROM {tables} LIMIT 0"
    try:
        conn.execute_sql(sql, row_limit=1)
    except Exception as exc:  # noqa: BLE001
        raise ValidationError(
            f"measure {measure.name!r} does not compile: {exc}"
        ) from exc


def register_custom_measure(graph, measure: CustomMeasure, conn: Connection):
    """Ground a user measure in the graph after a compile check."""
    compile_check(conn, measure)
    known = {t.name for t in graph.table_refs()}
    for t in measure.source_tables:
        if t.name not in known:
            raise ValidationError(f"measure source table {t.name!r} is not in the graph")
    if not measure.aliases:
        measure.aliases = [measure.name.lower()]
    graph.measures.append(measure)
    graph.bump_version()
    return graph


def auto_count_distinct_measures(
    tables: list[tuple[TableRef, list[ColumnSemantics]]],
    pk_columns: Optional[set[tuple[str, str]]] = None,
) -> list[CustomMeasure]:
    """COUNT(DISTINCT) measures for every identifier column, so identifier
    counting never double-counts. The table's own PK claims the plain name
    ("customer count"); foreign identifiers get table-qualified names
    ("order customer count")."""
    pk_columns = pk_columns or set()
    measures: list[CustomMeasure] = []
    taken: set[str] = set()
    for ref, columns in tables:
        for sem in columns:
            if sem.value_type != IDENTIFIER:
                continue
            base_tokens = [
                t for t in sem.simplified_name.split() if t not in _KEY_TOKENS
            ]
            base = " ".join(base_tokens) or sem.simplified_name
            name = f"{base} count"
            if (ref.name, sem.name) not in pk_columns and pk_columns:
                name = f"{text.singularize(ref.name)} {base} count"
            if name in taken:
                name = f"{text.singularize(ref.name)} {base} count"
            if name in taken:
                name = f"{name} ({sem.name})"
            taken.add(name)
            measures.append(
                CustomMeasure(
                    name=name,
                    sql_expression=f'COUNT(DISTINCT "{sem.name}")',
                    source_tables=[ref],
                    origin="auto_count_distinct",
                    aliases=[name],
                )
            )
    return measures
