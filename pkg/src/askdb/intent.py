"""Question -> relevant tables and operation exemplars.

A deterministic hash predictor (inverted keyword index over schema and data)
prunes first; an embedding fallback catches wordings the index misses; the
join graph supplies the connecting path.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

from . import text
from .adjudicator import AdjudicationRequest
from .connect import STRING
from .errors import DisconnectedTablesError, NoInputError
from .graph import SampleQuestion, SemanticKnowledgeGraph
from .joins import JoinEdge

STEMMER_ID = "askdb-suffix-v1"
VALUE_INDEX_CAP = 1000
SCORE_FLOOR = 1.2
RELATIVE_THRESHOLD = 0.3
FALLBACK_MIN_COSINE = 0.25
MAX_PATH_EDGES = 4

_PROVENANCE_WEIGHT = {"table_name": 2.5, "column_name": 1.0, "alias": 1.0, "value": 1.5}
# FK-ish columns alias the *referenced* table's name everywhere ("supplier
# key" on lineitem); weak evidence for predicting the hosting table
_IDENTIFIER_ALIAS_FACTOR = 0.4


@dataclass
class KeywordIndex:
    postings: dict[str, list[tuple[str, float, str]]] = field(default_factory=dict)
    stopwords: frozenset = field(default_factory=frozenset)
    stemmer_id: str = STEMMER_ID
    schema_texts: dict[str, str] = field(default_factory=dict)

    def tables_for(self, token: str) -> list[tuple[str, float, str]]:
        return self.postings.get(token, [])


@dataclass
class IntentResolution:
    seed_tables: set[str]
    join_path: list[JoinEdge]
    method: str  # hash | semantic_fallback | adjudicated
    operation_context: list[SampleQuestion] = field(default_factory=list)
    scores: dict[str, float] = field(default_factory=dict)

    def reachable_tables(self) -> set[str]:
        out = set(self.seed_tables)
        for edge in self.join_path:
            out.add(edge.from_table.name)
            out.add(edge.to_table.name)
        return out


_FREE_TEXT_NAMES = {"comment", "description", "note", "notes", "remark", "remarks", "text"}


def _free_text_column(name: str) -> bool:
    tokens = text.split_identifier(name)
    return bool(tokens) and tokens[-1] in _FREE_TEXT_NAMES


def train_keyword_index(graph: SemanticKnowledgeGraph) -> KeywordIndex:
    """Postings from table names, column names, simplified names, aliases and
    the distinct values of low-cardinality string dimensions. Deterministic
    for a fixed graph."""
    index = KeywordIndex(stopwords=text.stopwords())
    best: dict[tuple[str, str], tuple[float, str]] = {}

    def post(token: str, table: str, provenance: str, factor: float = 1.0) -> None:
        token = text.stem(token)
        if not token or token in index.stopwords or token.isdigit() or len(token) < 2:
            return
        weight = _PROVENANCE_WEIGHT[provenance] * factor
        key = (token, table)
        if key not in best or weight > best[key][0]:
            best[key] = (weight, provenance)

    for entry in graph.tables:
        table = entry.ref.name
        for tok in text.split_identifier(table):
            post(tok, table, "table_name")
            post(text.singularize(tok), table, "table_name")
        schema_words: list[str] = [table]
        for sem in entry.columns:
            factor = _IDENTIFIER_ALIAS_FACTOR if sem.value_type == "identifier" else 1.0
            for tok in text.split_identifier(sem.name):
                if len(tok) > 1:
                    post(tok, table, "column_name", factor)
            for alias in [sem.simplified_name, *sem.aliases]:
                for tok in text.words(alias):
                    post(tok, table, "alias", factor)
            schema_words.append(sem.simplified_name)
        for sem, prof in zip(entry.columns, entry.profiles):
            if (
                sem.data_type == STRING
                and not sem.pii
                and not _free_text_column(sem.name)
                and prof.distinct_estimate <= VALUE_INDEX_CAP
            ):
                for value in prof.distinct_values or prof.cleaned_sample:
                    for tok in text.words(str(value)):
                        post(tok, table, "value")
        index.schema_texts[table] = " ".join(schema_words) + " " + entry.description

    # user measures only: auto COUNT(DISTINCT) measures just mirror key
    # columns and would re-spray referenced-table names
    for measure in graph.measures:
        if measure.origin != "user":
            continue
        for ref in measure.source_tables:
            for alias in [measure.name, *measure.aliases]:
                for tok in text.words(alias):
                    post(tok, ref.name, "alias")

    for (token, table), (weight, provenance) in best.items():
        index.postings.setdefault(token, []).append((table, weight, provenance))
    for token in index.postings:
        index.postings[token].sort()
    return index


def predict_tables(
    question: str,
    index: KeywordIndex,
    graph: SemanticKnowledgeGraph,
    adjudicator=None,
) -> tuple[dict[str, float], str]:
    """Sum posting weights per table (idf-damped); on a total miss, fall back
    to embedding cosine over schema texts. Raises NoInputError when both
    paths come up empty."""
    tokens = text.normalize_tokens(question)
    scores: dict[str, float] = {}
    for token in tokens:
        postings = index.tables_for(token)
        if not postings:
            continue
        # tokens shared by many tables carry less signal; a table's own name
        # matching the question is definitive and never damped
        damp = 1.0 / (1.0 + math.log2(len({t for t, _, _ in postings})))
        for table, weight, provenance in postings:
            effective = weight if provenance == "table_name" else weight * damp
            scores[table] = scores.get(table, 0.0) + effective
    if scores:
        top = max(scores.values())
        threshold = max(SCORE_FLOOR, RELATIVE_THRESHOLD * top)
        kept = {t: s for t, s in scores.items() if s >= threshold}
        if kept:
            return kept, "hash"

    # semantic fallback over schema texts
    if adjudicator is not None and index.schema_texts:
        tables = sorted(index.schema_texts)
        vectors = adjudicator.embed([question] + [index.schema_texts[t] for t in tables])
        target, rest = vectors[0], vectors[1:]
        cos = {t: text.cosine(target, v) for t, v in zip(tables, rest)}
        top = max(cos.values()) if cos else 0.0
        if top >= FALLBACK_MIN_COSINE:
            kept = {t: s for t, s in cos.items() if s >= 0.8 * top}
            return kept, "semantic_fallback"
    raise NoInputError(f"cannot identify relevant data for {question!r}")


def _adjacency(graph: SemanticKnowledgeGraph) -> dict[str, list[JoinEdge]]:
    adj: dict[str, list[JoinEdge]] = {}
    for edge in graph.joins:
        adj.setdefault(edge.from_table.name, []).append(edge)
        adj.setdefault(edge.to_table.name, []).append(edge)
    return adj


def _connected(edges: list[JoinEdge], seeds: set[str]) -> Optional[set[str]]:
    """Tables of the subtree if it is connected and covers the seeds."""
    if not edges:
        return None
    tables: set[str] = set()
    for e in edges:
        tables.add(e.from_table.name)
        tables.add(e.to_table.name)
    if not seeds <= tables:
        return None
    visited = {next(iter(tables))}
    frontier = [next(iter(visited))]
    while frontier:
        cur = frontier.pop()
        for e in edges:
            for a, b in ((e.from_table.name, e.to_table.name), (e.to_table.name, e.from_table.name)):
                if a == cur and b not in visited:
                    visited.add(b)
                    frontier.append(b)
    return tables if visited == tables else None


def _is_minimal(edges: list[JoinEdge], seeds: set[str]) -> bool:
    """Every leaf of the subtree must be a seed (no prunable dangles)."""
    degree: dict[str, int] = {}
    for e in edges:
        degree[e.from_table.name] = degree.get(e.from_table.name, 0) + 1
        degree[e.to_table.name] = degree.get(e.to_table.name, 0) + 1
    return all(t in seeds for t, d in degree.items() if d == 1)


def select_join_path(
    seed_tables: set[str],
    graph: SemanticKnowledgeGraph,
    question: str = "",
    adjudicator=None,
    max_edges: int = MAX_PATH_EDGES,
) -> list[JoinEdge]:
    """Minimal connected subtree over the validated join graph covering all
    seeds, ranked by (question-token coverage, fewest edges, lexicographic
    table sequence); ties go to the adjudicator."""
    names = {e.ref.name for e in graph.tables}
    unknown = seed_tables - names
    if unknown:
        raise DisconnectedTablesError(f"unknown seed tables: {sorted(unknown)}")
    seeds = set(seed_tables)
    if len(seeds) <= 1:
        return []
    edges = list(graph.joins)
    candidates: list[tuple[tuple, list[JoinEdge], tuple]] = []
    q_tokens = set(text.normalize_tokens(question))
    for k in range(len(seeds) - 1, max_edges + 1):
        for combo in itertools.combinations(edges, k):
            combo_list = list(combo)
            tables = _connected(combo_list, seeds)
            if tables is None or len(combo_list) != len(tables) - 1:
                continue  # not a tree
            if not _is_minimal(combo_list, seeds):
                continue
            coverage = 0
            for table in tables:
                table_tokens = {text.stem(t) for t in text.split_identifier(table)}
                entry = graph.table(table)
                if entry:
                    for sem in entry.columns:
                        table_tokens.update(text.normalize_tokens(sem.simplified_name))
                if table_tokens & q_tokens:
                    coverage += 1
            ordered = _order_edges(combo_list, seeds)
            key = (-coverage, len(combo_list), tuple(sorted(tables)))
            candidates.append((key, ordered, tuple(sorted(tables))))
        if candidates:
            break  # all trees of the minimal achievable size found
    if not candidates:
        components = _components(seeds, edges, max_edges)
        raise DisconnectedTablesError(
            f"cannot connect {sorted(seeds)} within {max_edges} hops", components=components
        )
    candidates.sort(key=lambda c: c[0])
    best_key = candidates[0][0]
    tied = [c for c in candidates if c[0] == best_key]
    if len(tied) > 1 and adjudicator is not None:
        resp = adjudicator.complete(
            AdjudicationRequest(
                "judge_path",
                {
                    "question": question,
                    "candidates": [" -> ".join(str(e) for e in c[1]) for c in tied],
                },
            )
        )
        idx = resp.parsed if resp.usable and isinstance(resp.parsed, int) else 0
        if 0 <= idx < len(tied):
            return tied[idx][1]
    return candidates[0][1]


def _order_edges(edges: list[JoinEdge], seeds: set[str]) -> list[JoinEdge]:
    """Order so each edge touches the already-visited set (build order)."""
    start = sorted(seeds)[0]
    ordered: list[JoinEdge] = []
    visited = {start}
    pending = list(edges)
    while pending:
        for edge in pending:
            if edge.from_table.name in visited or edge.to_table.name in visited:
                ordered.append(edge)
                visited.add(edge.from_table.name)
                visited.add(edge.to_table.name)
                pending.remove(edge)
                break
        else:
            ordered.extend(pending)
            break
    return ordered


def _components(seeds: set[str], edges: list[JoinEdge], max_edges: int) -> list[set[str]]:
    comps: list[set[str]] = []
    remaining = set(seeds)
    while remaining:
        start = remaining.pop()
        comp = {start}
        frontier = [start]
        hops = 0
        while frontier and hops < max_edges:
            nxt = []
            for cur in frontier:
                for e in edges:
                    for a, b in (
                        (e.from_table.name, e.to_table.name),
                        (e.to_table.name, e.from_table.name),
                    ):
                        if a == cur and b not in comp:
                            comp.add(b)
                            nxt.append(b)
            frontier = nxt
            hops += 1
        comps.append(comp & (seeds | comp))
        remaining -= comp
    return comps


def retrieve_operation_context(
    question: str,
    seed_tables: set[str],
    graph: SemanticKnowledgeGraph,
    k: int = 5,
    join_path: Optional[list[JoinEdge]] = None,
) -> list[SampleQuestion]:
    """Bank questions whose tables fall inside the reachable set, ranked by
    trigram cosine to the question (deterministic)."""
    if k <= 0 or not graph.question_bank:
        return []
    reachable = set(seed_tables)
    if join_path:
        for edge in join_path:
            reachable.add(edge.from_table.name)
            reachable.add(edge.to_table.name)
    else:
        for edge in graph.joins:
            if edge.from_table.name in seed_tables or edge.to_table.name in seed_tables:
                reachable.add(edge.from_table.name)
                reachable.add(edge.to_table.name)
    pool = [q for q in graph.question_bank if set(q.tables) <= reachable]
    if not pool:
        return []
    qvec = text.embed_text(question)
    scored = []
    for i, sample in enumerate(pool):
        sim = text.cosine(qvec, text.embed_text(sample.text))
        bonus = 0.05 * len(set(sample.tables) & seed_tables)
        scored.append((-(sim + bonus), i, sample))
    scored.sort(key=lambda s: (s[0], s[1]))
    return [s[2] for s in scored[:k]]


def resolve_intent(
    question: str,
    graph: SemanticKnowledgeGraph,
    index: KeywordIndex,
    adjudicator=None,
    k: int = 5,
) -> IntentResolution:
    scores, method = predict_tables(question, index, graph, adjudicator)
    seeds = set(scores)
    path = select_join_path(seeds, graph, question, adjudicator)
    context = retrieve_operation_context(question, seeds, graph, k=k, join_path=path)
    return IntentResolution(
        seed_tables=seeds,
        join_path=path,
        method=method,
        operation_context=context,
        scores=scores,
    )
