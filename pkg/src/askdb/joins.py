"""Primary-key detection and PK/FK join discovery.

Candidates are scored deterministically (name similarity, type
compatibility, value inclusion, PK coverage) and pruned hard before the
adjudicator sees anything, mirroring classic inclusion-dependency discovery.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from . import text
from .adjudicator import AdjudicationRequest
from .connect import TableRef
from .profiling import ColumnProfile, DistinctSketch

PK_DISTINCT_RATIO = 0.999


@dataclass
class JoinConfig:
    w_name: float = 0.2
    w_type: float = 0.1
    w_inclusion: float = 0.6
    w_support: float = 0.1
    candidate_threshold: float = 0.5
    acceptance_threshold: float = 0.8
    # a true FK normally covers a sizable share of the PK's value space;
    # dense integer key ranges nest inside each other without this floor
    min_support: float = 0.3


@dataclass
class PrimaryKey:
    table: TableRef
    columns: list[str]
    evidence: float  # min distinct ratio observed across sample rounds

    @property
    def column(self) -> str:
        return self.columns[0]


@dataclass
class JoinEdge:
    from_table: TableRef
    from_column: str
    to_table: TableRef
    to_column: str
    score: float
    components: dict = field(default_factory=dict)
    validated: bool = False

    def key(self) -> tuple[str, str, str, str]:
        return (self.from_table.name, self.from_column, self.to_table.name, self.to_column)

    def __str__(self) -> str:
        return f"{self.from_table.name}.{self.from_column} -> {self.to_table.name}.{self.to_column}"


def detect_primary_keys(
    profile_rounds: Sequence[Mapping[str, list[ColumnProfile]]],
    adjudicator=None,
) -> list[PrimaryKey]:
    """Single-column PKs: all-distinct and null-free across every sample
    round; comparable candidates resolved by the adjudicator (deterministic
    rule: a name carrying key/id, then leftmost ordinal)."""
    if len(profile_rounds) < 2:
        raise ValueError("need at least 2 independent profile rounds")
    tables = sorted(profile_rounds[0].keys())
    pks: list[PrimaryKey] = []
    for table in tables:
        candidates: list[tuple[str, float]] = []
        for idx, profile in enumerate(profile_rounds[0][table]):
            ratios = []
            ok = True
            for round_ in profile_rounds:
                p = round_[table][idx]
                if p.count == 0 or p.nulls > 0 or p.distinct_ratio < PK_DISTINCT_RATIO:
                    ok = False
                    break
                ratios.append(p.distinct_ratio)
            if ok:
                candidates.append((profile.column, min(ratios)))
        if not candidates:
            continue  # keyless table, not an error
        if len(candidates) == 1:
            chosen = candidates[0][0]
        else:
            names = [c for c, _ in candidates]
            chosen = names[0]
            if adjudicator is not None:
                resp = adjudicator.complete(
                    AdjudicationRequest(
                        "judge_join",
                        {"kind": "primary_key_choice", "table": table, "candidates": names},
                    )
                )
                if resp.usable and resp.parsed in names:
                    chosen = resp.parsed
            else:
                for name in names:
                    low = name.lower()
                    if "key" in low or low.endswith("id"):
                        chosen = name
                        break
        evidence = dict(candidates)[chosen]
        ref = profile_rounds[0][table][0].table
        pks.append(PrimaryKey(table=ref, columns=[chosen], evidence=evidence))
    return pks


def _value_set(profile: ColumnProfile) -> set:
    return set(profile.cleaned_sample)


def _inclusion_and_support(
    from_profile: ColumnProfile, to_profile: ColumnProfile
) -> tuple[float, float]:
    """inclusion = |from ⊆ to| fraction; support = fraction of PK values
    covered. Exact on fully sampled columns, sketch-estimated otherwise."""
    if from_profile.distinct_is_exact and to_profile.distinct_is_exact:
        fv, tv = _value_set(from_profile), _value_set(to_profile)
        if not fv:
            return 0.0, 0.0
        overlap = len(fv & tv)
        return overlap / len(fv), (overlap / len(tv) if tv else 0.0)
    sk_from = DistinctSketch().update(from_profile.cleaned_sample)
    sk_to = DistinctSketch().update(to_profile.cleaned_sample)
    a = sk_from.estimate()
    b = sk_to.estimate()
    union = sk_from.merge(sk_to).estimate()
    if a <= 0:
        return 0.0, 0.0
    overlap = max(0.0, a + b - union)
    return min(1.0, overlap / a), (min(1.0, overlap / b) if b > 0 else 0.0)


def score_ind_candidates(
    profiles: Mapping[str, list[ColumnProfile]],
    pks: list[PrimaryKey],
    config: Optional[JoinConfig] = None,
) -> list[JoinEdge]:
    """Score every (non-PK column, PK) pair with compatible types; pairs
    below the candidate threshold are pruned before adjudication."""
    config = config or JoinConfig()
    pk_columns = {(pk.table.name, pk.column) for pk in pks}
    edges: list[JoinEdge] = []
    for table in sorted(profiles.keys()):
        for profile in profiles[table]:
            if (table, profile.column) in pk_columns:
                continue
            if profile.count == 0 or not profile.cleaned_sample:
                continue
            for pk in pks:
                if pk.table.name == table:
                    continue  # self-references are out of scope in v1
                to_profile = next(
                    p for p in profiles[pk.table.name] if p.column == pk.column
                )
                type_compat = 1.0 if profile.data_type == to_profile.data_type else 0.0
                if type_compat == 0.0:
                    continue
                inclusion, support = _inclusion_and_support(profile, to_profile)
                name_sim = text.name_similarity(profile.column, pk.column)
                score = (
                    config.w_name * name_sim
                    + config.w_type * type_compat
                    + config.w_inclusion * inclusion
                    + config.w_support * support
                )
                if score < config.candidate_threshold:
                    continue
                edges.append(
                    JoinEdge(
                        from_table=profile.table,
                        from_column=profile.column,
                        to_table=pk.table,
                        to_column=pk.column,
                        score=round(score, 6),
                        components={
                            "name_similarity": round(name_sim, 6),
                            "type_compatibility": type_compat,
                            "inclusion_fraction": round(inclusion, 6),
                            "sample_support": round(support, 6),
                        },
                    )
                )
    edges.sort(key=lambda e: (-e.score, e.key()))
    return edges


def validate_joins(
    candidates: list[JoinEdge],
    adjudicator=None,
    config: Optional[JoinConfig] = None,
) -> list[JoinEdge]:
    """Adjudicate scored candidates into the final join graph.

    A from-column references at most one PK: among accepted candidates for
    the same from-column only the best-scoring edge survives (dense integer
    key spaces make subset collisions common, e.g. supplier keys nested in
    nation keys).
    """
    config = config or JoinConfig()
    accepted: dict[tuple[str, str], JoinEdge] = {}
    for edge in sorted(candidates, key=lambda e: (-e.score, e.key())):
        ok: bool
        if adjudicator is not None:
            resp = adjudicator.complete(
                AdjudicationRequest(
                    "judge_join",
                    {
                        "kind": "validate_edge",
                        "from": f"{edge.from_table.name}.{edge.from_column}",
                        "to": f"{edge.to_table.name}.{edge.to_column}",
                        "score": edge.score,
                        "inclusion_fraction": edge.components.get("inclusion_fraction", 0.0),
                        "name_similarity": edge.components.get("name_similarity", 0.0),
                        "sample_support": edge.components.get("sample_support", 0.0),
                        "threshold": config.acceptance_threshold,
                        "min_support": config.min_support,
                    },
                )
            )
            ok = bool(resp.parsed) if resp.usable else False
        else:
            ok = (
                edge.score >= config.acceptance_threshold
                and edge.components.get("inclusion_fraction", 0.0) >= 0.95
                and edge.components.get("sample_support", 0.0) >= config.min_support
            )
        if not ok:
            continue
        slot = (edge.from_table.name, edge.from_column)
        if slot not in accepted or edge.score > accepted[slot].score:
            edge.validated = True
            accepted[slot] = edge
    out = sorted(accepted.values(), key=lambda e: e.key())
    return out
