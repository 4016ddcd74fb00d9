"""Tree transformations: the consolidation rule list and the row-level
security qualifier.

Each consolidation rule is a pure two-phase (qualify, apply) pair; the list
is applied in order to a fixpoint, at most 10 sweeps. Idempotence of the
whole pass is a tested invariant.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, replace
from typing import Callable, Optional

from ..errors import ConsolidationError
from .ground import GroundedColumn
from .parsing import AggregateSpec
from .tree import Aggregate, Join, OperatorTree, OrderBy, Qualify, Scan

CONFIDENCE_FALLBACK_THRESHOLD = 0.5
MAX_SWEEPS = 10


def _aggregate_node(tree: OperatorTree) -> Optional[Aggregate]:
    node = tree.find(Aggregate)
    return node


def _column_key(operand) -> Optional[tuple[str, str]]:
    if isinstance(operand, GroundedColumn):
        return (operand.table.name, operand.name)
    return None


def _agg_operand_keys(agg: Aggregate) -> set[tuple[str, str]]:
    keys = set()
    for spec in agg.aggregates:
        key = _column_key(spec.operand)
        if key:
            keys.add(key)
    return keys


# -- R1: a column both grouped and aggregated leaves the GROUP BY ------------

def _r1_qualifies(tree: OperatorTree) -> bool:
    agg = _aggregate_node(tree)
    if agg is None or not agg.group_by:
        return False
    operand_keys = _agg_operand_keys(agg)
    return any(_column_key(g) in operand_keys for g in agg.group_by)


def _r1_apply(tree: OperatorTree) -> None:
    agg = _aggregate_node(tree)
    operand_keys = _agg_operand_keys(agg)
    agg.group_by = [g for g in agg.group_by if _column_key(g) not in operand_keys]


# -- R2: ORDER BY aggregates align with SELECT aggregates --------------------

def _select_aggregates(tree: OperatorTree) -> list[AggregateSpec]:
    agg = _aggregate_node(tree)
    return list(agg.aggregates) if agg else []


def _misaligned_keys(tree: OperatorTree) -> list[int]:
    order = tree.find(OrderBy)
    selects = _select_aggregates(tree)
    if order is None or not selects:
        return []
    out = []
    select_by_operand = {str(s.operand): s for s in selects}
    grouped = {_column_key(g) for g in (_aggregate_node(tree).group_by if _aggregate_node(tree) else [])}
    for i, key in enumerate(order.keys):
        target = key.target
        if isinstance(target, AggregateSpec):
            match = select_by_operand.get(str(target.operand))
            if match is not None and (match.func, str(match.operand)) != (target.func, str(target.operand)):
                out.append(i)
            elif match is None and len(selects) == 1:
                out.append(i)
        elif isinstance(target, GroundedColumn):
            key_id = _column_key(target)
            if key_id in {_column_key(s.operand) for s in selects} and key_id not in grouped:
                out.append(i)
    return out


def _r2_qualifies(tree: OperatorTree) -> bool:
    return bool(_misaligned_keys(tree))


def _r2_apply(tree: OperatorTree) -> None:
    order = tree.find(OrderBy)
    selects = _select_aggregates(tree)
    select_by_operand = {str(s.operand): s for s in selects}
    for i in _misaligned_keys(tree):
        target = order.keys[i].target
        if isinstance(target, AggregateSpec):
            match = select_by_operand.get(str(target.operand))
            aligned = match if match is not None else selects[0]
        else:
            aligned = next(
                s for s in selects if _column_key(s.operand) == _column_key(target)
            )
        order.keys[i] = replace(order.keys[i], target=copy.deepcopy(aligned))


# -- R3: GROUP BY without aggregates gets a default count --------------------

def _r3_qualifies(tree: OperatorTree) -> bool:
    agg = _aggregate_node(tree)
    return agg is not None and bool(agg.group_by) and not agg.aggregates


def _r3_apply(tree: OperatorTree) -> None:
    agg = _aggregate_node(tree)
    agg.aggregates.append(AggregateSpec("count", "*"))


# -- R4: low grounding confidence flags fallback reasoning -------------------

def _r4_qualifies(tree: OperatorTree) -> bool:
    return tree.confidence < CONFIDENCE_FALLBACK_THRESHOLD and not tree.needs_fallback_reasoning


def _r4_apply(tree: OperatorTree) -> None:
    tree.needs_fallback_reasoning = True


@dataclass
class Rule:
    name: str
    qualifies: Callable[[OperatorTree], bool]
    apply: Callable[[OperatorTree], None]


RULES = [
    Rule("R1-groupby-aggregate-conflict", _r1_qualifies, _r1_apply),
    Rule("R2-orderby-alignment", _r2_qualifies, _r2_apply),
    Rule("R3-default-aggregate", _r3_qualifies, _r3_apply),
    Rule("R4-confidence-fallback", _r4_qualifies, _r4_apply),
]


def consolidate(tree: OperatorTree) -> OperatorTree:
    """Apply the rule list to a fixpoint (bounded sweeps)."""
    current = copy.deepcopy(tree)
    for _ in range(MAX_SWEEPS):
        changed = False
        for rule in RULES:
            if rule.qualifies(current):
                before = copy.deepcopy(current)
                rule.apply(current)
                if current != before:
                    changed = True
        if not changed:
            return current
    raise ConsolidationError("consolidation did not converge within 10 sweeps")


def qualify_rls(
    tree: OperatorTree,
    rls_config: Optional[dict] = None,
    role: str = "",
) -> OperatorTree:
    """Wrap every protected scan in a Qualify node.

    rls_config maps table -> predicate, or table -> {role: predicate} when
    bindings are per-role; applied after consolidation, before decoding.
    """
    if not rls_config:
        return tree

    def predicate_for(table: str) -> Optional[str]:
        entry = rls_config.get(table)
        if entry is None:
            return None
        if isinstance(entry, str):
            return entry
        return entry.get(role) or entry.get("*")

    out = copy.deepcopy(tree)

    def rewrite(node):
        if isinstance(node, Scan):
            predicate = predicate_for(node.table.name)
            if predicate:
                return Qualify(node, predicate)
            return node
        if isinstance(node, Qualify):
            return node
        if isinstance(node, Join):
            node.left = rewrite(node.left)
            node.right = rewrite(node.right)
            return node
        node.child = rewrite(node.child)
        return node

    out.root = rewrite(out.root)
    return out


def unprotected_scans(tree: OperatorTree, protected: set[str]) -> set[str]:
    """Protected tables still scanned bare (must be empty after qualify)."""
    bare: set[str] = set()

    def visit(node, qualified: bool):
        if isinstance(node, Scan):
            if node.table.name in protected and not qualified:
                bare.add(node.table.name)
        elif isinstance(node, Qualify):
            visit(node.child, True)
        elif isinstance(node, Join):
            visit(node.left, qualified)
            visit(node.right, qualified)
        else:
            visit(node.child, qualified)

    visit(tree.root, False)
    return bare
