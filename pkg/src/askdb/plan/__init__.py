"""Staged query planning: fragment -> parse -> ground -> tree -> consolidate
-> qualify. Each stage is a pure function over the immutable graph."""

from .fragments import OperatorFragments, deterministic_fragment, fragment_query, render_fragments
from .parsing import Condition, AggregateSpec, OrderKey, ParsedOperators, parse_fragments
from .ground import GroundingResolution, ground_operators
from .tree import OperatorTree, build_tree
from .rules import consolidate, qualify_rls

__all__ = [
    "OperatorFragments",
    "deterministic_fragment",
    "fragment_query",
    "render_fragments",
    "Condition",
    "AggregateSpec",
    "OrderKey",
    "ParsedOperators",
    "parse_fragments",
    "GroundingResolution",
    "ground_operators",
    "OperatorTree",
    "build_tree",
    "consolidate",
    "qualify_rls",
]
