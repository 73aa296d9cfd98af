"""Convex relaxations for picking the k most influential senders of a bipartite network."""

from relaxim.cascade import CascadeProblem, certify_by_cut, expected_spread, solve_cascade
from relaxim.graph import BipartiteGraph, DimensionError, GraphParseError, read_graph, write_graph
from relaxim.lp import build_lp, kkt_check, solve_lp

__version__ = "0.1.0"

__all__ = [
    "BipartiteGraph",
    "CascadeProblem",
    "DimensionError",
    "GraphParseError",
    "build_lp",
    "certify_by_cut",
    "expected_spread",
    "kkt_check",
    "read_graph",
    "solve_cascade",
    "solve_lp",
    "write_graph",
]
