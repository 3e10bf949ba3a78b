"""Verification engine for feed-forward networks with weighted-sum,
relu, sign, and max layers, aimed at (partially) binarized networks.

The pipeline: a network plus a property compiles into a query over a
bounded-variable linear core with piecewise-linear side constraints; the
engine alternates linear feasibility with constraint correction, case
splitting, and bound deduction; split-and-conquer distributes subqueries
over worker threads.
"""

__version__ = "0.1.0"

from .engine import EngineConfig, QueryState, Verdict, solve
from .network import Layer, Network, evaluate, load_json, merge_weighted_sums
from .properties import Property, RobustnessSpec, compile, replay, robustness_queries
from .snc import SncConfig, orchestrate

__all__ = [
    "EngineConfig",
    "QueryState",
    "Verdict",
    "solve",
    "Layer",
    "Network",
    "evaluate",
    "load_json",
    "merge_weighted_sums",
    "Property",
    "RobustnessSpec",
    "compile",
    "replay",
    "robustness_queries",
    "SncConfig",
    "orchestrate",
    "__version__",
]
