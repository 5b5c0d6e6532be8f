"""Desk-scale branch-and-bound laboratory with learned and classical branching."""

from .bnb import Episode, EpisodeConfig, EventLog, Observation, Terminal, run_episode
from .features import BipartiteState, TreeStats, extract_state
from .milp import (
    GeneratorConfig,
    MilpInstance,
    ParseError,
    Solution,
    evaluate_solution,
    generate,
    parse_instance,
    parse_mps,
    parse_native,
    serialize_native,
)
from .simplex import (
    LpBasis,
    LpSolution,
    LpStatus,
    resolve_with_bound_change,
    solve_relaxation,
)

__all__ = [
    "BipartiteState",
    "Episode",
    "EpisodeConfig",
    "EventLog",
    "GeneratorConfig",
    "LpBasis",
    "LpSolution",
    "LpStatus",
    "MilpInstance",
    "Observation",
    "ParseError",
    "Solution",
    "Terminal",
    "TreeStats",
    "evaluate_solution",
    "extract_state",
    "generate",
    "parse_instance",
    "parse_mps",
    "parse_native",
    "resolve_with_bound_change",
    "run_episode",
    "serialize_native",
    "solve_relaxation",
]
