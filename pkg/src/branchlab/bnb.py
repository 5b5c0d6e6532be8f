"""Branch-and-bound search tree exposed as a stepwise episode.

The engine processes one node at a time: it hands the caller an observation
for the focus node, takes back a branching variable, solves both children
eagerly, and picks the next open node by best bound. Dual-bound improvements
are logged as (t, z) events against a wall or virtual clock.
"""

from __future__ import annotations

import heapq
import json
import math
import time
from dataclasses import dataclass

import numpy as np

from . import features
from .milp import INTEGRALITY_TOL, MilpInstance
from .simplex import LpSolution, LpStatus, resolve_with_bound_change, solve_relaxation

NODE_OPEN = "OPEN"
NODE_BRANCHED = "BRANCHED"
NODE_PRUNED_INFEASIBLE = "PRUNED_INFEASIBLE"
NODE_PRUNED_BOUND = "PRUNED_BOUND"
NODE_INTEGRAL = "INTEGRAL"

PRUNE_TOL = 1e-9
BOUND_SLACK = 1e-7


class WallClock:
    def __init__(self):
        self._t0 = time.perf_counter()

    def advance(self, units: float):
        pass

    def elapsed(self) -> float:
        return time.perf_counter() - self._t0


class VirtualClock:
    """Deterministic clock: one unit per processed node LP."""

    def __init__(self):
        self._t = 0.0

    def advance(self, units: float):
        self._t += units

    def elapsed(self) -> float:
        return self._t


@dataclass
class EpisodeConfig:
    time_limit: float = 900.0
    node_limit: int | None = None
    seed: int = 0
    controller: object | None = None
    clock: str = "wall"  # "wall" or "virtual"

    def __post_init__(self):
        if self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        if self.clock not in ("wall", "virtual"):
            raise ValueError("clock must be 'wall' or 'virtual'")


@dataclass
class BnbNode:
    id: int
    parent_id: int | None
    depth: int
    override: tuple[int, str, float] | None  # (var, side, value) vs parent
    lower: np.ndarray
    upper: np.ndarray
    lp: LpSolution | None = None
    lower_bound: float = -math.inf
    status: str = NODE_OPEN
    children: tuple[int, int] | None = None


class EventLog:
    """Monotone (t, z) improvements plus a terminal (t_end, reason) marker."""

    def __init__(self):
        self.events: list[tuple[float, float]] = []
        self.t_end: float | None = None
        self.reason: str | None = None

    def append(self, t: float, z: float):
        if self.events:
            t_last, z_last = self.events[-1]
            if z <= z_last:
                return
            if t <= t_last:
                self.events[-1] = (t_last, z)
                return
        self.events.append((t, z))

    def finish(self, t_end: float, reason: str):
        self.t_end = t_end
        self.reason = reason

    def to_csv(self) -> str:
        lines = ["t,z"]
        lines += [f"{t!r},{z!r}" for t, z in self.events]
        return "\n".join(lines) + "\n"

    def terminal_record(self) -> dict:
        return {"t_end": self.t_end, "reason": self.reason}

    def terminal_json(self) -> str:
        return json.dumps(self.terminal_record())


@dataclass
class Terminal:
    reason: str
    dual_bound: float
    event_log: EventLog
    nodes_processed: int
    elapsed: float
    incumbent_value: float = math.inf
    incumbent_x: np.ndarray | None = None
    numerical_failures: int = 0


class Observation:
    """Focus-node view handed to the controller; ``state`` extracts lazily."""

    def __init__(self, episode: "Episode", node: BnbNode):
        self.focus_node_id = node.id
        self.candidates = episode.candidates(node)
        self.dual_bound = episode.dual_bound()
        self.elapsed = episode.clock.elapsed()
        self._episode = episode
        self._node = node
        self._state = None

    @property
    def state(self):
        if self._state is None:
            self._state = self._episode.extract_state(self._node)
        return self._state


class Episode:
    """One branch-and-bound run over a single instance."""

    def __init__(self, instance: MilpInstance, config: EpisodeConfig):
        self.instance = instance
        self.config = config
        self.clock = VirtualClock() if config.clock == "virtual" else WallClock()
        self.nodes: dict[int, BnbNode] = {}
        self.open_heap: list[tuple[float, int]] = []
        self.event_log = EventLog()
        self.focus: BnbNode | None = None
        self.terminal: Terminal | None = None
        self.nodes_processed = 0
        self.numerical_failures = 0
        self._next_id = 0
        self._started = False
        self._min_closed_bound = math.inf
        self.last_branch_info: dict | None = None
        n, m = instance.n, instance.m
        self.stats = features.TreeStats(
            total_lps=0,
            row_first_tight=np.full(m, -1, dtype=np.int64),
            var_first_basic=np.full(n, -1, dtype=np.int64),
            incumbent_value=math.inf,
            incumbent_x=None,
            incumbent_count=0,
            incumbent_sum=np.zeros(n),
        )

    # -- lifecycle ----------------------------------------------------------

    def reset(self):
        if self._started:
            raise RuntimeError("episode already started; build a new Episode")
        self._started = True
        root = self._new_node(parent=None, override=None,
                              lower=self.instance.lower.copy(),
                              upper=self.instance.upper.copy())
        lp = solve_relaxation(self.instance, lower=root.lower, upper=root.upper)
        self._note_lp_processed(lp)
        if lp.status is LpStatus.INFEASIBLE:
            root.status = NODE_PRUNED_INFEASIBLE
            root.lower_bound = math.inf
            return self._finish("infeasible")
        if lp.status is LpStatus.UNBOUNDED:
            return self._finish("unbounded")
        if lp.status is LpStatus.ITERATION_LIMIT:
            self.numerical_failures += 1
            return self._finish("numerical_failure")
        root.lp = lp
        root.lower_bound = lp.z
        if self._is_integral(lp.x):
            root.status = NODE_INTEGRAL
            self._offer_incumbent(lp)
            self._record_bound_event()
            return self._finish("solved")
        heapq.heappush(self.open_heap, (root.lower_bound, root.id))
        self._record_bound_event()
        limit = self._check_limits()
        if limit:
            return limit
        self.focus = root
        return Observation(self, root)

    def step(self, action: int):
        if self.terminal is not None:
            raise RuntimeError("episode is finished")
        if self.focus is None:
            raise RuntimeError("call reset() first")
        node = self.focus
        cands = self.candidates(node)
        if action not in cands:
            raise ValueError(
                f"action {action} is not a branching candidate of node {node.id}"
            )
        self._expand(node, int(action))
        self._record_bound_event()
        nxt = self._select_next()
        if nxt is None:
            return self._finish("solved")
        limit = self._check_limits()
        if limit:
            return limit
        self.focus = nxt
        return Observation(self, nxt)

    def current_observation(self) -> Observation:
        if self.focus is None or self.terminal is not None:
            raise RuntimeError("no focus node to observe")
        return Observation(self, self.focus)

    # -- queries ------------------------------------------------------------

    def candidates(self, node: BnbNode) -> list[int]:
        # integer variables whose LP value is fractional beyond tolerance
        x = node.lp.x
        out = []
        for j in np.where(self.instance.integrality)[0]:
            f = x[j] - math.floor(x[j])
            if INTEGRALITY_TOL < f < 1.0 - INTEGRALITY_TOL:
                out.append(int(j))
        return out

    def dual_bound(self) -> float:
        self._drop_stale()
        if self.open_heap:
            return self.open_heap[0][0]
        if self.stats.incumbent_value < math.inf:
            return self.stats.incumbent_value
        return self._min_closed_bound

    def extract_state(self, node: BnbNode):
        return features.extract_state(
            self.instance, node.lp, node.lower, node.upper, self.stats
        )

    def solve_child_lp(self, node: BnbNode, var: int, direction: str,
                       pivot_cap: int | None = None) -> LpSolution:
        """Solve one child LP of ``node`` without touching the tree (probing)."""
        xj = node.lp.x[var]
        if direction == "down":
            side, value = "lower_upper_to", math.floor(xj)
        elif direction == "up":
            side, value = "raise_lower_to", math.ceil(xj)
        else:
            raise ValueError(f"unknown direction {direction!r}")
        return resolve_with_bound_change(
            self.instance, node.lp, var, side, value,
            lower=node.lower, upper=node.upper, pivot_cap=pivot_cap,
        )

    # -- internals ----------------------------------------------------------

    def _new_node(self, parent, override, lower, upper) -> BnbNode:
        node = BnbNode(
            id=self._next_id,
            parent_id=None if parent is None else parent.id,
            depth=0 if parent is None else parent.depth + 1,
            override=override,
            lower=lower,
            upper=upper,
        )
        self._next_id += 1
        self.nodes[node.id] = node
        return node

    def _note_lp_processed(self, lp: LpSolution):
        self.nodes_processed += 1
        self.clock.advance(1.0)
        self.stats.total_lps += 1
        if lp.status is LpStatus.OPTIMAL:
            idx = self.stats.total_lps
            fresh_rows = (self.stats.row_first_tight < 0) & lp.is_tight
            self.stats.row_first_tight[fresh_rows] = idx
            basic = lp.basis_status[: self.instance.n] == 1
            fresh_vars = (self.stats.var_first_basic < 0) & basic
            self.stats.var_first_basic[fresh_vars] = idx

    def _is_integral(self, x) -> bool:
        ints = self.instance.integrality
        if not ints.any():
            return True
        return bool(np.all(np.abs(x[ints] - np.round(x[ints])) <= INTEGRALITY_TOL))

    def _offer_incumbent(self, lp: LpSolution):
        if lp.z < self.stats.incumbent_value:
            self.stats.incumbent_value = lp.z
            self.stats.incumbent_x = lp.x.copy()
        self.stats.incumbent_count += 1
        self.stats.incumbent_sum += lp.x

    def _expand(self, node: BnbNode, var: int):
        xj = node.lp.x[var]
        down = (var, "lower_upper_to", math.floor(xj))
        up = (var, "raise_lower_to", math.ceil(xj))
        gains: dict[str, float | None] = {"down": None, "up": None}
        kid_ids = []
        for label, (v, side, value) in (("down", down), ("up", up)):
            lower, upper = node.lower.copy(), node.upper.copy()
            if side == "raise_lower_to":
                lower[v] = value
            else:
                upper[v] = value
            child = self._new_node(node, (v, side, value), lower, upper)
            kid_ids.append(child.id)
            lp = resolve_with_bound_change(
                self.instance, node.lp, v, side, value,
                lower=node.lower, upper=node.upper,
            )
            self._note_lp_processed(lp)
            self._classify_child(node, child, lp, gains, label)
        node.children = (kid_ids[0], kid_ids[1])
        node.status = NODE_BRANCHED
        f = xj - math.floor(xj)
        self.last_branch_info = {
            "var": var,
            "frac": f,
            "down_gain": gains["down"],
            "up_gain": gains["up"],
        }

    def _classify_child(self, parent, child, lp, gains, label):
        child.lp = lp
        if lp.status is LpStatus.INFEASIBLE:
            child.status = NODE_PRUNED_INFEASIBLE
            child.lower_bound = math.inf
            return
        if lp.status in (LpStatus.ITERATION_LIMIT, LpStatus.UNBOUNDED):
            # unprocessable: close conservatively with the parent bound
            self.numerical_failures += 1
            child.status = NODE_PRUNED_BOUND
            child.lower_bound = parent.lower_bound
            self._min_closed_bound = min(self._min_closed_bound, child.lower_bound)
            return
        child.lower_bound = max(lp.z, parent.lower_bound)
        gains[label] = max(lp.z - parent.lower_bound, 0.0)
        if self._is_integral(lp.x):
            child.status = NODE_INTEGRAL
            self._offer_incumbent(lp)
            self._min_closed_bound = min(self._min_closed_bound, child.lower_bound)
            return
        inc = self.stats.incumbent_value
        if inc < math.inf and child.lower_bound >= inc - PRUNE_TOL:
            child.status = NODE_PRUNED_BOUND
            self._min_closed_bound = min(self._min_closed_bound, child.lower_bound)
            return
        child.status = NODE_OPEN
        heapq.heappush(self.open_heap, (child.lower_bound, child.id))

    def _drop_stale(self):
        inc = self.stats.incumbent_value
        while self.open_heap:
            bound, nid = self.open_heap[0]
            node = self.nodes[nid]
            if node.status != NODE_OPEN:
                heapq.heappop(self.open_heap)
                continue
            if inc < math.inf and bound >= inc - PRUNE_TOL:
                node.status = NODE_PRUNED_BOUND
                self._min_closed_bound = min(self._min_closed_bound, bound)
                heapq.heappop(self.open_heap)
                continue
            break

    def _select_next(self) -> BnbNode | None:
        self._drop_stale()
        if not self.open_heap:
            return None
        return self.nodes[self.open_heap[0][1]]

    def _record_bound_event(self):
        z = self.dual_bound()
        if not math.isfinite(z):
            return
        t = min(self.clock.elapsed(), self.config.time_limit)
        self.event_log.append(t, z)

    def _check_limits(self) -> Terminal | None:
        if (
            self.config.node_limit is not None
            and self.nodes_processed >= self.config.node_limit
        ):
            return self._finish("node_limit")
        if self.clock.elapsed() >= self.config.time_limit:
            return self._finish("time_limit")
        return None

    def _finish(self, reason: str) -> Terminal:
        elapsed = self.clock.elapsed()
        self.event_log.finish(elapsed, reason)
        inc = self.stats.incumbent_value
        self.terminal = Terminal(
            reason=reason,
            dual_bound=self.dual_bound(),
            event_log=self.event_log,
            nodes_processed=self.nodes_processed,
            elapsed=elapsed,
            incumbent_value=inc,
            incumbent_x=None if self.stats.incumbent_x is None
            else self.stats.incumbent_x.copy(),
            numerical_failures=self.numerical_failures,
        )
        self.focus = None
        return self.terminal


@dataclass
class EpisodeResult:
    terminal: Terminal
    decisions: int


def run_episode(instance: MilpInstance, config: EpisodeConfig,
                trace=None) -> EpisodeResult:
    """Drive an episode with config.controller choosing every branch.

    ``trace`` may be a writable text file; each decision is logged as one JSON
    line with the candidate scores the policy reported.
    """
    policy = config.controller
    if policy is None:
        raise ValueError("config.controller is required by run_episode")
    if hasattr(policy, "begin_episode"):
        policy.begin_episode(instance, config.seed)
    episode = Episode(instance, config)
    outcome = episode.reset()
    decisions = 0
    while isinstance(outcome, Observation):
        action = policy.select(episode, outcome)
        if trace is not None:
            record = {"node": outcome.focus_node_id,
                      "candidates": outcome.candidates, "chosen": int(action)}
            detail = getattr(policy, "last_decision", None)
            if detail:
                record.update(detail)
            trace.write(json.dumps(record) + "\n")
        outcome = episode.step(action)
        decisions += 1
        if hasattr(policy, "observe_branch") and episode.last_branch_info:
            policy.observe_branch(episode.last_branch_info)
    return EpisodeResult(terminal=outcome, decisions=decisions)
