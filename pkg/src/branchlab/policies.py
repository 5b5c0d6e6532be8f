"""Classical branching rules and the policy objects the episode runner drives.

Strong branching scores a candidate by solving both child LPs; pseudocost
scores from per-variable gain history; reliability mixes the two by switching
a candidate to history once both sides have enough observations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .simplex import LpStatus

SCORE_EPS = 1e-6
INFEASIBLE_DELTA = 1e10
SB_PIVOT_CAP = 500
RELIABILITY_THRESHOLD = 4


@dataclass
class PseudocostStore:
    """Per-variable running sums of objective gain per unit of bound move."""

    up_sum: np.ndarray
    up_count: np.ndarray
    down_sum: np.ndarray
    down_count: np.ndarray

    @classmethod
    def empty(cls, n: int) -> "PseudocostStore":
        return cls(np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n))

    def global_average(self) -> float:
        total = self.up_count.sum() + self.down_count.sum()
        if total == 0:
            return 1.0
        return float((self.up_sum.sum() + self.down_sum.sum()) / total)

    def average(self, var: int, side: str) -> float:
        s, k = (
            (self.up_sum[var], self.up_count[var])
            if side == "up"
            else (self.down_sum[var], self.down_count[var])
        )
        if k == 0:
            return self.global_average()
        return float(s / k)

    def min_count(self, var: int) -> float:
        return float(min(self.up_count[var], self.down_count[var]))


def update_pseudocosts(store: PseudocostStore, var: int, side: str, gain: float,
                       fractionality: float) -> PseudocostStore:
    """Fold one observed branching gain into the store.

    ``fractionality`` is the bound move on that side (x - floor(x) going down,
    ceil(x) - x going up), so the stored quantity is gain per unit moved.
    """
    if gain < -1e-7:
        raise ValueError("gain must be nonnegative up to tolerance")
    if not (0.0 < fractionality < 1.0):
        raise ValueError("fractionality must lie in (0, 1)")
    per_unit = max(gain, 0.0) / fractionality
    if side == "up":
        store.up_sum[var] += per_unit
        store.up_count[var] += 1
    elif side == "down":
        store.down_sum[var] += per_unit
        store.down_count[var] += 1
    else:
        raise ValueError(f"unknown side {side!r}")
    return store


@dataclass
class ScoredCandidates:
    indices: list[int]
    scores: np.ndarray
    chosen: int
    rules: list[str]
    capped: list[bool]

    @classmethod
    def from_scores(cls, indices, scores, rules, capped=None) -> "ScoredCandidates":
        scores = np.asarray(scores, dtype=np.float64)
        if not np.isfinite(scores).all():
            raise ValueError("candidate scores must be finite")
        chosen = indices[int(np.argmax(scores))]  # argmax ties at lowest index
        return cls(
            indices=list(indices),
            scores=scores,
            chosen=int(chosen),
            rules=list(rules),
            capped=list(capped) if capped is not None else [False] * len(indices),
        )


def _product_score(delta_down: float, delta_up: float) -> float:
    return max(delta_down, SCORE_EPS) * max(delta_up, SCORE_EPS)


def strong_branching_scores(episode, node, candidates, store=None,
                            pivot_cap=SB_PIVOT_CAP) -> ScoredCandidates:
    """Score every candidate by its two child LP bound gains.

    An infeasible child contributes a huge gain; a pivot-capped child solve
    contributes 0 and flags the candidate. When ``store`` is given, gains from
    cleanly solved children also update the pseudocost history.
    """
    scores, capped = [], []
    z0 = node.lower_bound
    for j in candidates:
        xj = node.lp.x[j]
        f = xj - math.floor(xj)
        deltas = []
        was_capped = False
        for direction, dist in (("down", f), ("up", 1.0 - f)):
            child = episode.solve_child_lp(node, j, direction, pivot_cap=pivot_cap)
            if child.status is LpStatus.INFEASIBLE:
                deltas.append(INFEASIBLE_DELTA)
            elif child.status is LpStatus.OPTIMAL:
                delta = child.z - z0
                deltas.append(delta)
                if store is not None:
                    update_pseudocosts(store, j, direction, max(delta, 0.0), dist)
            else:
                deltas.append(0.0)
                was_capped = True
        scores.append(_product_score(deltas[0], deltas[1]))
        capped.append(was_capped)
    return ScoredCandidates.from_scores(candidates, scores, ["sb"] * len(candidates),
                                        capped)


def pseudocost_scores(node, candidates, store: PseudocostStore) -> ScoredCandidates:
    scores = []
    for j in candidates:
        f = node.lp.x[j] - math.floor(node.lp.x[j])
        down = store.average(j, "down") * f
        up = store.average(j, "up") * (1.0 - f)
        scores.append(_product_score(down, up))
    return ScoredCandidates.from_scores(candidates, scores, ["pc"] * len(candidates))


def reliability_scores(episode, node, candidates, store: PseudocostStore,
                       threshold: float = RELIABILITY_THRESHOLD,
                       pivot_cap=SB_PIVOT_CAP) -> ScoredCandidates:
    """Strong-branch candidates with thin history, pseudocost the rest."""
    unreliable = [j for j in candidates if store.min_count(j) < threshold]
    reliable = [j for j in candidates if store.min_count(j) >= threshold]
    parts: dict[int, tuple[float, str, bool]] = {}
    if unreliable:
        sb = strong_branching_scores(episode, node, unreliable, store=store,
                                     pivot_cap=pivot_cap)
        for j, s, cp in zip(sb.indices, sb.scores, sb.capped):
            parts[j] = (float(s), "sb", cp)
    if reliable:
        pc = pseudocost_scores(node, reliable, store)
        for j, s in zip(pc.indices, pc.scores):
            parts[j] = (float(s), "pc", False)
    scores = [parts[j][0] for j in candidates]
    rules = [parts[j][1] for j in candidates]
    capped = [parts[j][2] for j in candidates]
    return ScoredCandidates.from_scores(candidates, scores, rules, capped)


def random_choice(candidates, rng: np.random.Generator) -> int:
    """Uniform candidate pick, deterministic for a given generator state."""
    if not candidates:
        raise ValueError("no candidates to choose from")
    return int(candidates[int(rng.integers(len(candidates)))])


# ---------------------------------------------------------------------------
# policy objects for the episode runner
# ---------------------------------------------------------------------------


class Policy:
    name = "policy"
    needs_state = False

    def begin_episode(self, instance, seed: int):
        pass

    def select(self, episode, obs) -> int:
        raise NotImplementedError

    def observe_branch(self, info: dict):
        pass

    last_decision: dict | None = None

    def _note(self, scored: ScoredCandidates):
        self.last_decision = {
            "scores": [float(s) for s in scored.scores],
            "rules": scored.rules,
        }


class StrongBranchingPolicy(Policy):
    name = "fsb"

    def __init__(self, pivot_cap: int = SB_PIVOT_CAP):
        self.pivot_cap = pivot_cap

    def select(self, episode, obs) -> int:
        node = episode.nodes[obs.focus_node_id]
        scored = strong_branching_scores(episode, node, obs.candidates,
                                         pivot_cap=self.pivot_cap)
        self._note(scored)
        return scored.chosen


class PseudocostPolicy(Policy):
    name = "pc"

    def __init__(self):
        self.store: PseudocostStore | None = None

    def begin_episode(self, instance, seed: int):
        self.store = PseudocostStore.empty(instance.n)

    def select(self, episode, obs) -> int:
        node = episode.nodes[obs.focus_node_id]
        scored = pseudocost_scores(node, obs.candidates, self.store)
        self._note(scored)
        return scored.chosen

    def observe_branch(self, info: dict):
        f = info["frac"]
        if info["down_gain"] is not None:
            update_pseudocosts(self.store, info["var"], "down",
                               max(info["down_gain"], 0.0), f)
        if info["up_gain"] is not None:
            update_pseudocosts(self.store, info["var"], "up",
                               max(info["up_gain"], 0.0), 1.0 - f)


class ReliabilityPolicy(PseudocostPolicy):
    name = "reliability"

    def __init__(self, threshold: float = RELIABILITY_THRESHOLD,
                 pivot_cap: int = SB_PIVOT_CAP):
        super().__init__()
        self.threshold = threshold
        self.pivot_cap = pivot_cap

    def select(self, episode, obs) -> int:
        node = episode.nodes[obs.focus_node_id]
        scored = reliability_scores(episode, node, obs.candidates, self.store,
                                    threshold=self.threshold,
                                    pivot_cap=self.pivot_cap)
        self._note(scored)
        return scored.chosen


class RandomPolicy(Policy):
    name = "random"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def begin_episode(self, instance, seed: int):
        self.rng = np.random.default_rng((self.seed, seed))

    def select(self, episode, obs) -> int:
        self.last_decision = {"rules": ["random"] * len(obs.candidates)}
        return random_choice(obs.candidates, self.rng)


class GcnnPolicy(Policy):
    """Scores candidates with a trained graph-convolution model."""

    name = "gcnn"
    needs_state = True

    def __init__(self, params):
        self.params = params

    def select(self, episode, obs) -> int:
        from .gcnn import forward

        logits = forward(self.params, obs.state)
        cand = np.asarray(obs.candidates)
        best = cand[int(np.argmax(logits[cand]))]
        self.last_decision = {
            "scores": [float(logits[j]) for j in obs.candidates],
            "rules": ["gcnn"] * len(obs.candidates),
        }
        return int(best)
