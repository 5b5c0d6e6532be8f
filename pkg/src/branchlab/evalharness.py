"""Policy evaluation: dual-bound integrals, report files, and comparisons.

A report covers one policy over an (instance, seed) grid. The accumulated
reward is the integral of the piecewise-constant dual bound over [0, T];
before the first event the bound takes the first event's value.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .bnb import EpisodeConfig, EventLog, run_episode
from .milp import MilpInstance
from .policies import (
    GcnnPolicy,
    PseudocostPolicy,
    RandomPolicy,
    ReliabilityPolicy,
    StrongBranchingPolicy,
)

GEOMEAN_SHIFT = 1.0

SCATTER_COLUMNS = ("time_limit", "p_sb", "samples", "top1", "top3", "top5",
                   "top10", "reward")


def dual_integral(log, T: float, opt: float | None = None):
    """Integrate the dual bound over [0, T].

    Returns (integral_gap, accumulated): accumulated is the reward to
    maximize; the gap T*opt - accumulated (to minimize, 0 at instant
    optimality) is present only when ``opt`` is given.
    """
    events = log.events if isinstance(log, EventLog) else list(log)
    if not events:
        raise ValueError("empty event log")
    prev_t = None
    prev_z = None
    for t, z in events:
        if prev_t is not None and t <= prev_t:
            raise ValueError("event times must be strictly increasing")
        if prev_z is not None and z < prev_z:
            raise ValueError("event bounds must be nondecreasing")
        prev_t, prev_z = t, z
    if T < events[-1][0] - 1e-12:
        raise ValueError("T lies before the last event")
    accumulated = 0.0
    seg_start, seg_z = 0.0, events[0][1]
    for t, z in events:
        accumulated += seg_z * (min(t, T) - seg_start)
        seg_start, seg_z = min(t, T), z
    accumulated += seg_z * (T - seg_start)
    gap = T * opt - accumulated if opt is not None else None
    return gap, accumulated


def make_policy(spec: str, seed: int = 0):
    """Build a policy from its CLI spec: fsb, pc, reliability, random,
    or gcnn:<model file>."""
    if spec == "fsb":
        return StrongBranchingPolicy()
    if spec == "pc":
        return PseudocostPolicy()
    if spec == "reliability":
        return ReliabilityPolicy()
    if spec == "random":
        return RandomPolicy(seed)
    if spec.startswith("gcnn:"):
        from .gcnn import load_model

        return GcnnPolicy(load_model(spec.split(":", 1)[1]))
    raise ValueError(f"unknown policy spec {spec!r}")


@dataclass
class EvalConfig:
    instances: list[MilpInstance]
    policy: str
    time_limit: float = 900.0
    seeds: int = 1
    opt_values: dict | None = None
    clock: str = "wall"
    node_limit: int | None = None

    def __post_init__(self):
        if self.seeds < 1:
            raise ValueError("seeds must be at least 1")
        if not self.instances:
            raise ValueError("no instances to evaluate")


@dataclass
class EvalRow:
    instance: str
    seed: int
    reward: float
    integral_gap: float | None
    nodes: int
    solve_time: float
    reason: str
    events: list = field(default_factory=list)


@dataclass
class EvalReport:
    policy: str
    time_limit: float
    clock: str
    rows: list[EvalRow]
    errors: list = field(default_factory=list)

    def aggregates(self) -> dict:
        rewards = [r.reward for r in self.rows]
        times = [r.solve_time for r in self.rows]
        return {
            "mean_reward": float(np.mean(rewards)) if rewards else math.nan,
            "shifted_geomean_time": shifted_geometric_mean(times)
            if times else math.nan,
            "episodes": len(self.rows),
            "solved": sum(1 for r in self.rows if r.reason == "solved"),
            "failures": len(self.errors),
        }


def shifted_geometric_mean(times, shift: float = GEOMEAN_SHIFT) -> float:
    t = np.asarray(list(times), dtype=np.float64)
    return float(np.exp(np.mean(np.log(t + shift))) - shift)


def evaluate(config: EvalConfig, policy=None) -> EvalReport:
    """Run the policy over every (instance, seed) pair.

    ``policy`` overrides the string lookup (used for preloaded models).
    Episode failures land in the report's error list instead of being dropped.
    """
    rows: list[EvalRow] = []
    errors: list[dict] = []
    opt_values = config.opt_values or {}
    for inst in config.instances:
        for seed in range(config.seeds):
            pol = policy if policy is not None else make_policy(config.policy, seed)
            ep_config = EpisodeConfig(
                time_limit=config.time_limit,
                node_limit=config.node_limit,
                seed=seed,
                controller=pol,
                clock=config.clock,
            )
            try:
                result = run_episode(inst, ep_config)
                term = result.terminal
                log = term.event_log
                opt = opt_values.get(inst.name)
                if log.events:
                    gap, reward = dual_integral(log, config.time_limit, opt)
                else:
                    gap, reward = None, 0.0
                rows.append(EvalRow(
                    instance=inst.name,
                    seed=seed,
                    reward=reward,
                    integral_gap=gap,
                    nodes=term.nodes_processed,
                    solve_time=min(term.elapsed, config.time_limit),
                    reason=term.reason,
                    events=list(log.events),
                ))
            except Exception as exc:  # quarantined, never dropped silently
                errors.append({"instance": inst.name, "seed": seed,
                               "error": f"{type(exc).__name__}: {exc}"})
    return EvalReport(policy=config.policy, time_limit=config.time_limit,
                      clock=config.clock, rows=rows, errors=errors)


# ---------------------------------------------------------------------------
# comparisons
# ---------------------------------------------------------------------------


def compare(reports: dict[str, EvalReport]) -> dict:
    """Compare reports sharing one (instance, seed) grid.

    Nodes are averaged only over rows solved by every policy; a win needs a
    strictly fastest solve, ties award none.
    """
    names = sorted(reports)
    grids = {
        name: {(r.instance, r.seed): r for r in rep.rows}
        for name, rep in reports.items()
    }
    keys = set(grids[names[0]])
    for name in names[1:]:
        if set(grids[name]) != keys:
            raise ValueError("reports cover different (instance, seed) grids")
    keys = sorted(keys)

    solved_by_all = [
        k for k in keys if all(grids[n][k].reason == "solved" for n in names)
    ]
    wins = {n: 0 for n in names}
    for k in keys:
        solvers = [n for n in names if grids[n][k].reason == "solved"]
        if not solvers:
            continue
        times = {n: grids[n][k].solve_time for n in solvers}
        best = min(times.values())
        fastest = [n for n, t in times.items() if t == best]
        if len(fastest) == 1:
            wins[fastest[0]] += 1

    table = {}
    for n in names:
        rows = [grids[n][k] for k in keys]
        table[n] = {
            "mean_reward": float(np.mean([r.reward for r in rows])),
            "shifted_geomean_time": shifted_geometric_mean(
                [r.solve_time for r in rows]
            ),
            "nodes_solved_by_all": float(np.mean(
                [grids[n][k].nodes for k in solved_by_all]
            )) if solved_by_all else math.nan,
            "wins": wins[n],
            "solved": sum(1 for r in rows if r.reason == "solved"),
        }
    return {"policies": table, "episodes": len(keys),
            "solved_by_all": len(solved_by_all)}


def scatter_export(rows) -> str:
    """Plot-ready CSV: one row per experiment, fixed column order."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(SCATTER_COLUMNS)
    for row in rows:
        writer.writerow([row[col] for col in SCATTER_COLUMNS])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# report files
# ---------------------------------------------------------------------------


def write_report(report: EvalReport, outdir: str):
    os.makedirs(outdir, exist_ok=True)
    os.makedirs(os.path.join(outdir, "events"), exist_ok=True)
    payload = {
        "policy": report.policy,
        "time_limit": report.time_limit,
        "clock": report.clock,
        "aggregates": report.aggregates(),
        "rows": [
            {
                "instance": r.instance,
                "seed": r.seed,
                "reward": r.reward,
                "integral_gap": r.integral_gap,
                "nodes": r.nodes,
                "solve_time": r.solve_time,
                "reason": r.reason,
            }
            for r in report.rows
        ],
        "errors": report.errors,
    }
    with open(os.path.join(outdir, "report.json"), "w") as fh:
        json.dump(payload, fh, indent=2)
    with open(os.path.join(outdir, "rows.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance", "seed", "reward", "integral_gap", "nodes",
                         "solve_time", "reason"])
        for r in report.rows:
            writer.writerow([r.instance, r.seed, r.reward, r.integral_gap,
                             r.nodes, r.solve_time, r.reason])
    for r in report.rows:
        name = f"{r.instance}__s{r.seed}.csv"
        with open(os.path.join(outdir, "events", name), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "z"])
            for t, z in r.events:
                writer.writerow([repr(t), repr(z)])


def read_report(outdir: str) -> EvalReport:
    with open(os.path.join(outdir, "report.json")) as fh:
        payload = json.load(fh)
    rows = [
        EvalRow(
            instance=r["instance"],
            seed=r["seed"],
            reward=r["reward"],
            integral_gap=r["integral_gap"],
            nodes=r["nodes"],
            solve_time=r["solve_time"],
            reason=r["reason"],
        )
        for r in payload["rows"]
    ]
    return EvalReport(policy=payload["policy"], time_limit=payload["time_limit"],
                      clock=payload["clock"], rows=rows,
                      errors=payload.get("errors", []))
