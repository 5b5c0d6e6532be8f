"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest -s tests/test_acceptance.py`` to see the lines as they
complete. The training pipeline for criteria 7 and 8 is shared and built once.
"""

import math
import time

import numpy as np
import pytest

from branchlab import datagen, evalharness, gcnn, training
from branchlab.bnb import EpisodeConfig, run_episode
from branchlab.features import BipartiteState
from branchlab.milp import GeneratorConfig, generate
from branchlab.policies import (
    GcnnPolicy,
    PseudocostPolicy,
    RandomPolicy,
    ReliabilityPolicy,
    StrongBranchingPolicy,
)
from branchlab.simplex import LpStatus, solve_relaxation

from conftest import (
    brute_force_binary_optimum,
    enumerate_lp,
    gradcheck,
    random_bipartite_state,
    random_box_lp,
    top_k_rank_oracle,
)

_LINES = []


def report(num, ok, detail):
    line = f"ACCEPTANCE {num:2d} {'PASS' if ok else 'FAIL'}: {detail}"
    _LINES.append(line)
    print(line, flush=True)
    assert ok, line


def vconfig(**kw):
    kw.setdefault("time_limit", 1e9)
    kw.setdefault("clock", "virtual")
    return EpisodeConfig(**kw)


def test_criterion_01_lp_oracle_equivalence():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        inst = random_box_lp(rng)
        sol = solve_relaxation(inst)
        ref = enumerate_lp(inst.c, inst.dense_matrix(), inst.b, inst.lower,
                           inst.upper)
        if ref is None:
            assert sol.status is LpStatus.INFEASIBLE
        else:
            assert sol.status is LpStatus.OPTIMAL
            worst = max(worst, abs(sol.z - ref))
    elapsed = time.perf_counter() - start
    report(1, worst <= 1e-9 and elapsed < 10.0,
           f"100 LPs vs vertex enumeration, worst |dz|={worst:.2e} "
           f"(tol 1e-9), {elapsed:.1f}s (budget 10s)")


def test_criterion_02_bnb_exactness_every_policy():
    start = time.perf_counter()
    policies = {
        "fsb": StrongBranchingPolicy,
        "pc": PseudocostPolicy,
        "reliability": ReliabilityPolicy,
        "random": lambda: RandomPolicy(11),
        "gcnn": lambda: GcnnPolicy(gcnn.init_params(gcnn.GcnnConfig(4), 0)),
    }
    worst = 0.0
    episodes = 0
    for seed in range(50):
        family = "set_cover" if seed % 2 == 0 else "multiknapsack"
        inst = generate(GeneratorConfig(family, rows=7, cols=12, density=0.3,
                                        seed=seed))
        ref = brute_force_binary_optimum(inst)
        for factory in policies.values():
            res = run_episode(inst, vconfig(controller=factory(), seed=seed))
            assert res.terminal.reason == "solved"
            worst = max(worst, abs(res.terminal.dual_bound - ref))
            episodes += 1
    elapsed = time.perf_counter() - start
    report(2, worst <= 1e-6 and elapsed < 120.0,
           f"{episodes} completed episodes over 50 binary instances, worst "
           f"|bound-opt|={worst:.2e} (tol 1e-6), {elapsed:.0f}s (budget 120s)")


def test_criterion_03_sb_tree_size():
    start = time.perf_counter()
    sb_nodes, rd_nodes = [], []
    for seed in range(50):
        inst = generate(GeneratorConfig("set_cover", rows=30, cols=60,
                                        density=0.15, seed=seed))
        sb = run_episode(inst, vconfig(node_limit=500,
                         controller=StrongBranchingPolicy(), seed=seed))
        rd = run_episode(inst, vconfig(node_limit=500,
                         controller=RandomPolicy(7), seed=seed))
        sb_nodes.append(sb.terminal.nodes_processed)
        rd_nodes.append(rd.terminal.nodes_processed)
    le = sum(1 for a, b in zip(sb_nodes, rd_nodes) if a <= b)
    sb_mean, rd_mean = float(np.mean(sb_nodes)), float(np.mean(rd_nodes))
    elapsed = time.perf_counter() - start
    report(3, le >= 45 and sb_mean < rd_mean and elapsed < 900.0,
           f"strong branching <= random nodes on {le}/50 (need 45), means "
           f"{sb_mean:.1f} vs {rd_mean:.1f}, {elapsed:.0f}s (budget 900s)")


def test_criterion_04_gradient_correctness():
    start = time.perf_counter()
    rng = np.random.default_rng(77)
    worst_rel = 0.0
    for trial in range(10):
        params = gcnn.init_params(gcnn.GcnnConfig(2), seed=300 + trial)
        state = random_bipartite_state(rng, m=3, n=5, nnz=8)
        cands = sorted(rng.choice(5, size=3, replace=False).tolist())
        expert = int(cands[rng.integers(3)])
        samples = [datagen.Sample(state=state, candidates=cands,
                                  expert_action=expert, sb_scores=None,
                                  provenance={})]
        _, grads = gcnn.loss_and_grads(params, samples)
        worst, msg = gradcheck(params, grads,
                               lambda: gcnn.batch_loss(params, samples),
                               step=1e-5, rel_tol=1e-4, abs_tol=1e-7)
        assert msg is None, msg
        worst_rel = max(worst_rel, worst)
    elapsed = time.perf_counter() - start
    report(4, worst_rel <= 1e-4 and elapsed < 60.0,
           f"finite differences over every tensor on 10 states, worst rel "
           f"err={worst_rel:.2e} (tol 1e-4), {elapsed:.1f}s (budget 60s)")


def test_criterion_05_permutation_equivariance_bitwise():
    rng = np.random.default_rng(55)
    params = gcnn.init_params(gcnn.GcnnConfig(8), seed=1)
    state = random_bipartite_state(rng, m=6, n=11, nnz=28)
    base = gcnn.forward(params, state)
    exact = 0
    for _ in range(20):
        pv, pc = rng.permutation(state.n), rng.permutation(state.m)
        permuted = BipartiteState(
            C=state.C[pc],
            edge_row=np.argsort(pc)[state.edge_row],
            edge_col=np.argsort(pv)[state.edge_col],
            edge_val=state.edge_val.copy(),
            V=state.V[pv],
        )
        out = gcnn.forward(params, permuted)[np.argsort(pv)]
        exact += int(np.array_equal(out, base))
    report(5, exact == 20,
           f"logits bitwise-identical after reordering on {exact}/20 random "
           f"variable+constraint permutations")


def _aligned_riemann(events, T, max_step):
    """Riemann sum whose grid subdivides each constant segment."""
    total = 0.0
    bounds = [0.0] + [t for t, _ in events if t > 0.0] + [T]
    zs = [events[0][1]] + [z for _, z in events]
    for (a, b), z in zip(zip(bounds, bounds[1:]), zs):
        if b <= a:
            continue
        cells = max(1, int(math.ceil((b - a) / max_step)))
        width = (b - a) / cells
        for _ in range(cells):
            total += z * width
    return total


def test_criterion_06_dual_integral_correctness():
    rng = np.random.default_rng(66)
    worst = 0.0
    for _ in range(200):
        k = int(rng.integers(1, 10))
        ts = np.sort(rng.uniform(0.0, 8.0, k)) + np.arange(k) * 1e-5
        zs = np.cumsum(rng.uniform(0.0, 3.0, k)) + rng.uniform(-2.0, 2.0)
        T = float(ts[-1] + rng.uniform(0.01, 4.0))
        events = list(zip(ts.tolist(), zs.tolist()))
        _, acc = evalharness.dual_integral(events, T)
        oracle = _aligned_riemann(events, T, max_step=1e-4 * T)
        worst = max(worst, abs(acc - oracle) / max(abs(oracle), 1.0))
    # instant-optimal bound: the gap is exactly zero
    gap_a, _ = evalharness.dual_integral([(0.0, 3.7)], T=11.3, opt=3.7)
    gap_b, _ = evalharness.dual_integral([(0.5, 4.0)], T=10.0, opt=4.0)
    report(6, worst <= 1e-6 and gap_a == 0.0 and gap_b == 0.0,
           f"200 random logs vs aligned Riemann oracle, worst rel "
           f"err={worst:.2e} (tol 1e-6); zero-gap cases exact: "
           f"{gap_a == 0.0 and gap_b == 0.0}")


TRAIN_SEEDS = range(100, 110)
EVAL_SEEDS = range(900, 920)
EPISODE_LIMIT = 60.0


@pytest.fixture(scope="module")
def trained_pipeline():
    t0 = time.perf_counter()
    instances = [generate(GeneratorConfig("set_cover", 30, 60, 0.15, seed=s))
                 for s in TRAIN_SEEDS]
    config = datagen.CollectionConfig(
        time_limit=EPISODE_LIMIT, p_sb=1.0, target_samples=5000, seed=8,
        instances=instances, clock="virtual",
    )
    dataset = datagen.collect(config)
    collect_time = time.perf_counter() - t0
    t0 = time.perf_counter()
    params = gcnn.init_params(gcnn.GcnnConfig(8), seed=0)
    params, history = training.train(
        dataset, params, training.TrainConfig(batch_size=64, seed=0))
    train_time = time.perf_counter() - t0
    return {
        "dataset": dataset,
        "params": params,
        "history": history,
        "collect_time": collect_time,
        "train_time": train_time,
    }


def test_criterion_07_imitation_accuracy(trained_pipeline):
    pipe = trained_pipeline
    topk = datagen.top_k_accuracy(pipe["params"],
                                  pipe["dataset"].valid_samples())
    elapsed = pipe["collect_time"] + pipe["train_time"]
    report(7, topk[1] >= 55.0 and topk[5] >= 85.0 and elapsed < 1800.0,
           f"5000-sample expert imitation: held-out top-1 {topk[1]:.1f}% "
           f"(need 55), top-5 {topk[5]:.1f}% (need 85); collect "
           f"{pipe['collect_time']:.0f}s + train {pipe['train_time']:.0f}s "
           f"over {len(pipe['history'])} epochs (budget 1800s)")


def test_criterion_08_reward_ordering(trained_pipeline):
    instances = [generate(GeneratorConfig("set_cover", 30, 60, 0.15, seed=s))
                 for s in EVAL_SEEDS]
    rewards = {}
    for name in ("gcnn", "pc", "random"):
        policy = GcnnPolicy(trained_pipeline["params"]) if name == "gcnn" \
            else None
        config = evalharness.EvalConfig(
            instances=instances, policy=name, time_limit=EPISODE_LIMIT,
            clock="virtual",
        )
        rep = evalharness.evaluate(config, policy=policy)
        assert not rep.errors
        rewards[name] = rep.aggregates()["mean_reward"]
    ok = (rewards["gcnn"] >= rewards["pc"]
          and rewards["gcnn"] >= rewards["random"])
    report(8, ok,
           f"mean accumulated reward on 20 held-out instances: "
           f"gcnn {rewards['gcnn']:.1f} vs pc {rewards['pc']:.1f} vs "
           f"random {rewards['random']:.1f} (gcnn must be >= both)")


def test_criterion_09_latency_ordering():
    inst = generate(GeneratorConfig("set_cover", 30, 60, 0.15, seed=0))
    lp = solve_relaxation(inst)
    from branchlab.features import TreeStats, extract_state

    state = extract_state(inst, lp, inst.lower, inst.upper,
                          TreeStats.empty(inst))
    lat8 = gcnn.latency_probe(gcnn.init_params(gcnn.GcnnConfig(8), 0), state,
                              repetitions=1000)
    lat64 = gcnn.latency_probe(gcnn.init_params(gcnn.GcnnConfig(64), 0),
                               state, repetitions=1000)
    report(9, lat8 < lat64,
           f"mean forward latency dim 8: {lat8:.3f} ms < dim 64: "
           f"{lat64:.3f} ms on one state (reference models of these sizes "
           f"report 0.12 ms and 9.25 ms per node on other hardware; only "
           f"the ordering is asserted)")


def test_criterion_10_collection_probability_contract(tmp_path):
    instances = [generate(GeneratorConfig("set_cover", 15, 30, 0.2, seed=s))
                 for s in range(40, 48)]

    def config(p_sb, target, seed=21):
        return datagen.CollectionConfig(
            time_limit=EPISODE_LIMIT, p_sb=p_sb, target_samples=target,
            seed=seed, instances=instances, clock="virtual")

    half = datagen.collect(config(0.5, 1100))
    frac = len(half) / half.node_visits
    full = datagen.collect(config(1.0, 400))
    every = full.node_visits == len(full)
    a, b = tmp_path / "a.ds", tmp_path / "b.ds"
    datagen.write_dataset(datagen.collect(config(1.0, 400)), str(a))
    datagen.write_dataset(datagen.collect(config(1.0, 400)), str(b))
    identical = a.read_bytes() == b.read_bytes()
    ok = (half.node_visits >= 2000 and 0.45 <= frac <= 0.55 and every
          and identical)
    report(10, ok,
           f"p=0.5 recorded fraction {frac:.3f} over {half.node_visits} "
           f"visits (need [0.45, 0.55] over >= 2000); p=1.0 records every "
           f"visit: {every}; identical configs byte-identical: {identical}")


def test_criterion_11_top_k_oracle():
    rng = np.random.default_rng(88)
    params = gcnn.init_params(gcnn.GcnnConfig(3), seed=2)
    samples = []
    for i in range(1000):
        n = int(rng.integers(6, 14))
        state = random_bipartite_state(rng, 4, n, 2 * n)
        if i % 5 == 0:
            # duplicated variables force exact logit ties
            state.V[1] = state.V[0]
        k = int(rng.integers(2, min(7, n)))
        cands = sorted(rng.choice(n, size=k, replace=False).tolist())
        samples.append(datagen.Sample(
            state=state, candidates=cands,
            expert_action=int(cands[rng.integers(k)]),
            sb_scores=None, provenance={}))
    acc = datagen.top_k_accuracy(params, samples, ks=(1, 3, 5, 10))
    hits = {k: 0 for k in (1, 3, 5, 10)}
    for s in samples:
        logits = gcnn.forward(params, s.state)
        scores = [float(logits[j]) for j in s.candidates]
        rank = top_k_rank_oracle(scores, s.candidates.index(s.expert_action))
        for k in hits:
            hits[k] += rank < k
    oracle = {k: 100.0 * hits[k] / len(samples) for k in hits}
    report(11, acc == oracle,
           f"top-k accuracies match the sort-based oracle exactly on 1000 "
           f"random samples: {acc}")


def test_zz_summary():
    print()
    for line in _LINES:
        print(line)
    assert all(" PASS: " in line for line in _LINES)
