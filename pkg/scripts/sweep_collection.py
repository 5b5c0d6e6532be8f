#!/usr/bin/env python3
"""Sweep the data-collection knobs (episode time limit, expert probability,
sample count), train one model per cell, and export the plot-ready scatter
table relating top-k accuracy to evaluation reward.
"""

import argparse
import itertools
import json
import os

from branchlab import datagen, evalharness, gcnn, training
from branchlab.milp import GeneratorConfig, generate
from branchlab.policies import GcnnPolicy


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outdir", default="sweep_out")
    ap.add_argument("--time-limits", type=float, nargs="+",
                    default=[30.0, 60.0, 120.0])
    ap.add_argument("--p-sbs", type=float, nargs="+", default=[1.0, 0.3])
    ap.add_argument("--sample-counts", type=int, nargs="+",
                    default=[500, 1500])
    ap.add_argument("--dim", type=int, default=8)
    ap.add_argument("--epochs", type=int, default=25)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    os.makedirs(args.outdir, exist_ok=True)

    train_insts = [generate(GeneratorConfig("set_cover", 30, 60, 0.15,
                                            seed=100 + i)) for i in range(8)]
    eval_insts = [generate(GeneratorConfig("set_cover", 30, 60, 0.15,
                                           seed=900 + i)) for i in range(8)]

    grid = list(itertools.product(args.time_limits, args.p_sbs,
                                  args.sample_counts))
    for i, (tl, p_sb, count) in enumerate(grid):
        cell = os.path.join(args.outdir, f"exp{i:03d}")
        os.makedirs(cell, exist_ok=True)
        print(f"[{i + 1}/{len(grid)}] time_limit={tl} p_sb={p_sb} "
              f"samples={count}")
        dataset = datagen.collect(datagen.CollectionConfig(
            time_limit=tl, p_sb=p_sb, target_samples=count, seed=args.seed,
            instances=train_insts, clock="virtual"))
        params = gcnn.init_params(gcnn.GcnnConfig(args.dim), seed=args.seed)
        params, _ = training.train(dataset, params, training.TrainConfig(
            batch_size=32, max_epochs=args.epochs, seed=args.seed))
        topk = datagen.top_k_accuracy(params, dataset.valid_samples())
        report = evalharness.evaluate(evalharness.EvalConfig(
            instances=eval_insts, policy="gcnn", time_limit=60.0,
            clock="virtual"), policy=GcnnPolicy(params))
        evalharness.write_report(report, cell)
        meta = {
            "time_limit": tl,
            "p_sb": p_sb,
            "samples": count,
            "top1": topk[1],
            "top3": topk[3],
            "top5": topk[5],
            "top10": topk[10],
            "reward": report.aggregates()["mean_reward"],
        }
        with open(os.path.join(cell, "experiment.json"), "w") as fh:
            json.dump(meta, fh, indent=2)
        print(f"   top-1 {topk[1]:.1f}%  reward {meta['reward']:.1f}")

    rows = []
    for name in sorted(os.listdir(args.outdir)):
        meta_path = os.path.join(args.outdir, name, "experiment.json")
        if os.path.isfile(meta_path):
            with open(meta_path) as fh:
                rows.append(json.load(fh))
    csv_path = os.path.join(args.outdir, "scatter.csv")
    with open(csv_path, "w") as fh:
        fh.write(evalharness.scatter_export(rows))
    print(f"scatter table ({len(rows)} rows) -> {csv_path}")


if __name__ == "__main__":
    main()
