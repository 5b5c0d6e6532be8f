#!/usr/bin/env python3
"""End-to-end desk-scale experiment: generate instances, collect expert
demonstrations, train a scoring model, and compare it against the classical
baselines under a deterministic virtual clock.

Everything runs through the public CLI-equivalent APIs, so the script doubles
as usage documentation. Takes a few minutes with the default sizes.
"""

import argparse
import json
import os

from branchlab import datagen, evalharness, gcnn, training
from branchlab.milp import GeneratorConfig, generate
from branchlab.policies import GcnnPolicy


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outdir", default="pipeline_out")
    ap.add_argument("--rows", type=int, default=30)
    ap.add_argument("--cols", type=int, default=60)
    ap.add_argument("--density", type=float, default=0.15)
    ap.add_argument("--train-instances", type=int, default=10)
    ap.add_argument("--eval-instances", type=int, default=10)
    ap.add_argument("--samples", type=int, default=2000)
    ap.add_argument("--p-sb", type=float, default=1.0)
    ap.add_argument("--episode-limit", type=float, default=60.0,
                    help="virtual-clock time limit per episode")
    ap.add_argument("--dim", type=int, default=8)
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    os.makedirs(args.outdir, exist_ok=True)

    def gen(seed):
        return generate(GeneratorConfig("set_cover", args.rows, args.cols,
                                        args.density, seed=seed))

    train_insts = [gen(100 + i) for i in range(args.train_instances)]
    eval_insts = [gen(900 + i) for i in range(args.eval_instances)]

    print(f"collecting {args.samples} expert samples "
          f"(p_sb={args.p_sb}, {args.train_instances} instances)...")
    dataset = datagen.collect(datagen.CollectionConfig(
        time_limit=args.episode_limit, p_sb=args.p_sb,
        target_samples=args.samples, seed=args.seed, instances=train_insts,
        clock="virtual",
    ))
    data_path = os.path.join(args.outdir, "samples.ds")
    datagen.write_dataset(dataset, data_path)
    print(f"  {len(dataset)} samples over {dataset.node_visits} node visits "
          f"-> {data_path}")

    print(f"training dim={args.dim} model for up to {args.epochs} epochs...")
    params = gcnn.init_params(gcnn.GcnnConfig(args.dim), seed=args.seed)
    params, history = training.train(dataset, params, training.TrainConfig(
        batch_size=64, max_epochs=args.epochs, seed=args.seed))
    model_path = os.path.join(args.outdir, "model.gcnn")
    gcnn.save_model(params, model_path)
    topk = datagen.top_k_accuracy(params, dataset.valid_samples())
    print(f"  {len(history)} epochs, held-out top-1 {topk[1]:.1f}% "
          f"top-5 {topk[5]:.1f}% -> {model_path}")

    reports = {}
    for name in ("gcnn", "fsb", "pc", "reliability", "random"):
        policy = GcnnPolicy(params) if name == "gcnn" else None
        report = evalharness.evaluate(evalharness.EvalConfig(
            instances=eval_insts, policy=name, time_limit=args.episode_limit,
            clock="virtual"), policy=policy)
        evalharness.write_report(report, os.path.join(args.outdir,
                                                      f"report_{name}"))
        reports[name] = report
        agg = report.aggregates()
        print(f"  {name:12s} mean reward {agg['mean_reward']:10.1f}  "
              f"solved {agg['solved']}/{agg['episodes']}")

    comparison = evalharness.compare(reports)
    with open(os.path.join(args.outdir, "comparison.json"), "w") as fh:
        json.dump(comparison, fh, indent=2)
    print(f"comparison table -> {os.path.join(args.outdir, 'comparison.json')}")


if __name__ == "__main__":
    main()
