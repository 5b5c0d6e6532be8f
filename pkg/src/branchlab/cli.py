"""Command line interface: generate, solve, collect, train, evaluate, compare."""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import datagen, evalharness, gcnn, milp, training
from .bnb import EpisodeConfig, run_episode


def _load_instance(path: str) -> milp.MilpInstance:
    with open(path) as fh:
        inst = milp.parse_instance(fh.read())
    inst.meta["path"] = path
    return inst


def _load_instances(paths) -> list[milp.MilpInstance]:
    files: list[str] = []
    for p in paths:
        if os.path.isdir(p):
            files += sorted(
                os.path.join(p, f)
                for f in os.listdir(p)
                if f.endswith((".milp", ".mps"))
            )
        else:
            files.append(p)
    if not files:
        raise SystemExit("no instance files found")
    return [_load_instance(f) for f in files]


def _cmd_generate(args):
    config = milp.GeneratorConfig(
        family=args.family, rows=args.rows, cols=args.cols,
        density=args.density, seed=args.seed,
    )
    instance = milp.generate(config)
    text = milp.serialize_native(instance)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"wrote {instance.name} (n={instance.n}, m={instance.m}) "
              f"to {args.out}")
    else:
        sys.stdout.write(text)


def _cmd_solve(args):
    instance = _load_instance(args.instance)
    policy = evalharness.make_policy(args.policy, args.seed)
    config = EpisodeConfig(
        time_limit=args.time_limit,
        node_limit=args.node_limit,
        seed=args.seed,
        controller=policy,
        clock="virtual" if args.virtual_clock else "wall",
    )
    trace_fh = open(args.trace, "w") if args.trace else None
    try:
        result = run_episode(instance, config, trace=trace_fh)
    finally:
        if trace_fh:
            trace_fh.close()
    term = result.terminal
    summary = {
        "instance": instance.name,
        "policy": args.policy,
        "reason": term.reason,
        "dual_bound": term.dual_bound,
        "nodes": term.nodes_processed,
        "elapsed": term.elapsed,
        "incumbent": None if term.incumbent_value == float("inf")
        else term.incumbent_value,
    }
    if args.out:
        with open(args.out + ".events.csv", "w") as fh:
            fh.write(term.event_log.to_csv())
        with open(args.out + ".terminal.json", "w") as fh:
            json.dump({**term.event_log.terminal_record(), **summary}, fh,
                      indent=2)
    print(json.dumps(summary))


def _cmd_collect(args):
    config = datagen.CollectionConfig(
        time_limit=args.time_limit,
        p_sb=args.p_sb,
        target_samples=args.target,
        seed=args.seed,
        instances=_load_instances(args.instances),
        clock="wall" if args.wall_clock else "virtual",
        node_limit=args.node_limit,
    )
    dataset = datagen.collect(config)
    datagen.write_dataset(dataset, args.out)
    print(f"collected {len(dataset)} samples "
          f"({len(dataset.train_idx)} train / {len(dataset.valid_idx)} valid) "
          f"over {dataset.node_visits} node visits -> {args.out}")


def _cmd_train(args):
    dataset = datagen.read_dataset(args.data)
    params = gcnn.init_params(gcnn.GcnnConfig(embedding_dim=args.dim), args.seed)
    config = training.TrainConfig(
        batch_size=args.batch, lr=args.lr, max_epochs=args.max_epochs,
        seed=args.seed,
    )
    params, history = training.train(dataset, params, config)
    gcnn.save_model(params, args.out)
    last = history[-1]
    best = min(h.valid_loss for h in history)
    print(f"trained {len(history)} epochs "
          f"(final valid loss {last.valid_loss:.4f}, best {best:.4f}, "
          f"top-1 {last.topk.get(1, float('nan')):.1f}%) -> {args.out}")
    if args.history:
        with open(args.history, "w") as fh:
            json.dump([h.__dict__ for h in history], fh, indent=2)


def _cmd_model_info(args):
    print(json.dumps(gcnn.model_info(args.model), indent=2))


def _cmd_evaluate(args):
    opt_values = None
    if args.opt_values:
        with open(args.opt_values) as fh:
            opt_values = json.load(fh)
    config = evalharness.EvalConfig(
        instances=_load_instances(args.instances),
        policy=args.policy,
        time_limit=args.time_limit,
        seeds=args.seeds,
        opt_values=opt_values,
        clock="virtual" if args.virtual_clock else "wall",
        node_limit=args.node_limit,
    )
    report = evalharness.evaluate(config)
    evalharness.write_report(report, args.out)
    print(json.dumps({"policy": report.policy, **report.aggregates()}))


def _cmd_compare(args):
    reports = {}
    for path in args.reports:
        report = evalharness.read_report(path)
        reports[report.policy] = report
    result = evalharness.compare(reports)
    print(json.dumps(result, indent=2))


def _cmd_scatter(args):
    rows = []
    for name in sorted(os.listdir(args.grid)):
        subdir = os.path.join(args.grid, name)
        meta_path = os.path.join(subdir, "experiment.json")
        if not os.path.isfile(meta_path):
            continue
        with open(meta_path) as fh:
            meta = json.load(fh)
        if "reward" not in meta:
            report = evalharness.read_report(subdir)
            meta["reward"] = report.aggregates()["mean_reward"]
        rows.append(meta)
    text = evalharness.scatter_export(rows)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"wrote {len(rows)} experiment rows to {args.out}")
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="branchlab",
        description="Branch-and-bound laboratory for learned variable selection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a benchmark instance")
    p.add_argument("--family", required=True, choices=milp.GENERATOR_FAMILIES)
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--density", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("solve", help="run one branch-and-bound episode")
    p.add_argument("--instance", required=True)
    p.add_argument("--policy", default="pc",
                   help="fsb, pc, reliability, random, or gcnn:<model>")
    p.add_argument("--time-limit", type=float, default=900.0)
    p.add_argument("--node-limit", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--virtual-clock", action="store_true")
    p.add_argument("--trace", help="write JSON-lines decision trace here")
    p.add_argument("--out", help="prefix for .events.csv and .terminal.json")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("collect", help="collect expert branching samples")
    p.add_argument("--instances", nargs="+", required=True)
    p.add_argument("--time-limit", type=float, default=60.0)
    p.add_argument("--p-sb", type=float, default=1.0)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--node-limit", type=int)
    p.add_argument("--wall-clock", action="store_true",
                   help="use wall time instead of the deterministic node clock")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_collect)

    p = sub.add_parser("train", help="train a scoring model on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--max-epochs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--history", help="write per-epoch history JSON here")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("model-info", help="inspect a model file")
    p.add_argument("model")
    p.set_defaults(func=_cmd_model_info)

    p = sub.add_parser("evaluate", help="evaluate a policy over instances")
    p.add_argument("--instances", nargs="+", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--time-limit", type=float, default=900.0)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--node-limit", type=int)
    p.add_argument("--opt-values", help="JSON file of per-instance optima")
    p.add_argument("--virtual-clock", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("compare", help="compare evaluation reports")
    p.add_argument("reports", nargs="+")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("scatter", help="export a plot-ready experiment table")
    p.add_argument("--grid", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_scatter)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
