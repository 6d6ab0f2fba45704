"""Command line entry point: ``marble-qwi generate|oracle|learn|evaluate|run``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np


from . import formats
from .averaging import averaged_arms
from .harness import ExperimentConfig, generate_default_instance, run_experiment
from .model import validate_instance
from .oracle import (
    fixed_point_tables,
    subsidy_bracket,
    verify_mai,
    whittle_table,
)
from .policy import IndexPolicy, evaluate_policy
from .qwi import StepSchedule, run


def _load(path):
    instance = formats.load_instance(path)
    problems = validate_instance(instance)
    if problems:
        raise ValueError("invalid instance: " + "; ".join(p.message for p in problems))
    return instance


def cmd_generate(args):
    instance = generate_default_instance(args.seed, args.heterogeneous)
    formats.save_instance(instance, args.out)


def cmd_oracle(args):
    instance = _load(args.instance)
    out = Path(args.out)
    arms = averaged_arms(instance)
    reports, lines, seen = [], [], set()
    for i, mdp in enumerate(arms):
        if id(mdp) in seen:
            continue  # shared by reference with an earlier arm
        seen.add(id(mdp))
        report = verify_mai(mdp, np.linspace(*subsidy_bracket(mdp), args.grid_points))
        reports.append({"arm": i, **report.to_dict()})
        verdict = "indexable" if report.is_indexable else f"NOT indexable at {report.first_violation}"
        lines.append(f"arm {i}: {verdict} (grid-certified, {len(report.lambda_grid)} points, "
                     f"step {report.grid_step:.4g})")
    formats.atomic_write_text(out / "indexability.json", json.dumps(reports, indent=1) + "\n")
    formats.atomic_write_text(out / "indexability.txt", "\n".join(lines) + "\n")
    if not all(r["is_indexable"] for r in reports):
        raise ValueError("averaged arm fails the indexability check; see indexability.txt")
    table = whittle_table(instance, args.tol_lambda)
    formats.write_csv(out / "oracle_indices.csv", formats.ORACLE_HEADER,
                      formats.table_rows(table, instance.num_states))
    for i in args.dump_averaged or ():
        formats.atomic_write_text(out / f"averaged_arm_{i}.json",
                                  json.dumps(formats.averaged_to_dict(arms[i]), indent=1) + "\n")


def cmd_learn(args):
    instance = _load(args.instance)
    out = Path(args.out)
    oracle = whittle_table(instance)
    _, metrics = run(
        instance, args.iterations, args.seed, StepSchedule(), args.snapshot_every,
        oracle_indices=oracle, oracle_q=fixed_point_tables(instance, oracle),
    )
    formats.write_csv(out / "indices.csv", formats.INDICES_HEADER,
                      formats.index_rows(metrics.snapshot_k, metrics.indices, instance.num_states))
    formats.write_csv(out / "qnorm.csv", formats.QNORM_HEADER,
                      zip(metrics.snapshot_k.tolist(), metrics.q_error.tolist()))


def cmd_evaluate(args):
    instance = _load(args.instance)
    n, s = instance.num_arms, int(instance.num_states.max())
    if args.policy == "random":
        policy = IndexPolicy.random(instance)
    elif args.policy == "oracle":
        policy = IndexPolicy(whittle_table(instance), 0.0 if args.epsilon is None else args.epsilon,
                             instance.budget)
    else:
        if args.indices is None:
            raise ValueError("--indices is required for --policy qwi")
        table = formats.read_index_table(args.indices, n, s)
        policy = IndexPolicy(table, 0.1 if args.epsilon is None else args.epsilon, instance.budget)
    rows = []
    for seed in range(args.seed, args.seed + args.seeds):
        rewards = evaluate_policy(instance, policy, args.horizon, seed).rewards
        rows.extend((seed, t, float(r)) for t, r in enumerate(rewards))
    formats.write_csv(Path(args.out) / "rewards.csv", formats.REWARDS_HEADER, rows)


def cmd_run(args):
    config = ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.output_dir = args.out
    run_experiment(config)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="marble-qwi")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write the default recommender instance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--heterogeneous", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("oracle", help="exact Whittle indices of the averaged arms")
    p.add_argument("--instance", required=True)
    p.add_argument("--seed", type=int, default=0, help="unused; accepted for uniformity")
    p.add_argument("--out", default=".")
    p.add_argument("--tol-lambda", type=float, default=1e-6)
    p.add_argument("--grid-points", type=int, default=101)
    p.add_argument("--dump-averaged", type=int, nargs="*", metavar="ARM")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("learn", help="synchronous QWI")
    p.add_argument("--instance", required=True)
    p.add_argument("--iterations", type=int, default=500_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--snapshot-every", type=int, default=1000)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("evaluate", help="online evaluation of an index policy")
    p.add_argument("--instance", required=True)
    p.add_argument("--policy", choices=("qwi", "oracle", "random"), required=True)
    p.add_argument("--indices")
    p.add_argument("--horizon", type=int, default=10_000)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--seed", type=int, default=0, help="first evaluation seed")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="full pipeline from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - reported as structured error
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(err), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
