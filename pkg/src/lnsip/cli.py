"""Command-line driver: dataset generation, training, evaluation, search.

Verbs
-----
gen            write a dataset of MPS files plus a JSON manifest
train          Q-actor-critic training, metrics CSV + checkpoints
eval           timed comparison of methods on a test set
short-eval     step-limited imitation runs set the budget for other methods
active-search  train on one MPS instance within a wall-clock budget
export-mps     write a single generated instance as MPS
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import bench, generators, mps, training
from .core import IpInstance
from .errors import ConfigError, LnsError
from .policy import PolicyParams
from .repair import initial_solution


def _gen_params(args) -> dict:
    if getattr(args, "desk", False):
        return dict(bench.DESK_PRESETS[args.family])
    return dict(generators.SCALE_PRESETS[args.family][args.scale])


def cmd_gen(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    params = _gen_params(args)
    manifest = {
        "family": args.family,
        "params": params,
        "seed": args.seed,
        "count": args.count,
        "instances": [],
    }
    for i in range(args.count):
        seed = generators.child_seed(args.seed, i)
        inst = generators.generate(generators.GenSpec(args.family, params, seed))
        path = os.path.join(args.out, f"{inst.name}.mps")
        mps.write_mps(inst, path)
        manifest["instances"].append(
            {"file": os.path.basename(path), "name": inst.name, "seed": seed,
             "n_vars": inst.n_vars, "n_cons": inst.n_cons}
        )
    with open(os.path.join(args.out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    print(f"wrote {args.count} instances to {args.out}")
    return 0


def cmd_export_mps(args) -> int:
    params = _gen_params(args)
    inst = generators.generate(generators.GenSpec(args.family, params, args.seed))
    mps.write_mps(inst, args.out)
    print(f"wrote {inst.name} ({inst.n_vars} vars, {inst.n_cons} cons) to {args.out}")
    return 0


def _instance_pool(args):
    params = _gen_params(args)
    return [
        generators.generate(
            generators.GenSpec(args.family, params, generators.child_seed(args.seed, i))
        )
        for i in range(args.train_count)
    ]


def cmd_train(args) -> int:
    node_limit = args.node_limit
    time_limit = args.repair_time_limit
    if args.deterministic:
        if node_limit is None:
            node_limit = 400
        time_limit = None
    config = training.TrainConfig(
        iterations=args.iterations,
        instances_per_iter=args.instances_per_iter,
        step_limit=args.step_limit,
        updates=args.updates,
        batch_size=args.batch_size,
        gamma=args.gamma,
        actor_lr=args.actor_lr,
        critic_lr=args.critic_lr,
        epsilon_clip=args.epsilon,
        repair_time_limit=time_limit,
        repair_node_limit=node_limit,
        initial_budget=args.initial_budget,
        feature_mode=args.feature_mode,
        q_baseline=args.q_baseline,
        seed=args.seed,
    )
    pool = _instance_pool(args)
    width = (10 if args.feature_mode == "full" else 1) + 3

    def source(rng):
        return pool[int(rng.integers(len(pool)))]

    os.makedirs(args.out, exist_ok=True)
    ckpt_dir = os.path.join(args.out, "checkpoints")
    os.makedirs(ckpt_dir, exist_ok=True)
    log = None if args.quiet else lambda msg: print(msg, flush=True)
    training.run_training(
        config,
        source,
        feature_width=width,
        metrics_path=os.path.join(args.out, "metrics.csv"),
        checkpoint_dir=ckpt_dir,
        checkpoint_every=args.checkpoint_every,
        timing_in_metrics=not args.deterministic,
        log=log,
    )
    print(f"training artifacts in {args.out}")
    return 0


def _experiment_config(args) -> bench.ExperimentConfig:
    if args.config:
        with open(args.config) as fh:
            payload = json.load(fh)
        payload["methods"] = tuple(payload.get("methods", ("learned", "u-lns", "r-lns")))
        return bench.ExperimentConfig(**payload)
    return bench.ExperimentConfig(
        family=args.family,
        scale=args.scale,
        desk=args.desk,
        test_count=args.test_count,
        methods=tuple(args.methods.split(",")),
        time_limit=args.time_limit,
        seed=args.seed,
        repair=args.repair,
        repair_node_limit=args.node_limit,
        feature_mode=args.feature_mode,
        groups=args.groups,
        ft_step_limit=args.ft_step_limit,
        step_time_limit=args.step_time_limit,
        initial_budget=args.initial_budget,
        out_dir=args.out,
    )


def _load_actor(path, what):
    if path is None:
        return None
    if not os.path.exists(path):
        raise ConfigError(f"missing {what} checkpoint: expected file at {path}")
    return PolicyParams.load(path)


def cmd_eval(args) -> int:
    config = _experiment_config(args)
    actor = _load_actor(args.actor, "actor")
    ft_actor = _load_actor(args.ft_actor, "imitation actor")
    _, summary = bench.evaluate_suite(config, actor=actor, ft_actor=ft_actor)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_short_eval(args) -> int:
    config = _experiment_config(args)
    actor = _load_actor(args.actor, "actor")
    ft_actor = _load_actor(args.ft_actor, "imitation actor")
    if ft_actor is None:
        raise ConfigError("short-eval requires --ft-actor")
    _, summary = bench.short_horizon_eval(config, ft_actor, actor=actor)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_active_search(args) -> int:
    instance, fixings = mps.read_mps(args.mps)
    if fixings:
        raise ConfigError("active search expects an unfixed instance file")
    best = bench.active_search(
        instance,
        budget=args.budget,
        feature_mode=args.feature_mode,
        step_time_limit=args.step_time_limit,
        initial_budget=args.initial_budget,
        repair_node_limit=args.node_limit,
        seed=args.seed,
        log=None if args.quiet else lambda msg: print(msg, flush=True),
    )
    if args.out:
        mps.write_solution(args.out, best)
    print(f"best objective {best.objective_value:.10g}")
    return 0


def _add_family_args(p, scale=True):
    p.add_argument("--family", required=True,
                   choices=list(generators.FAMILIES) + ["golden"])
    if scale:
        p.add_argument("--scale", type=int, default=1, choices=(1, 2, 4))
    p.add_argument("--desk", action="store_true",
                   help="use the reduced desk-scale size preset")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lnsip",
        description="Learned large neighborhood search for binary integer programs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate an MPS dataset with a manifest")
    _add_family_args(p)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("export-mps", help="write one generated instance as MPS")
    _add_family_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_export_mps)

    p = sub.add_parser("train", help="train the destroy policy")
    _add_family_args(p)
    p.add_argument("--train-count", type=int, default=100)
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--instances-per-iter", "-M", type=int, default=10)
    p.add_argument("--step-limit", "-T", type=int, default=50)
    p.add_argument("--updates", "-U", type=int, default=4)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--actor-lr", type=float, default=1e-4)
    p.add_argument("--critic-lr", type=float, default=1e-4)
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--repair-time-limit", type=float, default=2.0)
    p.add_argument("--node-limit", type=int, default=None)
    p.add_argument("--initial-budget", type=float, default=2.0)
    p.add_argument("--feature-mode", choices=("full", "condensed"), default="full")
    p.add_argument("--q-baseline", action="store_true",
                   help="subtract the batch-mean Q in the actor update")
    p.add_argument("--deterministic", action="store_true",
                   help="node-limited repair and zeroed wall time for "
                        "bit-reproducible metrics")
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    for name, fn in (("eval", cmd_eval), ("short-eval", cmd_short_eval)):
        p = sub.add_parser(name, help=f"{name} against baselines")
        p.add_argument("--config", default=None, help="JSON ExperimentConfig file")
        _add_family_args(p)
        p.add_argument("--test-count", type=int, default=50)
        p.add_argument("--methods", default="learned,u-lns,r-lns")
        p.add_argument("--time-limit", type=float, default=30.0)
        p.add_argument("--repair", default="internal")
        p.add_argument("--node-limit", type=int, default=None)
        p.add_argument("--feature-mode", choices=("full", "condensed"), default="full")
        p.add_argument("--groups", type=int, default=2)
        p.add_argument("--ft-step-limit", type=int, default=20)
        p.add_argument("--step-time-limit", type=float, default=2.0)
        p.add_argument("--initial-budget", type=float, default=2.0)
        p.add_argument("--actor", default=None)
        p.add_argument("--ft-actor", default=None)
        p.add_argument("--out", default=None)
        p.set_defaults(fn=fn)

    p = sub.add_parser("active-search", help="optimize one MPS instance")
    p.add_argument("--mps", required=True)
    p.add_argument("--budget", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--feature-mode", choices=("full", "condensed"), default="condensed")
    p.add_argument("--step-time-limit", type=float, default=2.0)
    p.add_argument("--initial-budget", type=float, default=2.0)
    p.add_argument("--node-limit", type=int, default=None)
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--out", default=None, help="solution file destination")
    p.set_defaults(fn=cmd_active_search)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except LnsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
