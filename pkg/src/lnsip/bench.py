"""Experiment driver: datasets, timed method comparisons, active search.

Results are suite-relative: the per-instance best objective across the
methods actually run defines the reference point of every primal gap.
Each result row carries the configuration hash and the seed that produced
it, so any row can be reproduced bit-for-bit with the internal repair
backend on one thread (modulo wall-clock budgets, which are inherently
timing-dependent).
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass

import numpy as np

from .core import IpInstance, Solution
from .env import (
    LearnedPolicy,
    RandomGroupsPolicy,
    UniformRandomPolicy,
    make_episode,
    rollout,
    static_features_for,
)
from .errors import ConfigError
from .generators import SCALE_PRESETS, GenSpec, child_seed, generate
from .policy import CriticParams, PolicyParams
from .repair import InternalRepair, initial_solution
from .training import TrainConfig, train_iteration
from .autodiff import AdamState

METHODS = ("learned", "u-lns", "r-lns", "ft-lns")

# sized so the internal branch-and-bound makes real progress inside a 2 s
# repair call on one commodity core
DESK_PRESETS = {
    "sc": {"rows": 200, "cols": 100, "density": 0.05},
    "mis": {"nodes": 80, "affinity": 4},
    "ca": {"items": 40, "bids": 90},
    "mc": {"nodes": 30, "attachment": 3},
    "golden": {"n_vars": 20},
}

ACTIVE_SEARCH_PRESET = dict(instances_per_iter=2, updates=10, step_limit=100, batch_size=32)


def primal_gap(candidate_obj: float, best_obj: float) -> float:
    """Suite-relative solution quality gap, in percent.

    ``|c - b| / max(|c|, |b|) * 100`` with two guards: identical values give
    0 even at zero, and exactly one zero value gives 100 (the formula's own
    limit, stated explicitly).
    """
    if candidate_obj == best_obj:
        return 0.0
    denom = max(abs(candidate_obj), abs(best_obj))
    if denom == 0.0:
        return 0.0
    return abs(candidate_obj - best_obj) / denom * 100.0


@dataclass
class ExperimentConfig:
    """One evaluation sweep."""

    family: str = "sc"
    scale: int = 1
    desk: bool = True
    train_count: int = 100
    valid_count: int = 20
    test_count: int = 50
    methods: tuple = ("learned", "u-lns", "r-lns")
    time_limit: float = 30.0
    seed: int = 0
    repair: str = "internal"          # "internal" or an external command template
    repair_node_limit: int | None = None
    feature_mode: str = "full"
    epsilon_clip: float = 0.2
    groups: int = 2                   # random-groups size parameter
    ft_step_limit: int = 20
    step_time_limit: float = 2.0
    initial_budget: float = 2.0
    out_dir: str | None = None

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("method list must be nonempty")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")
        if self.time_limit <= 0:
            raise ConfigError("time limit must be positive")

    def gen_params(self) -> dict:
        if self.desk:
            return dict(DESK_PRESETS[self.family])
        return dict(SCALE_PRESETS[self.family][self.scale])

    def config_hash(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode()).hexdigest()[:12]

    def backend(self):
        from .repair import ExternalRepair

        if self.repair == "internal":
            return InternalRepair(node_limit=self.repair_node_limit)
        return ExternalRepair(self.repair)


def dataset(config: ExperimentConfig, split: str, count: int | None = None) -> list[IpInstance]:
    """Deterministic instance set for one split of the experiment."""
    offsets = {"train": 0, "valid": 1_000_000, "test": 2_000_000}
    counts = {
        "train": config.train_count,
        "valid": config.valid_count,
        "test": config.test_count,
    }
    n = counts[split] if count is None else count
    params = config.gen_params()
    return [
        generate(GenSpec(config.family, params, child_seed(config.seed, offsets[split] + i)))
        for i in range(n)
    ]


def _policy_for(method: str, config: ExperimentConfig, actor=None, ft_actor=None):
    if method == "learned":
        if actor is None:
            raise ConfigError(
                "method 'learned' needs a trained actor checkpoint "
                "(expected at <out_dir>/checkpoints/actor_final.ckpt)"
            )
        return LearnedPolicy(actor, config.epsilon_clip)
    if method == "ft-lns":
        if ft_actor is None:
            raise ConfigError(
                "method 'ft-lns' needs an imitation-trained actor checkpoint "
                "(expected at <out_dir>/checkpoints/ft_actor_final.ckpt)"
            )
        return LearnedPolicy(ft_actor, config.epsilon_clip)
    if method == "u-lns":
        return UniformRandomPolicy()
    if method == "r-lns":
        return RandomGroupsPolicy(config.groups)
    raise ConfigError(f"unknown method {method!r}")


def _run_cell(
    config, method, instance, static, budget, seed, actor, ft_actor, step_limit=None
):
    """One (method, instance) evaluation under a wall-clock budget."""
    rng = np.random.default_rng(seed)
    backend = config.backend()
    policy = _policy_for(method, config, actor, ft_actor)
    ep = make_episode(
        instance,
        repair_backend=backend,
        step_limit=step_limit,
        wall_budget=budget,
        feature_mode=config.feature_mode,
        initial_budget=config.initial_budget,
        static_features=static,
    )
    t0 = time.perf_counter()
    final, trace, _ = rollout(
        ep, policy, backend, rng, step_time_limit=config.step_time_limit
    )
    return {
        "method": method,
        "instance": instance.name,
        "seed": seed,
        "objective": final.objective_value,
        "initial_objective": ep.initial_objective,
        "steps": ep.step,
        "elapsed_s": time.perf_counter() - t0,
        "budget_s": budget,
        "trace": trace,
    }


def _summarize(config, rows):
    by_instance: dict[str, list[dict]] = {}
    for r in rows:
        by_instance.setdefault(r["instance"], []).append(r)
    for cells in by_instance.values():
        best = min(c["objective"] for c in cells)
        for c in cells:
            c["best_objective"] = best
            c["gap_pct"] = primal_gap(c["objective"], best)
    summary = {}
    for method in {r["method"] for r in rows}:
        objs = np.array([r["objective"] for r in rows if r["method"] == method])
        gaps = np.array([r["gap_pct"] for r in rows if r["method"] == method])
        mean = float(objs.mean())
        summary[method] = {
            "mean_objective": mean,
            "std_pct": float(objs.std(ddof=0) / max(abs(mean), 1e-12) * 100.0),
            "mean_gap_pct": float(gaps.mean()),
            "instances": int(objs.size),
        }
    return summary


def _write_results(config, rows, summary, tag):
    if not config.out_dir:
        return
    os.makedirs(config.out_dir, exist_ok=True)
    chash = config.config_hash()
    csv_path = os.path.join(config.out_dir, f"{tag}_results.csv")
    with open(csv_path, "w") as fh:
        fh.write(
            "method,instance,seed,config_hash,objective,best_objective,"
            "gap_pct,steps,elapsed_s,budget_s\n"
        )
        for r in rows:
            fh.write(
                f"{r['method']},{r['instance']},{r['seed']},{chash},"
                f"{r['objective']:.10g},{r['best_objective']:.10g},"
                f"{r['gap_pct']:.10g},{r['steps']},{r['elapsed_s']:.3f},{r['budget_s']:.3f}\n"
            )
    curve_path = os.path.join(config.out_dir, f"{tag}_curves.csv")
    with open(curve_path, "w") as fh:
        fh.write("method,instance,time_s,objective\n")
        for r in rows:
            grid = np.linspace(0.0, r["budget_s"], 21)[1:]
            t, obj = 0.0, r["initial_objective"]
            k = 0
            trace = r["trace"]
            for g in grid:
                while k < len(trace) and t + trace[k]["elapsed_ms"] / 1000.0 <= g:
                    t += trace[k]["elapsed_ms"] / 1000.0
                    obj = trace[k]["objective"]
                    k += 1
                fh.write(f"{r['method']},{r['instance']},{g:.3f},{obj:.10g}\n")
    with open(os.path.join(config.out_dir, f"{tag}_summary.json"), "w") as fh:
        json.dump(
            {"config": asdict(config), "config_hash": chash, "summary": summary},
            fh, indent=2, default=str,
        )


def evaluate_suite(
    config: ExperimentConfig,
    actor: PolicyParams | None = None,
    ft_actor: PolicyParams | None = None,
    instances: list[IpInstance] | None = None,
    tag: str = "eval",
):
    """Run every configured method on the test set under the time budget."""
    instances = instances if instances is not None else dataset(config, "test")
    rows = []
    for i, inst in enumerate(instances):
        static = static_features_for(inst, config.feature_mode)
        # one seed per instance, shared by all methods: paired comparison
        seed = child_seed(config.seed, 7_000_000 + i)
        for method in config.methods:
            rows.append(
                _run_cell(
                    config, method, inst, static, config.time_limit, seed, actor, ft_actor
                )
            )
    summary = _summarize(config, rows)
    _write_results(config, rows, summary, tag)
    return rows, summary


def short_horizon_eval(
    config: ExperimentConfig,
    ft_actor: PolicyParams,
    actor: PolicyParams | None = None,
    instances: list[IpInstance] | None = None,
    tag: str = "short",
):
    """Step-limited imitation runs set the per-instance budget for everyone else.

    The imitation policy runs for exactly its training step count and its
    elapsed wall time becomes the time budget of every other method on that
    instance.
    """
    instances = instances if instances is not None else dataset(config, "test")
    rows = []
    for i, inst in enumerate(instances):
        static = static_features_for(inst, config.feature_mode)
        seed = child_seed(config.seed, 8_000_000 + i)
        ft_row = _run_cell(
            config, "ft-lns", inst, static, budget=None, seed=seed,
            actor=actor, ft_actor=ft_actor, step_limit=config.ft_step_limit,
        )
        budget = max(ft_row["elapsed_s"], 1e-3)
        ft_row["budget_s"] = budget
        rows.append(ft_row)
        for method in (m for m in config.methods if m != "ft-lns"):
            rows.append(
                _run_cell(config, method, inst, static, budget, seed, actor, ft_actor)
            )
    summary = _summarize(config, rows)
    _write_results(config, rows, summary, tag)
    return rows, summary


def active_search(
    instance: IpInstance,
    budget: float,
    feature_mode: str = "condensed",
    step_time_limit: float = 2.0,
    initial_budget: float = 2.0,
    repair_node_limit: int | None = None,
    seed: int = 0,
    log=None,
) -> Solution:
    """Train on a single instance within a wall-clock budget; keep the best.

    Uses the single-instance preset (two episode copies per iteration, ten
    updates on batches of 32).  A budget smaller than one iteration returns
    the initial solution.
    """
    t0 = time.perf_counter()
    config = TrainConfig(
        iterations=1,
        gamma=0.99,
        epsilon_clip=0.2,
        repair_time_limit=step_time_limit,
        repair_node_limit=repair_node_limit,
        initial_budget=initial_budget,
        feature_mode=feature_mode,
        seed=seed,
        **ACTIVE_SEARCH_PRESET,
    )
    backend = config.repair_backend()
    width = static_features_for(instance, feature_mode).shape[1] + 3
    rng = np.random.default_rng(seed)
    actor = PolicyParams(width, rng=np.random.default_rng(seed + 1))
    critic = CriticParams(width, rng=np.random.default_rng(seed + 1))
    actor_opt = AdamState(learning_rate=config.actor_lr)
    critic_opt = AdamState(learning_rate=config.critic_lr)

    best = initial_solution(instance, min(initial_budget, budget), backend=backend)
    best = best.copy()
    static_cache: dict = {}

    def sink(final: Solution):
        nonlocal best
        if final.objective_value < best.objective_value - 1e-9:
            best = final.copy()

    iteration = 0
    while time.perf_counter() - t0 < budget:
        m = train_iteration(
            config, actor, critic, actor_opt, critic_opt, rng,
            instance_source=lambda _rng: instance,
            repair_backend=backend,
            iteration=iteration,
            static_cache=static_cache,
            on_episode_end=sink,
        )
        iteration += 1
        if log:
            log(f"active-search iter {iteration}: best {best.objective_value:.6g}")
    return best
