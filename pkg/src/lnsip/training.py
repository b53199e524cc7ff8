"""Training: Q-actor-critic on collected transitions, plus imitation.

Each iteration rolls out the current policy on a fresh batch of instances,
stores the SARSA transitions in a replay buffer that lives for exactly one
iteration, then runs a number of update passes.  The critic regresses on
the one-step TD target (no gradient flows through the bootstrap term); the
actor ascends  Q(s,a) * sum_i log pi(a_i | s)  with Q held constant.

The imitation trainer ("forward training") collects random-groups
demonstrations, keeps the best run per instance, and fits the actor's
per-variable probabilities to the demonstrated masks step by step on the
states the partially trained policy itself visits.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass

import numpy as np

from .autodiff import AdamState, Tape, Tensor, adam_step, backward, clip_grad_norm, zero_grads
from .env import (
    LearnedPolicy,
    RandomGroupsPolicy,
    Transition,
    build_state,
    env_step,
    make_episode,
    rollout,
    static_features_for,
)
from .errors import ConfigError, TrainingError
from .policy import CriticParams, PolicyParams, actor_forward, clip_probs, critic_forward, log_prob
from .repair import InternalRepair


@dataclass
class TrainConfig:
    """Hyperparameters of one training run."""

    iterations: int = 200
    instances_per_iter: int = 10        # M
    step_limit: int = 50                # T
    updates: int = 4                    # U
    batch_size: int | None = None       # B; None means partition T*M/U
    gamma: float = 0.99
    actor_lr: float = 1e-4
    critic_lr: float = 1e-4
    epsilon_clip: float = 0.2
    repair_time_limit: float | None = 2.0
    repair_node_limit: int | None = None
    initial_budget: float = 2.0
    feature_mode: str = "full"
    q_baseline: bool = False
    critic_warmup_iters: int = 0    # iterations with critic-only updates
    grad_clip: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0 or self.instances_per_iter <= 0 or self.updates <= 0:
            raise ConfigError("iteration, instance, and update counts must be positive")
        if self.step_limit <= 0:
            raise ConfigError("step limit must be positive")
        if self.batch_size is None and (self.step_limit * self.instances_per_iter) % self.updates:
            raise ConfigError("updates must divide T*M when no explicit batch size is given")

    def repair_backend(self) -> InternalRepair:
        return InternalRepair(node_limit=self.repair_node_limit)


class ReplayBuffer:
    """Per-iteration transition store with capacity T*M."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.transitions: list[Transition] = []

    def __len__(self):
        return len(self.transitions)

    def extend(self, transitions) -> None:
        self.transitions.extend(transitions)
        if len(self.transitions) > self.capacity:
            raise ConfigError("replay buffer exceeded its per-iteration capacity")

    def clear(self) -> None:
        self.transitions.clear()

    def batches(self, rng, updates: int, batch_size: int | None):
        """U batches: a disjoint partition by default, independent
        without-replacement draws when an explicit batch size is set."""
        n = len(self.transitions)
        if n == 0:
            return
        if batch_size is None:
            order = rng.permutation(n)
            for part in np.array_split(order, updates):
                if part.size:
                    yield [self.transitions[i] for i in part]
        else:
            size = min(batch_size, n)
            for _ in range(updates):
                idx = rng.choice(n, size=size, replace=False)
                yield [self.transitions[i] for i in idx]


def critic_loss(batch, critic: CriticParams, gamma: float, tape: Tape) -> Tensor:
    """Mean squared one-step TD error; the bootstrap target is a constant."""
    if not batch:
        raise ConfigError("empty batch")
    total = None
    for tr in batch:
        q_next = critic_forward(critic, tr.next_state, tr.next_action).item()
        target = gamma * q_next + tr.reward
        q = critic_forward(critic, tr.state, tr.action, tape)
        diff = tape.sub(Tensor([[target]]), q)
        sq = tape.square(diff)
        total = sq if total is None else tape.add(total, sq)
    return tape.scalar_mul(total, 1.0 / len(batch))


def actor_loss(
    batch,
    actor: PolicyParams,
    critic: CriticParams,
    tape: Tape,
    epsilon: float = 0.2,
    q_baseline: bool = False,
) -> Tensor:
    """Mean of Q(s,a) * sum_i log pi(a_i | s); ascend this (negate to minimize).

    Q values come from the current critic and are treated as constants.
    With ``q_baseline`` the batch-mean Q is subtracted before weighting,
    which removes the common offset of all-positive returns.
    """
    if not batch:
        raise ConfigError("empty batch")
    qs = [critic_forward(critic, tr.state, tr.action).item() for tr in batch]
    qbar = float(np.mean(qs)) if q_baseline else 0.0
    total = None
    for tr, q in zip(batch, qs):
        probs = clip_probs(actor_forward(actor, tr.state, tape), epsilon, tape)
        lp = log_prob(probs, tr.action, tape)
        term = tape.scalar_mul(lp, q - qbar)
        total = term if total is None else tape.add(total, term)
    return tape.scalar_mul(total, 1.0 / len(batch))


@dataclass
class IterationMetrics:
    iteration: int
    mean_return: float
    mean_final_obj: float
    actor_loss: float
    critic_loss: float
    wall_s: float


def train_iteration(
    config: TrainConfig,
    actor: PolicyParams,
    critic: CriticParams,
    actor_opt: AdamState,
    critic_opt: AdamState,
    rng,
    instance_source,
    repair_backend=None,
    iteration: int = 0,
    static_cache: dict | None = None,
    on_episode_end=None,
) -> IterationMetrics:
    """Collect M episodes of T steps, then run U update passes.

    ``instance_source(rng)`` supplies the training instances;
    ``on_episode_end(final_solution)`` observes every episode result.
    Raises TrainingError with a batch dump if a loss goes non-finite.
    """
    backend = repair_backend or config.repair_backend()
    t0 = time.perf_counter()
    buffer = ReplayBuffer(config.step_limit * config.instances_per_iter)
    returns, final_objs = [], []
    policy = LearnedPolicy(actor, config.epsilon_clip)
    for _ in range(config.instances_per_iter):
        inst = instance_source(rng)
        static = None
        if static_cache is not None:
            if inst.name not in static_cache:
                static_cache[inst.name] = static_features_for(inst, config.feature_mode)
            static = static_cache[inst.name]
        ep = make_episode(
            inst,
            repair_backend=backend,
            step_limit=config.step_limit,
            feature_mode=config.feature_mode,
            initial_budget=config.initial_budget,
            static_features=static,
        )
        final, _, transitions = rollout(
            ep, policy, backend, rng,
            step_time_limit=config.repair_time_limit,
            collect_transitions=True,
        )
        buffer.extend(transitions)
        returns.append(ep.initial_objective - final.objective_value)
        final_objs.append(final.objective_value)
        if on_episode_end is not None:
            on_episode_end(final)

    update_actor = iteration >= config.critic_warmup_iters
    a_losses, c_losses = [], []
    for batch in buffer.batches(rng, config.updates, config.batch_size):
        tape = Tape()
        c_loss = critic_loss(batch, critic, config.gamma, tape)
        if not np.isfinite(c_loss.item()):
            raise TrainingError(_dump_batch("critic loss is not finite", batch))
        backward(tape, c_loss)
        clip_grad_norm(critic.params, config.grad_clip)
        adam_step(critic_opt, critic.params)
        zero_grads(critic.params)
        c_losses.append(c_loss.item())

        if not update_actor:
            continue
        tape = Tape()
        a_obj = actor_loss(batch, actor, critic, tape, config.epsilon_clip, config.q_baseline)
        if not np.isfinite(a_obj.item()):
            raise TrainingError(_dump_batch("actor objective is not finite", batch))
        neg = tape.scalar_mul(a_obj, -1.0)  # ascend the objective
        backward(tape, neg)
        clip_grad_norm(actor.params, config.grad_clip)
        adam_step(actor_opt, actor.params)
        zero_grads(actor.params)
        a_losses.append(a_obj.item())
    buffer.clear()

    return IterationMetrics(
        iteration=iteration,
        mean_return=float(np.mean(returns)),
        mean_final_obj=float(np.mean(final_objs)),
        actor_loss=float(np.mean(a_losses)) if a_losses else 0.0,
        critic_loss=float(np.mean(c_losses)) if c_losses else 0.0,
        wall_s=time.perf_counter() - t0,
    )


def _dump_batch(reason, batch) -> str:
    rewards = [tr.reward for tr in batch]
    sizes = [tr.action.size for tr in batch]
    return (
        f"{reason}; batch of {len(batch)} transitions, "
        f"rewards [{min(rewards):.4g}, {max(rewards):.4g}], "
        f"action sizes [{min(sizes)}, {max(sizes)}]"
    )


METRICS_FIELDS = ["iter", "mean_return", "mean_final_obj", "actor_loss", "critic_loss", "wall_s"]


def write_metrics_csv(path, rows: list[IterationMetrics], timing: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_FIELDS)
        for r in rows:
            writer.writerow([
                r.iteration,
                "%.12g" % r.mean_return,
                "%.12g" % r.mean_final_obj,
                "%.12g" % r.actor_loss,
                "%.12g" % r.critic_loss,
                "%.12g" % (r.wall_s if timing else 0.0),
            ])


def run_training(
    config: TrainConfig,
    instance_source,
    feature_width: int,
    metrics_path=None,
    checkpoint_dir=None,
    checkpoint_every: int = 0,
    timing_in_metrics: bool = True,
    log=None,
) -> tuple[PolicyParams, CriticParams, list[IterationMetrics]]:
    """Full training run; returns the nets plus per-iteration metrics."""
    rng = np.random.default_rng(config.seed)
    init_rng = np.random.default_rng(config.seed + 1)
    actor = PolicyParams(feature_width, rng=init_rng)
    critic = CriticParams(feature_width, rng=init_rng)
    actor_opt = AdamState(learning_rate=config.actor_lr)
    critic_opt = AdamState(learning_rate=config.critic_lr)
    backend = config.repair_backend()
    metrics: list[IterationMetrics] = []
    static_cache: dict = {}
    for j in range(config.iterations):
        m = train_iteration(
            config, actor, critic, actor_opt, critic_opt, rng,
            instance_source, backend, iteration=j, static_cache=static_cache,
        )
        metrics.append(m)
        if log:
            log(
                f"iter {j}: return {m.mean_return:.3f} final {m.mean_final_obj:.3f} "
                f"critic {m.critic_loss:.3f} ({m.wall_s:.1f}s)"
            )
        if checkpoint_dir and checkpoint_every and (j + 1) % checkpoint_every == 0:
            actor.save(os.path.join(checkpoint_dir, f"actor_{j + 1:04d}.ckpt"))
            critic.save(os.path.join(checkpoint_dir, f"critic_{j + 1:04d}.ckpt"))
    if metrics_path:
        write_metrics_csv(metrics_path, metrics, timing=timing_in_metrics)
    if checkpoint_dir:
        actor.save(os.path.join(checkpoint_dir, "actor_final.ckpt"))
        critic.save(os.path.join(checkpoint_dir, "critic_final.ckpt"))
    return actor, critic, metrics


# -- imitation (forward training) -----------------------------------------


def collect_demos(
    instances,
    groups: int,
    step_limit: int,
    repair_backend,
    rng,
    demos_per_instance: int = 10,
    step_time_limit: float | None = 2.0,
    feature_mode: str = "condensed",
    initial_budget: float = 2.0,
) -> list[list]:
    """Best-of-k random-groups demonstrations, one mask list per instance."""
    demos = []
    for inst in instances:
        static = static_features_for(inst, feature_mode)
        best_masks, best_obj = None, np.inf
        for _ in range(demos_per_instance):
            ep = make_episode(
                inst, repair_backend=repair_backend, step_limit=step_limit,
                feature_mode=feature_mode, initial_budget=initial_budget,
                static_features=static,
            )
            final, _, transitions = rollout(
                ep, RandomGroupsPolicy(groups), repair_backend, rng,
                step_time_limit=step_time_limit, collect_transitions=True,
            )
            if final.objective_value < best_obj:
                best_obj = final.objective_value
                best_masks = [tr.action for tr in transitions]
        demos.append(best_masks)
    return demos


def bce_update(actor, opt, state, target_mask, epsilon: float, grad_clip: float) -> float:
    """One gradient step of per-variable binary cross-entropy on clipped probs."""
    tape = Tape()
    probs = clip_probs(actor_forward(actor, state, tape), epsilon, tape)
    n = state.n_vars
    loss = tape.scalar_mul(log_prob(probs, target_mask, tape), -1.0 / n)
    backward(tape, loss)
    clip_grad_norm(actor.params, grad_clip)
    adam_step(opt, actor.params)
    zero_grads(actor.params)
    return loss.item()


def imitation_fit(
    actor: PolicyParams,
    dataset,
    epochs: int,
    lr: float = 1e-3,
    epsilon: float = 0.2,
    grad_clip: float = 10.0,
    optimizer: str = "adam",
) -> list[float]:
    """Full-batch fit of the actor to frozen (state, mask) pairs.

    Returns the per-epoch mean binary cross-entropy.  ``optimizer`` is
    "adam" or "gd"; plain gradient descent descends monotonically on the
    frozen set at small steps, which makes the fit easy to audit.
    """
    if optimizer not in ("adam", "gd"):
        raise ConfigError("optimizer must be 'adam' or 'gd'")
    opt = AdamState(learning_rate=lr) if optimizer == "adam" else None
    history = []
    for _ in range(epochs):
        tape = Tape()
        total = None
        for state, mask in dataset:
            probs = clip_probs(actor_forward(actor, state, tape), epsilon, tape)
            term = tape.scalar_mul(log_prob(probs, mask, tape), -1.0 / state.n_vars)
            total = term if total is None else tape.add(total, term)
        loss = tape.scalar_mul(total, 1.0 / len(dataset))
        backward(tape, loss)
        if optimizer == "adam":
            clip_grad_norm(actor.params, grad_clip)
            adam_step(opt, actor.params)
        else:
            for p in actor.params.values():
                if p.grad is not None:
                    p.data -= lr * p.grad
        zero_grads(actor.params)
        history.append(loss.item())
    return history


def ft_lns_train(
    instances,
    feature_width: int,
    groups: int = 2,
    step_limit: int = 20,
    demos_per_instance: int = 10,
    epochs: int = 5,
    lr: float = 1e-3,
    epsilon: float = 0.2,
    repair_backend=None,
    step_time_limit: float | None = 2.0,
    feature_mode: str = "condensed",
    initial_budget: float = 2.0,
    seed: int = 0,
    grad_clip: float = 10.0,
) -> PolicyParams:
    """Forward-training imitation of the best random-groups demonstrations.

    At step t of an epoch pass, the episode state was reached by executing
    the partially trained policy for steps < t, and the step-t label is the
    best demo's step-t mask.  A single shared policy serves all steps.
    """
    rng = np.random.default_rng(seed)
    backend = repair_backend or InternalRepair()
    actor = PolicyParams(feature_width, rng=np.random.default_rng(seed + 1))
    opt = AdamState(learning_rate=lr)
    demos = collect_demos(
        instances, groups, step_limit, backend, rng,
        demos_per_instance=demos_per_instance,
        step_time_limit=step_time_limit,
        feature_mode=feature_mode, initial_budget=initial_budget,
    )
    statics = {inst.name: static_features_for(inst, feature_mode) for inst in instances}
    policy = LearnedPolicy(actor, epsilon)
    for _ in range(epochs):
        for inst, masks in zip(instances, demos):
            ep = make_episode(
                inst, repair_backend=backend, step_limit=step_limit,
                feature_mode=feature_mode, initial_budget=initial_budget,
                static_features=statics[inst.name],
            )
            for t in range(step_limit):
                state = build_state(ep)
                bce_update(actor, opt, state, masks[t], epsilon, grad_clip)
                action = policy.select(state, rng)
                _, _, done = env_step(ep, action, backend, step_time_limit)
                if done:
                    break
    return actor
