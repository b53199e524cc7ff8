"""The LNS environment: state assembly, repair transitions, episode control.

An episode walks a feasible solution through destroy/repair steps.  The
reward of a step is the objective improvement; because repair is
warm-started it is never negative, the episode objective is monotone
non-increasing, and the per-step rewards telescope exactly to the total
improvement.  Episodes stop at a step limit, a wall-clock budget, or both.

Also hosts the non-learned destroy policies used as baselines: uniform
random subsets and cyclic random variable groups.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import IncumbentTracker, IpInstance, Solution
from .errors import ConfigError, ContractError
from .policy import ActionMask, BipartiteState, actor_forward, clip_probs, sample_action, state_from_instance
from .repair import SubIpRequest, initial_solution
from .simplex import condensed_static_features, root_static_features, solve_lp

FEATURE_MODES = ("full", "condensed")
DYNAMIC_WIDTH = 3


@dataclass
class Episode:
    """One LNS run on one instance."""

    instance: IpInstance
    tracker: IncumbentTracker
    current: Solution
    static_features: np.ndarray
    feature_mode: str
    step: int = 0
    step_limit: int | None = None
    wall_budget: float | None = None
    elapsed: float = 0.0
    initial_objective: float = 0.0
    trace: list = field(default_factory=list)

    @property
    def done(self) -> bool:
        if self.step_limit is not None and self.step >= self.step_limit:
            return True
        if self.wall_budget is not None and self.elapsed >= self.wall_budget:
            return True
        return False


def static_features_for(instance: IpInstance, feature_mode: str) -> np.ndarray:
    if feature_mode == "condensed":
        return condensed_static_features(instance)
    if feature_mode == "full":
        return root_static_features(instance, solve_lp(instance))
    raise ConfigError(f"feature mode must be one of {FEATURE_MODES}")


def make_episode(
    instance: IpInstance,
    repair_backend=None,
    step_limit: int | None = None,
    wall_budget: float | None = None,
    feature_mode: str = "full",
    initial_budget: float = 2.0,
    static_features: np.ndarray | None = None,
) -> Episode:
    """Initialize an episode: initial solution plus cached static features."""
    if step_limit is None and wall_budget is None:
        raise ConfigError("an episode needs a step limit, a wall budget, or both")
    start = initial_solution(instance, initial_budget, backend=repair_backend)
    if static_features is None:
        static_features = static_features_for(instance, feature_mode)
    return Episode(
        instance=instance,
        tracker=IncumbentTracker(start),
        current=start.copy(),
        static_features=static_features,
        feature_mode=feature_mode,
        step_limit=step_limit,
        wall_budget=wall_budget,
        initial_objective=start.objective_value,
    )


def build_state(episode: Episode) -> BipartiteState:
    """Static block plus the three dynamic columns.

    Dynamic columns: value in the current solution, value in the incumbent,
    average value over all incumbents.  At step 0 all three coincide with
    the initial solution.
    """
    tr = episode.tracker
    dyn = np.column_stack([
        episode.current.values.astype(np.float64),
        tr.best.values.astype(np.float64),
        tr.average_values,
    ])
    return state_from_instance(
        episode.instance, np.hstack([episode.static_features, dyn])
    )


def env_step(
    episode: Episode,
    action: ActionMask,
    repair_backend,
    step_time_limit: float | None = 2.0,
) -> tuple[float, BipartiteState, bool]:
    """Repair the action's sub-problem and advance the episode one step."""
    if action.selected.size != episode.instance.n_vars:
        raise ContractError("action mask length does not match the instance")
    tl = step_time_limit
    if episode.wall_budget is not None:
        remaining = max(episode.wall_budget - episode.elapsed, 0.0)
        tl = remaining if tl is None else min(tl, remaining)
    request = SubIpRequest(
        episode.instance,
        free_mask=action.selected,
        warm_start=episode.current,
        time_limit=tl,
    )
    t0 = time.perf_counter()
    result = repair_backend(request)
    spent = time.perf_counter() - t0

    reward = episode.current.objective_value - result.solution.objective_value
    episode.current = result.solution
    episode.tracker.record(result.solution)
    episode.step += 1
    episode.elapsed += spent
    episode.trace.append({
        "step": episode.step,
        "action_size": action.size,
        "reward": reward,
        "objective": episode.current.objective_value,
        "elapsed_ms": spent * 1000.0,
        "repair_status": result.status.value,
    })
    # with monotone repair the incumbent is always the current solution
    assert episode.tracker.best.objective_value == episode.current.objective_value
    return reward, build_state(episode), episode.done


class UniformRandomPolicy:
    """Uniform subset size in [1, n-1], then a uniform subset of that size."""

    def start_episode(self, episode: Episode, rng) -> None:
        pass

    def select(self, state: BipartiteState, rng) -> ActionMask:
        n = state.n_vars
        k = int(rng.integers(1, n))
        mask = np.zeros(n, dtype=bool)
        mask[rng.choice(n, size=k, replace=False)] = True
        return ActionMask(mask)


class RandomGroupsPolicy:
    """Disjoint near-equal random groups visited in order, reshuffled per cycle."""

    def __init__(self, groups: int):
        if not 2 <= groups <= 5:
            raise ConfigError("group count must lie in [2, 5]")
        self.groups = groups
        self._chunks: list[np.ndarray] = []
        self._pos = 0
        self._n = 0

    def _reshuffle(self, rng) -> None:
        order = rng.permutation(self._n)
        sizes = np.full(self.groups, self._n // self.groups)
        sizes[: self._n % self.groups] += 1
        self._chunks = list(np.split(order, np.cumsum(sizes)[:-1]))
        self._pos = 0

    def start_episode(self, episode: Episode, rng) -> None:
        self._n = episode.instance.n_vars
        if self._n < 2 or self.groups > self._n:
            raise ConfigError("groups must leave at least one variable per chunk")
        self._reshuffle(rng)

    def select(self, state: BipartiteState, rng) -> ActionMask:
        if self._pos >= len(self._chunks):
            self._reshuffle(rng)
        chunk = self._chunks[self._pos]
        self._pos += 1
        mask = np.zeros(self._n, dtype=bool)
        mask[chunk] = True
        return ActionMask(mask)


class LearnedPolicy:
    """Sample the destroy set from the actor's clipped probabilities."""

    def __init__(self, actor, epsilon: float = 0.2):
        self.actor = actor
        self.epsilon = epsilon

    def start_episode(self, episode: Episode, rng) -> None:
        pass

    def probabilities(self, state: BipartiteState) -> np.ndarray:
        p = actor_forward(self.actor, state).data.ravel()
        return clip_probs(p, self.epsilon)

    def select(self, state: BipartiteState, rng) -> ActionMask:
        return sample_action(self.probabilities(state), rng)


@dataclass
class Transition:
    """SARSA record: the stored next action is the one executed next."""

    state: BipartiteState
    action: ActionMask
    reward: float
    next_state: BipartiteState
    next_action: ActionMask


def rollout(
    episode: Episode,
    policy,
    repair_backend,
    rng,
    step_time_limit: float | None = 2.0,
    collect_transitions: bool = False,
):
    """Run destroy/repair until the episode budget is exhausted.

    Returns ``(final solution, trace, transitions)``; transitions are None
    unless requested.  The action stored as "next" in a transition is the
    action actually executed at the following step.
    """
    policy.start_episode(episode, rng)
    transitions: list[Transition] | None = [] if collect_transitions else None
    if episode.done:
        return episode.current, episode.trace, transitions
    state = build_state(episode)
    mask = policy.select(state, rng)
    while True:
        reward, next_state, done = env_step(episode, mask, repair_backend, step_time_limit)
        next_mask = policy.select(next_state, rng)
        if collect_transitions:
            transitions.append(Transition(state, mask, reward, next_state, next_mask))
        state, mask = next_state, next_mask
        if done:
            break
    return episode.current, episode.trace, transitions
