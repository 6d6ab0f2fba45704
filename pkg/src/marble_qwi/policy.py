"""Budgeted arm selection and online evaluation on the true hidden-mode system."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .model import MarbleInstance
from .qwi import RunMetrics
from .simulator import Simulator


@dataclass(frozen=True)
class IndexPolicy:
    """Activate the ``budget`` arms whose current-state index is largest.

    With probability ``epsilon`` a uniformly random ``budget``-subset is
    activated instead.  Ties go to the lowest arm index.
    """

    index_table: NDArray[np.float64]  # (N, S)
    epsilon: float
    budget: int

    def __post_init__(self):
        table = np.array(self.index_table, dtype=float)
        table.setflags(write=False)
        object.__setattr__(self, "index_table", table)
        if not np.all(np.isfinite(table)):
            raise ValueError("index table has non-finite entries")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon {self.epsilon} not in [0, 1]")
        if not 1 <= self.budget < table.shape[0]:
            raise ValueError(f"budget {self.budget} not in [1, {table.shape[0]})")

    @classmethod
    def random(cls, instance: MarbleInstance) -> IndexPolicy:
        s = int(instance.num_states.max())
        return cls(np.zeros((instance.num_arms, s)), 1.0, instance.budget)


def select_actions(policy: IndexPolicy, arm_states, rng: np.random.Generator) -> NDArray[np.int64]:
    n = policy.index_table.shape[0]
    actions = np.zeros(n, dtype=np.int64)
    eps = policy.epsilon
    if eps >= 1.0 or (eps > 0.0 and rng.random() < eps):
        chosen = rng.choice(n, policy.budget, replace=False)
    else:
        values = policy.index_table[np.arange(n), np.asarray(arm_states)]
        chosen = np.argsort(-values, kind="stable")[: policy.budget]
    actions[chosen] = 1
    return actions


def evaluate_policy(
    instance: MarbleInstance, policy: IndexPolicy, horizon: int, seed: int
) -> RunMetrics:
    """Simulate ``horizon`` steps and record the per-step mean reward over arms."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    sim = Simulator(instance, seed)
    rewards = np.empty(horizon)
    counts = np.empty(horizon, dtype=np.int64)
    for t in range(horizon):
        actions = select_actions(policy, sim.arm_states, sim.policy_rng)
        counts[t] = actions.sum()
        _, r = sim.step_arms_online(actions)
        rewards[t] = r.mean()
        sim.step_latent()
    return RunMetrics(rewards=rewards, active_counts=counts)
