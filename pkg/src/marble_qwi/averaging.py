"""Environment-averaged single-arm MDP."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .model import ArmSpec, MarbleInstance, _frozen


@dataclass(frozen=True, eq=False)
class AveragedArmMdp:
    """Single-arm MDP with ``kernel[a, s, s']`` and ``reward[s, a]``."""

    kernel: NDArray[np.float64]
    reward: NDArray[np.float64]
    discount: float

    def __post_init__(self):
        object.__setattr__(self, "kernel", _frozen(self.kernel))
        object.__setattr__(self, "reward", _frozen(self.reward))

    @property
    def num_states(self) -> int:
        return self.reward.shape[0]

    @property
    def r_max(self) -> float:
        return float(np.max(np.abs(self.reward)))


def average_arm(arm: ArmSpec, mu, gamma: float) -> AveragedArmMdp:
    """Weight each mode's kernel and reward by ``mu`` and sum.

    Modes are accumulated in ascending order so the result is bit-stable.
    """
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1 or mu.shape[0] != arm.num_modes:
        raise ValueError(f"mu has shape {mu.shape}, arm has {arm.num_modes} modes")
    kernel = np.zeros(arm.kernels.shape[1:])
    reward = np.zeros(arm.rewards.shape[1:])
    for e in range(arm.num_modes):
        kernel += mu[e] * arm.kernels[e]
        reward += mu[e] * arm.rewards[e]
    return AveragedArmMdp(kernel, reward, gamma)


def fixed_mode_mdp(arm: ArmSpec, mode: int, gamma: float) -> AveragedArmMdp:
    """The arm frozen in one latent mode, for per-mode diagnostics."""
    return AveragedArmMdp(arm.kernels[mode], arm.rewards[mode], gamma)


def averaged_arms(instance: MarbleInstance) -> list[AveragedArmMdp]:
    """One averaged MDP per arm; arms sharing an ``ArmSpec`` share the result."""
    cache = instance.__dict__.setdefault("_averaged", {})
    out = []
    for arm in instance.arms:
        key = id(arm)
        if key not in cache:
            cache[key] = average_arm(arm, instance.mu, instance.discount)
        out.append(cache[key])
    return out
