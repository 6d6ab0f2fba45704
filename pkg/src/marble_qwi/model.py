"""MARBLE instances: arms whose kernels and rewards depend on a hidden Markov mode."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import NDArray

ROW_TOL = 1e-12
PASSIVE, ACTIVE = 0, 1


class InvalidChainError(ValueError):
    """Raised when a latent chain is not irreducible and aperiodic."""


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    where: tuple = ()


@dataclass(frozen=True, eq=False)
class LatentChain:
    """Hidden environment chain with transition matrix ``transition[e, e']``."""

    transition: NDArray[np.float64]

    def __post_init__(self):
        object.__setattr__(self, "transition", _frozen(self.transition))

    @property
    def num_modes(self) -> int:
        return self.transition.shape[0]


@dataclass(frozen=True, eq=False)
class ArmSpec:
    """One arm.

    ``kernels[e, a, s, s']`` is the probability of moving from ``s`` to ``s'``
    under action ``a`` while the environment is in mode ``e``, and
    ``rewards[e, s, a]`` is the matching one-step reward.
    """

    kernels: NDArray[np.float64]
    rewards: NDArray[np.float64]

    def __post_init__(self):
        object.__setattr__(self, "kernels", _frozen(self.kernels))
        object.__setattr__(self, "rewards", _frozen(self.rewards))

    @property
    def num_states(self) -> int:
        return self.rewards.shape[1]

    @property
    def num_modes(self) -> int:
        return self.rewards.shape[0]

    @property
    def r_max(self) -> float:
        return float(np.max(np.abs(self.rewards)))


@dataclass(frozen=True, eq=False)
class MarbleInstance:
    arms: tuple[ArmSpec, ...]
    budget: int
    chain: LatentChain
    discount: float

    def __post_init__(self):
        object.__setattr__(self, "arms", tuple(self.arms))

    @property
    def num_arms(self) -> int:
        return len(self.arms)

    @property
    def r_max(self) -> float:
        return max(arm.r_max for arm in self.arms)

    @property
    def is_homogeneous(self) -> bool:
        return all(arm is self.arms[0] for arm in self.arms)

    @cached_property
    def num_states(self) -> NDArray[np.int64]:
        return np.array([arm.num_states for arm in self.arms], dtype=np.int64)

    @cached_property
    def mu(self) -> NDArray[np.float64]:
        return stationary_distribution(self.chain)

    @cached_property
    def stacked(self) -> StackedArms:
        return StackedArms.from_arms(self.arms)


@dataclass(frozen=True)
class StackedArms:
    """Arms padded to a common state count so sweeps vectorize across arms.

    Padded states are absorbing with zero reward and are unreachable from
    real states, so they never influence real Q-values.
    """

    kernels: NDArray[np.float64]  # (N, E, 2, S, S)
    rewards: NDArray[np.float64]  # (N, E, S, 2)
    num_states: NDArray[np.int64]  # (N,)
    state_mask: NDArray[np.bool_]  # (N, S)

    @property
    def padded(self) -> bool:
        return not bool(self.state_mask.all())

    @classmethod
    def from_arms(cls, arms) -> StackedArms:
        n = len(arms)
        s_max = max(arm.num_states for arm in arms)
        n_modes = arms[0].num_modes
        kernels = np.zeros((n, n_modes, 2, s_max, s_max))
        rewards = np.zeros((n, n_modes, s_max, 2))
        num_states = np.array([arm.num_states for arm in arms], dtype=np.int64)
        for i, arm in enumerate(arms):
            s = arm.num_states
            kernels[i, :, :, :s, :s] = arm.kernels
            rewards[i, :, :s, :] = arm.rewards
            for pad in range(s, s_max):
                kernels[i, :, :, pad, pad] = 1.0
        mask = np.arange(s_max)[None, :] < num_states[:, None]
        return cls(
            _frozen(kernels), _frozen(rewards), _frozen(num_states, np.int64), _frozen(mask, bool)
        )


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


def is_primitive(transition: NDArray[np.float64]) -> bool:
    """True when ``transition**m`` is entrywise positive for ``m = n**2``.

    Positivity of that power is equivalent to irreducible plus aperiodic.
    """
    n = transition.shape[0]
    support = (np.asarray(transition) > 0).astype(np.int64)
    power = np.eye(n, dtype=np.int64)
    for _ in range(max(1, n * n)):
        power = np.minimum(power @ support, 1)
    return bool(np.all(power > 0))


def _check_stochastic(mat, code, label, where, out):
    mat = np.asarray(mat, dtype=float)
    if not np.all(np.isfinite(mat)):
        out.append(Violation(code, f"{label} has non-finite entries", where))
        return
    if np.any(mat < 0) or np.any(mat > 1):
        out.append(Violation(f"{code}.range", f"{label} has entries outside [0, 1]", where))
    sums = mat.sum(axis=-1)
    for idx in zip(*np.nonzero(np.abs(sums - 1.0) > ROW_TOL)):
        idx = tuple(int(i) for i in idx)
        out.append(Violation(
            f"{code}.row_sum",
            f"{label} row {idx} sums to {sums[idx]!r}, not 1",
            where + idx,
        ))


def validate_chain(chain: LatentChain) -> list[Violation]:
    out: list[Violation] = []
    h = np.asarray(chain.transition, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] < 1:
        return [Violation("chain.shape", f"transition must be square, got {h.shape}")]
    _check_stochastic(h, "chain", "latent transition", (), out)
    if not out and not is_primitive(h):
        out.append(Violation(
            "chain.not_ergodic",
            "latent chain is not irreducible and aperiodic",
        ))
    return out


def validate_instance(instance: MarbleInstance) -> list[Violation]:
    """Return every violated invariant; an empty list means the instance is valid."""
    out = validate_chain(instance.chain)
    n = len(instance.arms)
    if not 1 <= instance.budget < n:
        out.append(Violation("budget.range", f"budget {instance.budget} not in [1, {n})"))
    if not 0.0 < instance.discount < 1.0:
        out.append(Violation("discount.range", f"discount {instance.discount} not in (0, 1)"))
    n_modes = np.shape(instance.chain.transition)[0]
    for i, arm in enumerate(instance.arms):
        k, r = arm.kernels, arm.rewards
        if r.ndim != 3 or r.shape[2] != 2 or r.shape[0] != n_modes:
            out.append(Violation(
                "arm.rewards.shape",
                f"arm {i} rewards shape {r.shape}, expected ({n_modes}, S, 2)",
                (i,),
            ))
            continue
        s = r.shape[1]
        if k.shape != (n_modes, 2, s, s):
            out.append(Violation(
                "arm.kernels.shape",
                f"arm {i} kernels shape {k.shape}, expected {(n_modes, 2, s, s)}",
                (i,),
            ))
            continue
        if not np.all(np.isfinite(r)):
            out.append(Violation("arm.rewards.finite", f"arm {i} has non-finite rewards", (i,)))
        _check_stochastic(k, "arm.kernel", f"arm {i} kernel", (i,), out)
    return out


def stationary_distribution(chain: LatentChain) -> NDArray[np.float64]:
    """Unique stationary distribution of an irreducible, aperiodic chain.

    Solved directly and then polished with power iteration until the
    residual ``max|mu H - mu|`` is at most 1e-12.
    """
    problems = validate_chain(chain)
    if problems:
        raise InvalidChainError("; ".join(p.message for p in problems))
    h = chain.transition
    n = h.shape[0]
    a = np.vstack([h.T - np.eye(n), np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    mu, *_ = np.linalg.lstsq(a, b, rcond=None)
    mu = np.clip(mu, 0.0, None)
    mu /= mu.sum()
    for _ in range(1_000_000):
        if np.max(np.abs(mu @ h - mu)) <= 1e-12:
            break
        mu = mu @ h
        mu /= mu.sum()
    else:
        raise RuntimeError("stationary distribution did not reach residual 1e-12")
    return mu
