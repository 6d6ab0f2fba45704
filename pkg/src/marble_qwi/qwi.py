"""Synchronous two-timescale Q-learning of Whittle indices.

Each arm ``i`` keeps one Q-table per reference state ``z``; table
``q[i, z]`` learns the subsidized problem with subsidy ``indices[i, z]``.
Every iteration updates all ``(i, z, s, a)`` entries from one reward
readout and one next-state draw per ``(i, s, a)``, then nudges each
index by the learned action gap at its own reference state.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .model import MarbleInstance
from .simulator import Simulator, TwinView

log = logging.getLogger(__name__)


class DivergenceError(FloatingPointError):
    def __init__(self, k, arm, z, s, a):
        super().__init__(f"non-finite Q-value at k={k}, arm={arm}, z={z}, s={s}, a={a}")
        self.k, self.arm, self.z, self.s, self.a = k, arm, z, s, a


def _as_output(k, values):
    return float(values) if np.ndim(k) == 0 else values


def alpha_default(k):
    """Fast step ``1 / ceil(k / 10000)``, taken as 1 while the ceiling is 0."""
    if isinstance(k, int):
        return 1.0 / max(1, -(-k // 10000))
    kk = np.asarray(k, dtype=float)
    return _as_output(k, 1.0 / np.maximum(1.0, np.ceil(kk / 10000.0)))


def beta_default(k):
    """Slow step ``1 / (1 + ceil(k ln k / 10000))`` on every tenth k, else 0.

    ``k ln k`` is taken as 0 for k in {0, 1}.
    """
    if isinstance(k, int):
        if k % 10:
            return 0.0
        return 1.0 / (1.0 + math.ceil(k * math.log(k) / 10000.0)) if k > 1 else 1.0
    kk = np.asarray(k, dtype=float)
    klogk = np.where(kk > 1, kk * np.log(np.maximum(kk, 1.0)), 0.0)
    on = np.asarray(k) % 10 == 0
    return _as_output(k, np.where(on, 1.0 / (1.0 + np.ceil(klogk / 10000.0)), 0.0))


def _zero(k):
    return _as_output(k, np.zeros(np.shape(k)))


@dataclass(frozen=True)
class StepSchedule:
    fast: Callable = alpha_default
    slow: Callable = beta_default

    @classmethod
    def frozen_indices(cls, fast: Callable = alpha_default) -> StepSchedule:
        """Slow step identically zero: plain Q-learning at fixed subsidies."""
        return cls(fast, _zero)


@dataclass
class LearnerState:
    q: NDArray[np.float64]  # (N, Z, S, 2)
    indices: NDArray[np.float64]  # (N, Z)
    k: int = 0

    @classmethod
    def zeros(cls, instance: MarbleInstance) -> LearnerState:
        n, s = instance.num_arms, int(instance.num_states.max())
        return cls(np.zeros((n, s, s, 2)), np.zeros((n, s)))

    def action_gaps(self) -> NDArray[np.float64]:
        """``q[i, z, z, 1] - q[i, z, z, 0]`` for every arm and reference state."""
        d = np.arange(self.q.shape[1])
        return self.q[:, d, d, 1] - self.q[:, d, d, 0]


def qwi_sweep(
    state: LearnerState,
    instance: MarbleInstance,
    twin: TwinView,
    schedule: StepSchedule,
) -> LearnerState:
    """One synchronous iteration, updating ``state`` in place.

    All Q-updates read the pre-sweep table; the index update reads the
    post-sweep table.  The latent chain advances once at the end.
    """
    k = state.k
    alpha = schedule.fast(k)
    beta = schedule.slow(k)
    q = state.q
    n, z_count, s_count, _ = q.shape

    rewards = twin.emit_rewards()  # (N, S, 2)
    nxt = twin.sample_next_states()  # (N, S, 2)
    v = np.maximum(q[..., 0], q[..., 1])  # (N, Z, S)
    offsets = (np.arange(n * z_count) * s_count).reshape(n, z_count, 1)
    target = v.reshape(-1).take(offsets + nxt.reshape(n, 1, s_count * 2))
    target = target.reshape(n, z_count, s_count, 2)
    target *= instance.discount
    target += rewards[:, None]
    target[..., 0] += state.indices[:, :, None]
    target *= alpha
    q *= 1.0 - alpha
    q += target
    if not np.isfinite(q.sum()):
        i, z, s, a = (int(x) for x in np.argwhere(~np.isfinite(q))[0])
        raise DivergenceError(k, i, z, s, a)

    if beta:
        gaps = state.action_gaps()
        if instance.stacked.padded:
            gaps[~instance.stacked.state_mask] = 0.0
        state.indices += beta * gaps
        if not np.isfinite(state.indices).all():
            i, z = (int(x) for x in np.argwhere(~np.isfinite(state.indices))[0])
            raise DivergenceError(k, i, z, z, 1)

    twin.advance()
    state.k = k + 1
    return state


@dataclass
class RunMetrics:
    """Series recorded during learning and online evaluation.

    Learning fields are indexed by snapshot; ``rewards`` and
    ``active_counts`` by online step.
    """

    snapshot_k: NDArray[np.int64] = field(default_factory=lambda: np.zeros(0, np.int64))
    indices: NDArray[np.float64] = field(default_factory=lambda: np.zeros((0, 0, 0)))
    index_error: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))
    q_error: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))
    q_sup: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))
    index_sup: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))
    gap_abs: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))
    q_sup_max: float = 0.0
    index_sup_max: float = 0.0
    rewards: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))
    active_counts: NDArray[np.int64] = field(default_factory=lambda: np.zeros(0, np.int64))


def run(
    instance: MarbleInstance,
    iterations: int,
    seed: int,
    schedule: StepSchedule | None = None,
    snapshot_every: int = 1000,
    oracle_indices=None,
    oracle_q=None,
    initial_indices=None,
    tie_arm_streams: bool = False,
) -> tuple[LearnerState, RunMetrics]:
    """Run ``iterations`` sweeps from zero-initialized tables.

    Snapshots are taken whenever ``k`` is a multiple of ``snapshot_every``
    and after the last sweep.  ``oracle_indices`` (shape ``(N, S)``) and
    ``oracle_q`` (shape ``(N, S, S, 2)``) enable the distance series; the
    rest stay NaN without them.
    """
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    if snapshot_every < 1:
        raise ValueError("snapshot_every must be at least 1")
    schedule = schedule or StepSchedule()
    state = LearnerState.zeros(instance)
    if initial_indices is not None:
        state.indices[:] = initial_indices
    twin = Simulator(instance, seed, tie_arm_streams=tie_arm_streams).twin()

    mask = instance.stacked.state_mask
    qmask = np.broadcast_to(mask[:, :, None, None] & mask[:, None, :, None], state.q.shape)
    if instance.stacked.padded:
        def real(x, m):
            return x[m]
    else:
        def real(x, m):
            return x
    rows: dict[str, list] = {name: [] for name in (
        "k", "indices", "index_error", "q_error", "q_sup", "index_sup", "gap_abs")}
    q_sup_max = index_sup_max = 0.0

    for _ in range(iterations):
        qwi_sweep(state, instance, twin, schedule)
        q_sup = float(np.abs(real(state.q, qmask)).max())
        index_sup = float(np.abs(real(state.indices, mask)).max())
        q_sup_max = max(q_sup_max, q_sup)
        index_sup_max = max(index_sup_max, index_sup)
        if state.k % snapshot_every and state.k != iterations:
            continue
        rows["k"].append(state.k)
        rows["indices"].append(state.indices.copy())
        rows["q_sup"].append(q_sup)
        rows["index_sup"].append(index_sup)
        rows["gap_abs"].append(float(np.abs(real(state.action_gaps(), mask)).mean()))
        rows["index_error"].append(
            float(np.abs(real(state.indices - oracle_indices, mask)).max())
            if oracle_indices is not None else np.nan
        )
        rows["q_error"].append(
            float(np.abs(real(state.q - oracle_q, qmask)).max())
            if oracle_q is not None else np.nan
        )
        if state.k % (50 * snapshot_every) == 0:
            log.info("k=%d index_error=%.4g", state.k, rows["index_error"][-1])

    metrics = RunMetrics(
        snapshot_k=np.array(rows["k"], dtype=np.int64),
        indices=np.array(rows["indices"]),
        index_error=np.array(rows["index_error"]),
        q_error=np.array(rows["q_error"]),
        q_sup=np.array(rows["q_sup"]),
        index_sup=np.array(rows["index_sup"]),
        gap_abs=np.array(rows["gap_abs"]),
        q_sup_max=q_sup_max,
        index_sup_max=index_sup_max,
    )
    return state, metrics


@dataclass(frozen=True)
class ScheduleReport:
    horizon: int
    sum_alpha: float
    sum_alpha_sq: float
    sum_beta: float
    sum_beta_sq: float
    ratio_bin_max: NDArray[np.float64]
    flags: tuple[str, ...]


def _evaluate(fn, k):
    out = np.asarray(fn(k), dtype=float)
    if out.shape != k.shape:
        out = np.array([fn(int(j)) for j in k], dtype=float)
    return out


def _decade_growth(x, horizon):
    """Increment of the partial sum over the last decade relative to the one before."""
    c = np.concatenate([[0.0], np.cumsum(x)])
    last = c[horizon] - c[horizon // 10]
    prev = c[horizon // 10] - c[horizon // 100]
    return last / prev if prev > 0 else np.inf


def check_schedule(schedule: StepSchedule, horizon: int, bins: int = 10) -> ScheduleReport:
    """Finite-horizon sanity report for a step-size pair.

    Divergence of a partial sum is judged from its growth: a series whose
    last-decade increment is below half of the previous decade's is taken
    as convergent.  The slow/fast ratio along active slow steps in the last
    decade is split into ``bins`` bins whose maxima must strictly decrease.
    """
    if horizon < 10_000:
        raise ValueError("horizon must be at least 1e4")
    k = np.arange(horizon)
    a, b = _evaluate(schedule.fast, k), _evaluate(schedule.slow, k)
    flags = []
    if np.any(a <= 0) or np.any(a > 1):
        flags.append("alpha_out_of_range")
    if np.any(b < 0) or np.any(b > 1):
        flags.append("beta_out_of_range")
    if np.any(np.diff(a) > 0):
        flags.append("alpha_not_nonincreasing")
    active_b = b[b > 0]
    if np.any(np.diff(active_b) > 0):
        flags.append("beta_not_nonincreasing")

    if _decade_growth(a, horizon) < 0.5:
        flags.append("alpha_sum_converges")
    if _decade_growth(b, horizon) < 0.5:
        flags.append("beta_sum_converges")
    if _decade_growth(a * a, horizon) >= 0.5:
        flags.append("alpha_sq_sum_diverges")
    if _decade_growth(b * b, horizon) >= 0.5:
        flags.append("beta_sq_sum_diverges")

    tail = (k >= horizon // 10) & (b > 0) & (a > 0)
    ratio, where = b[tail] / a[tail], k[tail]
    edges = np.linspace(horizon // 10, horizon, bins + 1)
    bin_max = np.array([
        ratio[(where >= lo) & (where < hi)].max(initial=-np.inf)
        for lo, hi in zip(edges[:-1], edges[1:])
    ])
    if not np.all(np.diff(bin_max) < 0):
        flags.append("ratio_not_decreasing")

    return ScheduleReport(
        horizon=horizon,
        sum_alpha=float(a.sum()),
        sum_alpha_sq=float((a * a).sum()),
        sum_beta=float(b.sum()),
        sum_beta_sq=float((b * b).sum()),
        ratio_bin_max=bin_max,
        flags=tuple(flags),
    )
