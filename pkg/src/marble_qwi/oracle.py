"""Exact planning on a single-arm subsidy MDP.

Everything here works on an :class:`AveragedArmMdp`, which may be the
environment-averaged arm or an arm frozen in one mode.  Q-tables are
``(S, 2)`` arrays indexed ``[state, action]``; the subsidy ``lam`` is paid
for the passive action.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .averaging import AveragedArmMdp, averaged_arms
from .model import MarbleInstance

GAP_TIE = 1e-9
DEFAULT_TOL = 1e-10
MAX_SWEEPS = 10_000_000
_PASSIVE_BONUS = np.array([1.0, 0.0])


class ConvergenceError(RuntimeError):
    pass


class NotIndexableAtState(ValueError):
    """The action gap does not change sign across the subsidy bracket."""

    def __init__(self, state, gap_low, gap_high):
        super().__init__(
            f"no sign change of the action gap at state {state}: "
            f"gap(low)={gap_low!r}, gap(high)={gap_high!r}"
        )
        self.state = state
        self.gap_low = gap_low
        self.gap_high = gap_high


@dataclass(frozen=True)
class IndexabilityReport:
    lambda_grid: NDArray[np.float64]
    passive_sets: list[frozenset[int]]
    is_indexable: bool
    first_violation: tuple[int, int] | None

    @property
    def grid_step(self) -> float:
        """Largest gap between grid points; indexability is certified only at this resolution."""
        return float(np.max(np.diff(self.lambda_grid))) if len(self.lambda_grid) > 1 else 0.0

    def to_dict(self) -> dict:
        return {
            "certification": "grid-certified",
            "grid_points": len(self.lambda_grid),
            "grid_low": float(self.lambda_grid[0]),
            "grid_high": float(self.lambda_grid[-1]),
            "grid_step": self.grid_step,
            "is_indexable": self.is_indexable,
            "first_violation": None if self.first_violation is None else list(self.first_violation),
            "passive_sets": [sorted(p) for p in self.passive_sets],
        }


def bellman_backup(q, mdp: AveragedArmMdp, lam: float) -> NDArray[np.float64]:
    """One synchronous application of the subsidized Bellman operator."""
    v = np.max(q, axis=1)
    cont = np.einsum("ast,t->sa", mdp.kernel, v)
    return mdp.reward + lam * _PASSIVE_BONUS + mdp.discount * cont


def _evaluate_policy(mdp, lam, policy):
    s = mdp.num_states
    idx = np.arange(s)
    p_pi = mdp.kernel[policy, idx, :]
    r_pi = mdp.reward[idx, policy] + lam * (policy == 0)
    v = np.linalg.solve(np.eye(s) - mdp.discount * p_pi, r_pi)
    return mdp.reward + lam * _PASSIVE_BONUS + mdp.discount * np.einsum("ast,t->sa", mdp.kernel, v)


def solve_q(mdp: AveragedArmMdp, lam: float, tol: float = DEFAULT_TOL) -> NDArray[np.float64]:
    """Fixed point of :func:`bellman_backup`, to within ``tol`` in sup-norm.

    Policy iteration gets close in a handful of linear solves; value
    iteration then runs until the Bellman residual is at most
    ``tol * (1 - gamma) / (2 * gamma)``, which bounds the distance to the
    true fixed point by ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    gamma = mdp.discount
    target = tol * (1.0 - gamma) / (2.0 * gamma)

    policy = np.argmax(mdp.reward + lam * _PASSIVE_BONUS, axis=1)
    q = None
    for _ in range(4 * mdp.num_states + 10):
        q = _evaluate_policy(mdp, lam, policy)
        # switch only on a strict improvement so ties cannot cycle
        current = q[np.arange(mdp.num_states), policy]
        better = q.max(axis=1) > current + 1e-14 * (1.0 + np.abs(current))
        if not better.any():
            break
        policy = np.where(better, np.argmax(q, axis=1), policy)

    for _ in range(MAX_SWEEPS):
        nxt = bellman_backup(q, mdp, lam)
        if np.max(np.abs(nxt - q)) <= target:
            return nxt
        q = nxt
    raise ConvergenceError(f"value iteration did not reach residual {target:g}")


def action_gap(mdp: AveragedArmMdp, lam: float, z: int, tol: float = DEFAULT_TOL) -> float:
    q = solve_q(mdp, lam, tol)
    return float(q[z, 1] - q[z, 0])


def subsidy_bracket(mdp: AveragedArmMdp) -> tuple[float, float]:
    """Subsidies beyond which every state is active (low) or passive (high)."""
    half = mdp.r_max / (1.0 - mdp.discount) + 1.0
    return -half, half


def whittle_index(
    mdp: AveragedArmMdp,
    z: int,
    tol_lambda: float = 1e-10,
    tol: float = 1e-12,
) -> float:
    """Subsidy at which both actions are equally good in state ``z``.

    Bisection over :func:`subsidy_bracket` on the sign of the action gap.
    Raises :class:`NotIndexableAtState` when the gap does not go from
    positive to non-positive across the bracket.
    """
    lo, hi = subsidy_bracket(mdp)
    g_lo, g_hi = action_gap(mdp, lo, z, tol), action_gap(mdp, hi, z, tol)
    if not (g_lo > 0 >= g_hi):
        raise NotIndexableAtState(z, g_lo, g_hi)
    while hi - lo > tol_lambda:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if action_gap(mdp, mid, z, tol) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def whittle_indices(mdp: AveragedArmMdp, tol_lambda: float = 1e-10) -> NDArray[np.float64]:
    return np.array([whittle_index(mdp, z, tol_lambda) for z in range(mdp.num_states)])


def passive_set(mdp: AveragedArmMdp, lam: float, tol: float = DEFAULT_TOL) -> frozenset[int]:
    """States where passivity is (weakly) optimal; gaps within 1e-9 count as ties."""
    q = solve_q(mdp, lam, tol)
    gap = q[:, 1] - q[:, 0]
    return frozenset(int(z) for z in np.flatnonzero(gap <= GAP_TIE))


def verify_mai(mdp: AveragedArmMdp, grid=None, tol: float = DEFAULT_TOL) -> IndexabilityReport:
    """Check that passive sets grow from empty to all states along ``grid``.

    With no grid, 101 evenly spaced subsidies over :func:`subsidy_bracket`
    are used.
    """
    if grid is None:
        grid = np.linspace(*subsidy_bracket(mdp), 101)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be a strictly ascending 1-d sequence")
    sets = [passive_set(mdp, lam, tol) for lam in grid]
    everything = frozenset(range(mdp.num_states))

    violation = None
    if sets[0]:
        violation = (0, min(sets[0]))
    else:
        for j in range(1, len(sets)):
            dropped = sets[j - 1] - sets[j]
            if dropped:
                violation = (j, min(dropped))
                break
        else:
            if sets[-1] != everything:
                violation = (len(sets) - 1, min(everything - sets[-1]))
    return IndexabilityReport(grid, sets, violation is None, violation)


def whittle_table(instance: MarbleInstance, tol_lambda: float = 1e-10) -> NDArray[np.float64]:
    """Whittle indices of every averaged arm, shape ``(N, S_max)``, zero-padded."""
    arms = averaged_arms(instance)
    table = np.zeros((instance.num_arms, int(instance.num_states.max())))
    done: dict[int, NDArray[np.float64]] = {}
    for i, mdp in enumerate(arms):
        if id(mdp) not in done:
            done[id(mdp)] = whittle_indices(mdp, tol_lambda)
        table[i, : mdp.num_states] = done[id(mdp)]
    return table


def fixed_point_tables(
    instance: MarbleInstance, indices, tol: float = DEFAULT_TOL
) -> NDArray[np.float64]:
    """Fixed points ``Q[i, z]`` at subsidy ``indices[i, z]``, shape ``(N, S, S, 2)``."""
    indices = np.asarray(indices, dtype=float)
    arms = averaged_arms(instance)
    s_max = int(instance.num_states.max())
    out = np.zeros((instance.num_arms, s_max, s_max, 2))
    cache: dict = {}
    for i, mdp in enumerate(arms):
        s = mdp.num_states
        for z in range(s):
            key = (id(mdp), float(indices[i, z]))
            if key not in cache:
                cache[key] = solve_q(mdp, indices[i, z], tol)
            out[i, z, :s, :] = cache[key]
    return out
