"""Calibrated simulator with a hidden environment mode.

Random streams
--------------
Every stream is a PCG64 generator seeded from
``SeedSequence(seed, spawn_key=(purpose, arm))``:

* ``(LATENT, 0)``  initial mode and latent-chain steps
* ``(TWIN, i)``    next-state draws for arm ``i`` during learning,
                   ``S_i * 2`` uniforms per call, ordered by state then action
* ``(ONLINE, i)``  arm ``i``'s transitions during online evaluation
* ``(INIT, i)``    arm ``i``'s initial state
* ``(POLICY, 0)``  exploration in online arm selection

A stream depends only on ``(seed, purpose, arm)``, so permuting or
dropping other arms never changes an arm's draws.  With
``tie_arm_streams=True`` every arm uses the ``arm=0`` key, which makes
identical arms evolve identically.
"""

from __future__ import annotations

from bisect import bisect_right

import numpy as np
from numpy.typing import NDArray

from .averaging import averaged_arms
from .model import MarbleInstance

LATENT, TWIN, ONLINE, INIT, POLICY = range(5)


def make_stream(seed: int, purpose: int, arm: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(purpose, arm))))


def _cdf(kernel: NDArray[np.float64], num_states: NDArray[np.int64]) -> NDArray[np.float64]:
    # kernel has states on the last two axes and arms first
    cdf = np.cumsum(kernel, axis=-1)
    for i, s in enumerate(num_states):
        cdf[i, ..., :s, s - 1 :] = 1.0
    return cdf


def _inverse_cdf(u, cdf):
    return np.sum(u[..., None] >= cdf, axis=-1)


class _BufferedStream:
    """Per-arm streams fetched ``chunk`` calls at a time.

    ``transform(i, u)`` maps a block of raw uniforms for arm ``i`` (shape
    ``(chunk,) + shapes[i]``) to the values handed out, so inverse-CDF
    sampling happens once per chunk rather than once per call.
    """

    def __init__(self, gens, shapes, pad_shape, chunk, dtype=float, transform=None):
        self.gens = gens
        self.shapes = shapes
        self.chunk = chunk
        self.transform = transform
        self.buf = np.zeros((len(gens), chunk) + pad_shape, dtype=dtype)
        self.pos = np.full(len(gens), chunk)

    def _refill(self, i):
        u = self.gens[i].random((self.chunk,) + self.shapes[i])
        sl = (i, slice(None)) + tuple(slice(0, n) for n in self.shapes[i])
        self.buf[sl] = u if self.transform is None else self.transform(i, u)
        self.pos[i] = 0

    def take_all(self):
        p = self.pos[0]
        if p < self.chunk and np.all(self.pos == p):
            self.pos += 1
            return self.buf[:, p].copy()
        for i in np.flatnonzero(self.pos == self.chunk):
            self._refill(i)
        out = self.buf[np.arange(len(self.gens)), self.pos]
        self.pos += 1
        return out

    def take(self, i):
        if self.pos[i] == self.chunk:
            self._refill(i)
        out = self.buf[i, self.pos[i]]
        self.pos[i] += 1
        return out


class Simulator:
    """Hidden-mode environment plus its averaged digital twin.

    Holds the latent mode, each arm's online state and the step counter.
    Learners should talk to :meth:`twin`, which never reveals the mode.
    """

    def __init__(
        self,
        instance: MarbleInstance,
        seed: int,
        tie_arm_streams: bool = False,
        initial_states=None,
        chunk: int = 1024,
        initial_mode: int | None = None,
    ):
        self.instance = instance
        self.seed = seed
        n = instance.num_arms
        stacked = instance.stacked
        self._num_states = stacked.num_states
        self._rewards = stacked.rewards
        h_cdf = np.cumsum(instance.chain.transition, axis=1)
        h_cdf[:, -1] = 1.0
        self._h_cdf = h_cdf.tolist()

        # online cdf laid out [arm, mode, a, s, s']
        self._mode_cdf = _cdf(stacked.kernels, self._num_states)

        key = (lambda i: 0) if tie_arm_streams else (lambda i: i)
        self._key = key
        self._chunk = chunk
        self._twin_stream = None
        self._latent = _BufferedStream([make_stream(seed, LATENT)], [()], (), chunk)
        self._online = _BufferedStream(
            [make_stream(seed, ONLINE, key(i)) for i in range(n)], [()] * n, (), chunk
        )
        self.policy_rng = make_stream(seed, POLICY)

        if initial_mode is None:
            mu_cdf = np.cumsum(instance.mu)
            mu_cdf[-1] = 1.0
            self._mode = int(np.searchsorted(mu_cdf, self._latent.take(0), side="right"))
        elif 0 <= initial_mode < instance.chain.num_modes:
            self._mode = int(initial_mode)
        else:
            raise ValueError(f"initial_mode {initial_mode} out of range")
        if initial_states is None:
            initial_states = [
                int(make_stream(seed, INIT, key(i)).integers(self._num_states[i]))
                for i in range(n)
            ]
        self.arm_states = np.array(initial_states, dtype=np.int64)
        self.step = 0

    @property
    def _twin(self) -> _BufferedStream:
        # built on first use so chains without a stationary law can still be stepped
        if self._twin_stream is None:
            n = self.instance.num_arms
            s_max = int(self._num_states.max())
            avg = np.zeros((n, 2, s_max, s_max))
            for i, mdp in enumerate(averaged_arms(self.instance)):
                s = mdp.num_states
                avg[i, :, :s, :s] = mdp.kernel
                for pad in range(s, s_max):
                    avg[i, :, pad, pad] = 1.0
            # laid out [arm, s, a, s'] to match the (s, a) draw order
            cdf = _cdf(avg, self._num_states).transpose(0, 2, 1, 3).copy()
            self._twin_stream = _BufferedStream(
                [make_stream(self.seed, TWIN, self._key(i)) for i in range(n)],
                [(int(s), 2) for s in self._num_states],
                (s_max, 2),
                self._chunk,
                dtype=np.int64,
                transform=lambda i, u: _inverse_cdf(u, cdf[i, : u.shape[1]]),
            )
        return self._twin_stream

    @property
    def latent_mode(self) -> int:
        return self._mode

    def step_latent(self) -> None:
        u = self._latent.take(0)
        self._mode = bisect_right(self._h_cdf[self._mode], u)
        self.step += 1

    def emit_rewards(self, arm: int | None = None) -> NDArray[np.float64]:
        """Current mode's reward table ``[s, a]`` for one arm, or ``[i, s, a]`` for all."""
        if arm is None:
            return self._rewards[:, self._mode]
        return self._rewards[arm, self._mode, : self._num_states[arm]]

    def sample_next_states(self, arm: int | None = None) -> NDArray[np.int64]:
        """One successor per ``(s, a)`` drawn from the averaged kernel."""
        if arm is None:
            return self._twin.take_all()
        return self._twin.take(arm)[: self._num_states[arm]].copy()

    def step_arm_online(self, arm: int, action: int) -> tuple[int, float]:
        """Move one arm with the current mode's kernel and return ``(s', r)``."""
        s = self.arm_states[arm]
        reward = float(self._rewards[arm, self._mode, s, action])
        row = self._mode_cdf[arm, self._mode, action, s]
        nxt = int(np.sum(self._online.take(arm) >= row))
        self.arm_states[arm] = nxt
        return nxt, reward

    def step_arms_online(self, actions) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
        """Vectorized :meth:`step_arm_online` over all arms."""
        actions = np.asarray(actions)
        idx = np.arange(len(actions))
        s = self.arm_states
        rewards = self._rewards[idx, self._mode, s, actions]
        rows = self._mode_cdf[idx, self._mode, actions, s]
        nxt = _inverse_cdf(self._online.take_all(), rows)
        self.arm_states = nxt
        return nxt, rewards

    def twin(self) -> TwinView:
        return TwinView(self)


class TwinView:
    """What a learner may see: reward readouts and averaged-kernel samples."""

    __slots__ = ("_sim",)

    def __init__(self, sim: Simulator):
        self._sim = sim

    @property
    def num_arms(self) -> int:
        return self._sim.instance.num_arms

    def emit_rewards(self, arm: int | None = None) -> NDArray[np.float64]:
        return self._sim.emit_rewards(arm)

    def sample_next_states(self, arm: int | None = None) -> NDArray[np.int64]:
        return self._sim.sample_next_states(arm)

    def advance(self) -> None:
        self._sim.step_latent()
