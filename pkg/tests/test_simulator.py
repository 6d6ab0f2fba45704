import numpy as np
import pytest

from conftest import constant_arm, random_kernel, small_instance
from marble_qwi.averaging import averaged_arms
from marble_qwi.model import ArmSpec, LatentChain, MarbleInstance
from marble_qwi.simulator import TWIN, Simulator, TwinView, make_stream


def _instance(arms, transition, budget=1):
    return MarbleInstance(arms, budget, LatentChain(transition), 0.8)


def _modes(sim, steps):
    out = np.empty(steps, dtype=int)
    for t in range(steps):
        out[t] = sim.latent_mode
        sim.step_latent()
    return out


def test_degenerate_row_keeps_mode():
    arm = constant_arm(2, [0.0, 0.0])
    sim = Simulator(_instance([arm, arm], [[1.0, 0.0], [0.5, 0.5]]), 0, initial_mode=0)
    assert np.all(_modes(sim, 1000) == 0)
    assert sim.step == 1000


def test_permutation_chain_alternates():
    arm = constant_arm(2, [0.0, 0.0])
    sim = Simulator(_instance([arm, arm], [[0.0, 1.0], [1.0, 0.0]]), 3, initial_mode=1)
    np.testing.assert_array_equal(_modes(sim, 10), [1, 0] * 5)


def test_initial_mode_range():
    arm = constant_arm(2, [0.0, 0.0])
    with pytest.raises(ValueError):
        Simulator(_instance([arm, arm], [[0.5, 0.5], [0.5, 0.5]]), 0, initial_mode=2)


def test_latent_frequencies_match_stationary():
    arm = constant_arm(2, [0.0, 0.0])
    inst = _instance([arm, arm], [[0.9, 0.1], [0.1, 0.9]])
    freq = np.bincount(_modes(Simulator(inst, 1), 1_000_000), minlength=2) / 1e6
    np.testing.assert_allclose(freq, inst.mu, atol=0.01)


@pytest.mark.parametrize("mode, value", [(0, 1.0), (1, 3.0)])
def test_emit_rewards_constant_slices(mode, value):
    arm = constant_arm(4, [1.0, 3.0])
    sim = Simulator(_instance([arm, arm], [[0.5, 0.5], [0.5, 0.5]]), 0, initial_mode=mode)
    np.testing.assert_array_equal(sim.emit_rewards(0), np.full((4, 2), value))
    np.testing.assert_array_equal(sim.emit_rewards(), np.full((2, 4, 2), value))


def test_emitted_rewards_average_to_averaged_reward():
    inst = small_instance(num_arms=2, budget=1, num_states=4)
    sim = Simulator(inst, 2)
    total = np.zeros((4, 2))
    steps = 200_000
    for _ in range(steps):
        total += sim.emit_rewards(1)
        sim.step_latent()
    np.testing.assert_allclose(total / steps, averaged_arms(inst)[1].reward, atol=0.01)


def _deterministic_arm(successor, num_states=4, modes=2):
    k = np.zeros((modes, 2, num_states, num_states))
    k[..., successor] = 1.0
    return ArmSpec(k, np.zeros((modes, num_states, 2)))


def test_point_mass_successor():
    arm = _deterministic_arm(2)
    sim = Simulator(_instance([arm, arm], [[0.7, 0.3], [0.3, 0.7]]), 0)
    for _ in range(50):
        assert np.all(sim.sample_next_states() == 2)
        assert np.all(sim.sample_next_states(1) == 2)
        sim.step_latent()


def test_uniform_row_frequencies():
    k = np.full((2, 2, 4, 4), 0.25)
    arm = ArmSpec(k, np.zeros((2, 4, 2)))
    sim = Simulator(_instance([arm, arm], [[0.7, 0.3], [0.3, 0.7]]), 4)
    draws = np.array([sim.sample_next_states(0) for _ in range(100_000)])
    for s in range(4):
        for a in range(2):
            freq = np.bincount(draws[:, s, a], minlength=4) / len(draws)
            np.testing.assert_allclose(freq, 0.25, atol=0.01)


def test_sample_tables_are_reproducible():
    inst = small_instance()
    a, b = Simulator(inst, 9), Simulator(inst, 9)
    for _ in range(2000):
        np.testing.assert_array_equal(a.sample_next_states(), b.sample_next_states())
        a.step_latent()
        b.step_latent()


def test_draw_order_is_state_then_action():
    inst = small_instance(num_arms=3, budget=1, num_states=3)
    sim = Simulator(inst, 5)
    kernel = averaged_arms(inst)[1].kernel
    u = make_stream(5, TWIN, 1).random((3, 3, 2))
    for t in range(3):
        expected = np.array([
            [np.searchsorted(np.cumsum(kernel[a, s]), u[t, s, a], side="right") for a in range(2)]
            for s in range(3)
        ])
        np.testing.assert_array_equal(sim.sample_next_states()[1], expected)


def test_arm_draws_ignore_later_arms():
    big = small_instance(num_arms=5, budget=1)
    small = MarbleInstance(big.arms[:2], 1, big.chain, big.discount)
    a, b = Simulator(big, 3), Simulator(small, 3)
    for _ in range(100):
        np.testing.assert_array_equal(a.sample_next_states()[:2], b.sample_next_states())


def test_online_point_mass():
    arm = _deterministic_arm(3)
    sim = Simulator(_instance([arm, arm], [[0.7, 0.3], [0.3, 0.7]]), 0)
    for a in (0, 1, 0):
        s, r = sim.step_arm_online(0, a)
        assert s == 3 and sim.arm_states[0] == 3 and r == 0.0


def test_online_frequencies_single_mode():
    rng = np.random.default_rng(6)
    arm = ArmSpec(random_kernel(rng, 1, 2, 3, 3), rng.uniform(size=(1, 3, 2)))
    sim = Simulator(_instance([arm, arm], [[1.0]]), 6)
    counts = np.zeros((2, 3, 3))
    for t in range(100_000):
        a = t % 2
        s = sim.arm_states[0]
        s_next, _ = sim.step_arm_online(0, a)
        counts[a, s, s_next] += 1
        sim.step_latent()
    freq = counts / counts.sum(axis=-1, keepdims=True)
    np.testing.assert_allclose(freq, arm.kernels[0], atol=0.01)


def test_online_reward_matches_emitted_table():
    inst = small_instance(num_states=4)
    sim = Simulator(inst, 8)
    rng = np.random.default_rng(0)
    for _ in range(500):
        i, a = int(rng.integers(4)), int(rng.integers(2))
        table = sim.emit_rewards(i).copy()
        s = sim.arm_states[i]
        _, r = sim.step_arm_online(i, a)
        assert r == table[s, a]
        actions = rng.integers(0, 2, 4)
        tables, states = sim.emit_rewards().copy(), sim.arm_states.copy()
        _, rs = sim.step_arms_online(actions)
        np.testing.assert_array_equal(rs, tables[np.arange(4), states, actions])
        sim.step_latent()


def test_passive_arms_still_move():
    inst = small_instance(num_states=4)
    sim = Simulator(inst, 1)
    start = sim.arm_states.copy()
    seen = set()
    for _ in range(200):
        sim.step_arms_online(np.zeros(4, dtype=int))
        seen.add(tuple(sim.arm_states))
        sim.step_latent()
    assert len(seen) > 1
    assert tuple(start) != tuple(sim.arm_states) or len(seen) > 1


def test_twin_view_hides_the_mode():
    sim = Simulator(small_instance(), 0)
    twin = sim.twin()
    public = {name for name in dir(twin) if not name.startswith("_")}
    assert public == {"num_arms", "emit_rewards", "sample_next_states", "advance"}
    assert TwinView.__slots__ == ("_sim",)
    with pytest.raises(AttributeError):
        twin.latent_mode  # noqa: B018
    with pytest.raises(AttributeError):
        twin.extra = 1
    before = sim.step
    twin.advance()
    assert sim.step == before + 1


def test_trajectory_reproducible():
    inst = small_instance()

    def trace(seed):
        sim = Simulator(inst, seed)
        out = []
        for t in range(300):
            out.append((sim.latent_mode, sim.emit_rewards().tobytes(), sim.sample_next_states().tobytes()))
            out.append(sim.step_arms_online(np.array([t % 2, 1, 0, 1]))[0].tobytes())
            sim.step_latent()
        return out

    assert trace(2) == trace(2)
    assert trace(2) != trace(3)


def test_tied_streams_move_identical_arms_together(default_instance):
    sim = Simulator(default_instance, 0, tie_arm_streams=True)
    assert np.all(sim.arm_states == sim.arm_states[0])
    for _ in range(50):
        nxt = sim.sample_next_states()
        assert np.all(nxt == nxt[0])
        s, _ = sim.step_arms_online(np.ones(100, dtype=int))
        assert np.all(s == s[0])
        sim.step_latent()
