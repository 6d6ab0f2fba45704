import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from marble_qwi.averaging import AveragedArmMdp  # noqa: E402
from marble_qwi.harness import generate_default_instance  # noqa: E402
from marble_qwi.model import ArmSpec, LatentChain, MarbleInstance  # noqa: E402

settings.register_profile(
    "repo", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


def random_kernel(rng, *shape, conc=1.0):
    """Row-stochastic array; the last axis is the successor state."""
    return rng.dirichlet(np.full(shape[-1], conc), size=shape[:-1])


def random_mdp(rng, num_states=4, gamma=0.8, scale=1.0):
    return AveragedArmMdp(
        random_kernel(rng, 2, num_states, num_states),
        rng.uniform(-scale, scale, (num_states, 2)),
        gamma,
    )


def identical_action_mdp(num_states=3, gamma=0.8, seed=0):
    rng = np.random.default_rng(seed)
    k = random_kernel(rng, num_states, num_states)
    r = rng.uniform(0, 1, num_states)
    return AveragedArmMdp(np.stack([k, k]), np.stack([r, r], axis=1), gamma)


def bonus_mdp(bonus, num_states=3, gamma=0.8, seed=0):
    base = identical_action_mdp(num_states, gamma, seed)
    reward = base.reward.copy()
    reward[:, 1] += bonus
    return AveragedArmMdp(base.kernel, reward, gamma)


def constant_arm(num_states, rewards_by_mode, kernels=None):
    """Arm whose reward is constant within each mode."""
    e = len(rewards_by_mode)
    if kernels is None:
        kernels = np.broadcast_to(np.eye(num_states), (e, 2, num_states, num_states))
    rewards = np.array(rewards_by_mode, dtype=float)[:, None, None] * np.ones((e, num_states, 2))
    return ArmSpec(kernels, rewards)


def small_instance(num_arms=4, budget=2, seed=0, num_states=3, transition=None):
    rng = np.random.default_rng(seed)
    transition = [[0.7, 0.3], [0.4, 0.6]] if transition is None else transition
    e = len(transition)
    arms = [
        ArmSpec(random_kernel(rng, e, 2, num_states, num_states), rng.uniform(0, 1, (e, num_states, 2)))
        for _ in range(num_arms)
    ]
    return MarbleInstance(arms, budget, LatentChain(transition), 0.8)


@pytest.fixture(scope="session")
def default_instance():
    return generate_default_instance(0, heterogeneous=False)


@pytest.fixture(scope="session")
def hetero_instance():
    return generate_default_instance(0, heterogeneous=True)


# acceptance criteria report their verdicts here; printed at the end of the session
ACCEPTANCE: dict[int, dict[str, tuple[bool, str]]] = {}


def record(criterion: int, part: str, ok: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(criterion, {})[part] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[criterion]
        ok = all(p[0] for p in parts.values())
        detail = "; ".join(f"{name}: {d}" for name, (_, d) in sorted(parts.items()))
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {criterion}  {detail}")
