"""Experiment pipeline: default recommender instance, oracle, learning, evaluation."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import formats
from .averaging import averaged_arms
from .model import ArmSpec, LatentChain, MarbleInstance, validate_instance
from .oracle import fixed_point_tables, verify_mai, whittle_table
from .policy import IndexPolicy, evaluate_policy
from .qwi import StepSchedule, run

log = logging.getLogger(__name__)

NUM_ARMS, BUDGET, DISCOUNT, NUM_STATES = 100, 10, 0.8, 4
LATENT_TRANSITION = [[0.9, 0.1], [0.2, 0.8]]

# Per mode: passive decay, passive organic rise, active rise, active annoyance.
# Mode 1 is a fatigue shock: users drift down faster and respond less to pushes.
NOMINAL_RATES = np.array([
    [0.10, 0.10, 0.30, 0.05],
    [0.20, 0.05, 0.20, 0.10],
])
# Per mode: passive reward by engagement state, and the extra reward of a push.
NOMINAL_BASE = np.array([[0.0, 0.2, 0.5, 1.0], [0.0, 0.1, 0.3, 0.7]])
NOMINAL_CLICK = np.array([[0.1, 0.3, 0.3, 0.2], [0.05, 0.15, 0.1, 0.0]])


class InstanceGenerationError(RuntimeError):
    pass


def engagement_kernels(down, organic, up, annoy, num_states=NUM_STATES):
    """Birth-death kernels ``[a, s, s']`` over ordered engagement levels."""
    p = np.zeros((2, num_states, num_states))
    for s in range(num_states):
        lo, hi = max(s - 1, 0), min(s + 1, num_states - 1)
        p[0, s, lo] += down
        p[0, s, hi] += organic
        p[0, s, s] += 1.0 - down - organic
        p[1, s, hi] += up
        p[1, s, lo] += annoy
        p[1, s, s] += 1.0 - up - annoy
    return p


def engagement_arm(rates, base, click) -> ArmSpec:
    kernels = np.stack([engagement_kernels(*r) for r in rates])
    rewards = np.stack([base, base + click], axis=-1)
    return ArmSpec(kernels, rewards)


def _perturbed_arm(rng: np.random.Generator) -> ArmSpec:
    rates = np.minimum(NOMINAL_RATES * rng.uniform(0.7, 1.3, NOMINAL_RATES.shape), 0.45)
    base = NOMINAL_BASE * rng.uniform(0.8, 1.2, (2, 1))
    click = NOMINAL_CLICK * rng.uniform(0.6, 1.4, NOMINAL_CLICK.shape)
    return engagement_arm(rates, base, click)


def _is_mai(instance: MarbleInstance) -> bool:
    return all(verify_mai(mdp).is_indexable for mdp in set(averaged_arms(instance)))


def generate_default_instance(seed: int = 0, heterogeneous: bool = False) -> MarbleInstance:
    """Push-notification recommender: 100 users, 4 engagement levels, 2 hidden modes.

    Homogeneous instances share a single ``ArmSpec``; heterogeneous ones
    draw per-user perturbations of the nominal rates and rewards from
    ``seed``.  Instances failing validation or the MAI check are redrawn
    up to 100 times.
    """
    chain = LatentChain(LATENT_TRANSITION)
    for attempt in range(100):
        if heterogeneous:
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(attempt,)))
            arms = [_perturbed_arm(rng) for _ in range(NUM_ARMS)]
        else:
            arms = [engagement_arm(NOMINAL_RATES, NOMINAL_BASE, NOMINAL_CLICK)] * NUM_ARMS
        instance = MarbleInstance(arms, BUDGET, chain, DISCOUNT)
        if not validate_instance(instance) and _is_mai(instance):
            return instance
        log.warning("instance attempt %d failed validation or MAI; redrawing", attempt)
    raise InstanceGenerationError(f"no valid MAI instance after 100 attempts (seed={seed})")


@dataclass
class ExperimentConfig:
    output_dir: str
    instance: str | None = None
    generator: dict = field(default_factory=lambda: {"seed": 0, "heterogeneous": False})
    seed: int = 0
    iterations: int = 500_000
    horizon: int = 10_000
    seeds: int = 20
    snapshot_every: int = 1000
    epsilon: float = 0.1
    schedule: str = "default"
    lambda_tol: float = 1e-10
    solve_tol: float = 1e-10

    def __post_init__(self):
        for name in ("iterations", "horizon", "seeds", "snapshot_every", "lambda_tol", "solve_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.schedule != "default":
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.instance is not None and not Path(self.instance).is_file():
            raise FileNotFoundError(self.instance)

    @classmethod
    def from_file(cls, path) -> ExperimentConfig:
        with open(path) as fh:
            return cls(**json.load(fh))

    def load_instance(self) -> MarbleInstance:
        if self.instance is not None:
            return formats.load_instance(self.instance)
        return generate_default_instance(
            int(self.generator.get("seed", 0)), bool(self.generator.get("heterogeneous", False))
        )


POLICIES = ("qwi", "oracle", "random")


def tail_length(horizon: int) -> int:
    return max(1, horizon // 10)


def summarize(oracle_table, final_table, num_states, rewards: dict) -> dict:
    """Summary numbers, computed only from what the CSVs hold.

    ``rewards`` maps policy to ``{seed: per-step mean rewards}``.
    """
    mask = np.arange(oracle_table.shape[1])[None, :] < np.asarray(num_states)[:, None]
    err = np.where(mask, np.abs(np.asarray(final_table) - oracle_table), 0.0)
    per_seed = {
        policy: {str(seed): float(np.mean(series[-tail_length(len(series)):]))
                 for seed, series in by_seed.items()}
        for policy, by_seed in rewards.items()
    }
    return {
        "index_error_max": float(err.max()),
        "index_error_per_state": [float(x) for x in err.max(axis=0)],
        "mean_reward_last10pct": {
            policy: float(np.mean(list(v.values()))) for policy, v in per_seed.items()
        },
        "mean_reward_last10pct_per_seed": per_seed,
    }


def summarize_directory(out: Path, instance: MarbleInstance) -> dict:
    """Recompute ``summary.json`` from the CSV files in ``out``."""
    n, s = instance.num_arms, int(instance.num_states.max())
    oracle = formats.read_index_table(out / "oracle_indices.csv", n, s)
    final = formats.read_index_table(out / "indices.csv", n, s)
    _, rows = formats.read_csv(out / "rewards.csv")
    rewards: dict = {}
    for policy, seed, _step, value in rows:
        rewards.setdefault(policy, {}).setdefault(int(seed), []).append(float(value))
    rewards = {p: {sd: np.array(v) for sd, v in by.items()} for p, by in rewards.items()}
    return summarize(oracle, final, instance.num_states, rewards)


def run_experiment(config: ExperimentConfig) -> Path:
    """Oracle, learning and evaluation for one configuration; returns the output directory."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    instance = config.load_instance()
    problems = validate_instance(instance)
    if problems:
        raise ValueError("invalid instance: " + "; ".join(p.message for p in problems))
    formats.save_instance(instance, out / "instance.json")

    log.info("computing oracle indices")
    oracle = whittle_table(instance, config.lambda_tol)
    oracle_q = fixed_point_tables(instance, oracle, config.solve_tol)
    formats.write_csv(out / "oracle_indices.csv", formats.ORACLE_HEADER,
                      formats.table_rows(oracle, instance.num_states))

    log.info("learning for %d iterations", config.iterations)
    state, metrics = run(
        instance, config.iterations, config.seed, StepSchedule(),
        config.snapshot_every, oracle_indices=oracle, oracle_q=oracle_q,
    )
    formats.write_csv(out / "indices.csv", formats.INDICES_HEADER,
                      formats.index_rows(metrics.snapshot_k, metrics.indices, instance.num_states))
    formats.write_csv(out / "qnorm.csv", formats.QNORM_HEADER,
                      zip(metrics.snapshot_k.tolist(), metrics.q_error.tolist()))

    policies = {
        "qwi": IndexPolicy(state.indices, config.epsilon, instance.budget),
        "oracle": IndexPolicy(oracle, 0.0, instance.budget),
        "random": IndexPolicy.random(instance),
    }
    seeds = [config.seed + j for j in range(config.seeds)]
    rewards: dict = {}
    for name in POLICIES:
        log.info("evaluating %s policy on %d seeds", name, len(seeds))
        rewards[name] = {
            seed: evaluate_policy(instance, policies[name], config.horizon, seed).rewards
            for seed in seeds
        }
    formats.write_csv(out / "rewards.csv", formats.RUN_REWARDS_HEADER, (
        (name, seed, t, float(r))
        for name in POLICIES for seed in seeds for t, r in enumerate(rewards[name][seed])
    ))

    summary = summarize(oracle, metrics.indices[-1], instance.num_states, rewards)
    summary["config"] = asdict(config)
    formats.atomic_write_text(out / "summary.json", json.dumps(summary, indent=2) + "\n")
    return out
