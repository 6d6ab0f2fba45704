"""Comparing index policies on users with individual dynamics.

Each user gets their own perturbed rates and rewards.  Indices learned by
QWI (executed with 10% random exploration) are compared with the exact
averaged-MDP indices and with pushing a random subset of users each step.
Every policy activates exactly ten users per step, and users move with the
kernel of the current hidden mode.
"""

import numpy as np

from marble_qwi import IndexPolicy, evaluate_policy, generate_default_instance, run, whittle_table

ITERATIONS = 100_000
HORIZON = 5_000
SEEDS = range(5)

instance = generate_default_instance(seed=0, heterogeneous=True)
oracle = whittle_table(instance)
learned, metrics = run(instance, ITERATIONS, seed=0, snapshot_every=ITERATIONS, oracle_indices=oracle)
print(f"learned for {ITERATIONS} iterations; max index error {metrics.index_error[-1]:.4f}")

policies = {
    "oracle indices": IndexPolicy(oracle, 0.0, instance.budget),
    "QWI, eps=0.1": IndexPolicy(learned.indices, 0.1, instance.budget),
    "random": IndexPolicy.random(instance),
}
tail = HORIZON // 10
print(f"\nmean reward per user-step over the last {tail} steps, {len(SEEDS)} seeds")
for name, policy in policies.items():
    means = [evaluate_policy(instance, policy, HORIZON, s).rewards[-tail:].mean() for s in SEEDS]
    print(f"  {name:15s} {np.mean(means):.4f}  (seed spread {np.std(means):.4f})")
