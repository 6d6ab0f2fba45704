"""A push-notification recommender with a hidden fatigue mode, and its exact indices.

Each of 100 users sits at one of four engagement levels.  Pushing a
notification (the active action) tends to raise engagement and earns a
click bonus; leaving a user alone lets engagement drift down.  A hidden
two-state mode switches the whole population between a normal regime and
a fatigue regime where users respond less and drift down faster.

The learner never sees the mode, so the relevant planning problem is the
mode-averaged single-user MDP.  This script builds it, checks that it is
indexable, and compares its Whittle indices with the ones each mode would
give on its own.
"""

import numpy as np

from marble_qwi import averaged_arms, fixed_mode_mdp, generate_default_instance, verify_mai
from marble_qwi.oracle import whittle_indices

np.set_printoptions(precision=4, suppress=True)

instance = generate_default_instance(seed=0)
arm = instance.arms[0]
print(f"{instance.num_arms} users, budget {instance.budget}, discount {instance.discount}")
print("hidden-mode transition matrix:\n", instance.chain.transition)
print("stationary mode distribution:", instance.mu)

mdp = averaged_arms(instance)[0]
print("\naveraged reward r(s, a):\n", mdp.reward)
print("averaged active kernel:\n", mdp.kernel[1])

report = verify_mai(mdp)
print(f"\nindexable on a {len(report.lambda_grid)}-point grid: {report.is_indexable}")
for lam, passive in zip(report.lambda_grid[::10], report.passive_sets[::10]):
    print(f"  subsidy {lam:+7.3f}  passive states {sorted(passive)}")

averaged = whittle_indices(mdp)
print("\nWhittle index by engagement level")
print("  averaged     ", averaged)
for e in range(arm.num_modes):
    print(f"  mode {e} alone ", whittle_indices(fixed_mode_mdp(arm, e, instance.discount)))
print("\nThe averaged indices are what the learner converges to; neither mode's own")
print("indices is the right target when the mode cannot be observed.")
