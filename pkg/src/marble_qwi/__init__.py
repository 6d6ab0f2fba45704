"""Restless bandits in a hidden Markov environment, and synchronous QWI learning."""

from .averaging import AveragedArmMdp, average_arm, averaged_arms, fixed_mode_mdp
from .harness import ExperimentConfig, generate_default_instance, run_experiment
from .model import (
    ArmSpec,
    InvalidChainError,
    LatentChain,
    MarbleInstance,
    Violation,
    stationary_distribution,
    validate_instance,
)
from .oracle import (
    IndexabilityReport,
    NotIndexableAtState,
    action_gap,
    bellman_backup,
    passive_set,
    solve_q,
    verify_mai,
    whittle_index,
    whittle_table,
)
from .policy import IndexPolicy, evaluate_policy, select_actions
from .qwi import (
    DivergenceError,
    LearnerState,
    RunMetrics,
    StepSchedule,
    alpha_default,
    beta_default,
    check_schedule,
    qwi_sweep,
    run,
)
from .simulator import Simulator, TwinView

__version__ = "0.1.0"

__all__ = [
    "AveragedArmMdp",
    "average_arm",
    "averaged_arms",
    "fixed_mode_mdp",
    "ExperimentConfig",
    "generate_default_instance",
    "run_experiment",
    "ArmSpec",
    "InvalidChainError",
    "LatentChain",
    "MarbleInstance",
    "Violation",
    "stationary_distribution",
    "validate_instance",
    "IndexabilityReport",
    "NotIndexableAtState",
    "action_gap",
    "bellman_backup",
    "passive_set",
    "solve_q",
    "verify_mai",
    "whittle_index",
    "whittle_table",
    "IndexPolicy",
    "evaluate_policy",
    "select_actions",
    "DivergenceError",
    "LearnerState",
    "RunMetrics",
    "StepSchedule",
    "alpha_default",
    "beta_default",
    "check_schedule",
    "qwi_sweep",
    "run",
    "Simulator",
    "TwinView",
]
