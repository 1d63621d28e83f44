from cleanuplab.training.returns import discounted_return, vtrace_targets
from cleanuplab.training.learner import (
    Hyperparams,
    LearnerState,
    Trajectory,
    a2c_update,
    rmsprop_step,
)
from cleanuplab.training.orchestrate import (
    PopulationConfig,
    run_evaluation,
    run_training,
)

__all__ = [
    "Hyperparams",
    "LearnerState",
    "PopulationConfig",
    "Trajectory",
    "a2c_update",
    "discounted_return",
    "rmsprop_step",
    "run_evaluation",
    "run_training",
    "vtrace_targets",
]
