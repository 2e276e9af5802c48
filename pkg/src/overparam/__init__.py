"""Descent-trajectory analysis for overparameterized nonlinear least squares.

Model families with exact Jacobians, probed local-geometry certificates,
full-batch/stochastic/general-loss descent loops, anchored stochastic
potentials, and inequality suites that verify the convergence theory
empirically at desk scale.
"""

from .config import ConfigError, RunConfig, load_config, parse_config_text, save_config
from .descent import (
    GeneralLoss,
    OptimConfig,
    Trajectory,
    local_pl_check,
    run_gd,
    run_pl_gd,
    run_sgd,
)
from .geometry import (
    CertificationError,
    SpectrumBounds,
    TheoryPlan,
    gd_plan,
    probe_spectrum,
    sgd_plan,
    verify_assumptions,
)
from .models import (
    Activation,
    GLMModel,
    LinearModel,
    LowRankModel,
    Model,
    ShallowNetModel,
    identity_activation,
    softplus_linear,
    tanh_linear,
)
from .oracle import (
    CapacityError,
    enumerate_sgd_expectation,
    fd_jacobian,
    lowrank_init,
    pseudo_inverse_solution,
)
from .potentials import (
    AnchorSet,
    PackingInfeasibleError,
    build_packing,
    exact_conditional_drift,
    gd_potential,
    neighborhood_monitor,
    sgd_potential,
)
from .bounds import (
    BoundReport,
    check_gd_theorem,
    check_glm_theorem,
    check_lower_bound,
    check_pl_theorems,
    check_sgd_theorem,
    check_tight_line,
    closest_optimum_glm,
    make_lower_bound_instance,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
