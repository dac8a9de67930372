"""Stochastic primal-dual splitting for nonconvex finite-sum optimization.

Two variants of the splitting scheme (per-component gradient steps with
non-uniform sampling, and exact local minimization), reference baselines
(proximal SGD/SAGA/GD), instrumented optimality metrics, and a config-driven
experiment harness for the noisy sparse-regression family.
"""

from .baselines import StepsizeRule, prox_gd_run, prox_sgd_run, saga_run, saga_stepsize
from .errors import (
    ConfigError,
    ConvergenceError,
    DimensionMismatchError,
    NesttError,
    ParameterError,
)
from .harness import ExperimentConfig, parse_config, run_experiment, summarize
from .metrics import (
    MetricSample,
    augmented_lagrangian,
    gap_H,
    potential_Q,
    prox_gradient_gap,
    qlinear_tail_ratio,
)
from .nestt_e import (
    EConstants,
    EState,
    c_constants,
    init_e,
    run_e,
    solve_local_exact,
    step_e,
)
from .nestt_g import GState, init_g, run_g, step_compact, step_primal_dual
from .problem import (
    CompositeProblem,
    NonsmoothSpec,
    RegressionConfig,
    SmoothComponent,
    generate_regression_instance,
    load_instance,
    save_instance,
    spectral_norm,
)
from .prox import ProxRequest, project_l1_ball, prox_h, solve_z_subproblem
from .records import RunRecord, emit_run_csv, parse_run_csv
from .sampling import (
    NesttParams,
    Schedule,
    nestt_e_parameters,
    nestt_g_parameters,
    next_index,
)

__version__ = "0.1.0"
