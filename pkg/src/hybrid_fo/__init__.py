"""Hybrid feedback optimization for satellite rendezvous."""

from .analysis import (
    BoundParams,
    ErrorSeries,
    asymptotic_error,
    check_envelope,
    eigenvalue_selection_check,
    input_gap_check,
    mu_max,
    prop_asymptote,
    prop_bound,
    rendezvous_error,
    tau_eps_closeness,
    thm_asymptote,
    thm_bound,
)
from .config import ExperimentConfig, load_config, reference_config
from .disturbance import ConstantDisturbance, SineDisturbance, ZeroDisturbance, make_disturbance
from .dynamics import (
    EigenSpec,
    GainMatrix,
    OrbitalParams,
    StabilizedPlant,
    build_cw,
    build_stabilized,
    make_plant,
    synthesize_gains,
    verify_eigen_placement,
)
from .experiments import (
    CampaignResult,
    fit_quadratic_response,
    run_nominal,
    run_perturbation_sweep,
    run_random_ic_batch,
)
from .hybrid import (
    HybridState,
    HybridTrajectory,
    JumpCase,
    PerturbationRho,
    TimerConfig,
    classify_jump,
    flow,
    in_flow_set,
    in_jump_set,
    jump,
    jump_g1,
    jump_g2,
    simulate,
)
from .objective import (
    InputBox,
    QuadObjective,
    chosen_rendezvous_point,
    compute_constants,
    gd_step,
    project_box,
    reduced_gradient,
    solve_optimal_input,
)

__version__ = "0.1.0"
