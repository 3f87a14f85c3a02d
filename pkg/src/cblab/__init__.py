"""Continuous-state branching processes: mechanisms, cumulant flows,
jump-SDE simulation, and moment-finiteness criteria."""

from .measures import (
    FiniteAtoms,
    IntegralResult,
    LevyMeasure,
    PowerTail,
    ScaledSum,
    Tabulated,
    TemperedPowerTail,
    Truncated,
    ZERO,
    levy_integral,
    measure_from_dict,
)
from .mechanisms import (
    Admissibility,
    BranchingMechanism,
    GreyStatus,
    ImmigrationMechanism,
    check_admissibility,
    effective_drift,
    feller_mechanism,
    grey_check,
    linear_mechanism,
    phi_eval,
    psi_eval,
    sample_tail,
    stable_mechanism,
    tail_mass,
    truncate,
)
from .cumulant import (
    CumulantSolution,
    laplace_cb,
    laplace_cbi,
    solve_v,
    v_compose_check,
)
from .moments import (
    MomentFunction,
    cb_f_moment_finite,
    cbi_f_moment_finite,
    integer_moment,
    mean_cb,
    power,
    power_log,
    shift_to_condition_b,
    verify_condition_b,
    x_log_x,
)
from .simulate import (
    CouplingRecord,
    EnsembleResult,
    JumpSource,
    PathRecord,
    SimConfig,
    exact_feller_step,
    first_big_jump_time,
    path_rng,
    select_cbi_jump_source,
    simulate_cb,
    simulate_cb_ensemble,
    simulate_cbi,
    simulate_cbi_ensemble,
    simulate_coupled,
    simulate_coupled_ensemble,
)
from .lab import (
    EstimateReport,
    ExperimentSpec,
    empirical_laplace,
    hill_tail_index,
    ks_two_sample,
    mc_f_moment,
    run_experiment,
)

__version__ = "0.1.0"
