"""Quantum-enhanced-ranging localization simulator."""

from .experiment import (
    ExperimentConfig,
    METHOD_MLAT_GD,
    METHOD_QUERLOC,
    METHOD_QUERLOC_SIM,
    METHOD_TDOA,
    bench_timing,
    run_campaign,
    run_trial,
    sample_positions,
)
from .localize import (
    Estimate,
    GdOptions,
    LinearSystem,
    SingularGeometryError,
    build_linear_system,
    gd_refine,
    multilateration_init,
    tdoa_chan_solve,
    wls_solve,
)
from .metrics import TrialRecord, crlb_rmse_bound, error_cdf, fisher_matrix, rmse
from .model import (
    AnchorSet,
    InsufficientAnchorsError,
    PhysicalConstants,
    ProbeScheme,
    default_scheme_list,
    validate_scheme,
)
from .qdynamics import (
    CoefficientPair,
    TwoLevelParams,
    closed_form_state,
    integrate_two_level,
    phase_discrepancy_scan,
    relative_phase,
)
from .qsim import (
    BranchPattern,
    StateVector,
    apply_phase_evolution,
    branch_relative_phase,
    povm_probability,
    prepare_probe,
    sample_and_estimate_phase,
)
from .ranging import (
    NoiseModel,
    RangingOutcome,
    classical_signal_maps,
    mimic_classical_lambda,
    perturb_distance,
    perturb_lambda,
    quer_lambda,
)

__version__ = "0.1.0"
