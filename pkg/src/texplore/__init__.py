"""Targeted exploration-input design with guaranteed identification accuracy.

Designs minimum-energy multi-sine inputs for an uncertain linear system
subject to energy-bounded disturbances, so that set-membership
identification from the resulting experiment meets a user-specified
parameter accuracy bound.  Ships a two-mass nonlinear benchmark plant, the
design SDP with scenario-sampled uncertainty caps, a sample-based
certificate checker, and an end-to-end experiment pipeline with a CLI.
"""

from .bounds import (
    ScenarioConfig,
    UncertaintyBounds,
    noise_level_bounds,
    sample_prior,
    scenario_gamma_bounds,
)
from .config import ExperimentConfig
from .design import (
    CertificationReport,
    ExplorationDesign,
    ExplorationProblem,
    build_exploration_lmis,
    build_exploration_problem,
    certify_design,
    iterate_design,
    naive_design,
    solve_exploration_sdp,
)
from .errors import (
    ConstructionError,
    DimensionError,
    FalsifiedPriorError,
    InfeasibleDesignError,
    InvalidParameterError,
    OffGridFrequencyError,
    PriorTooLargeError,
    SingularRegressorError,
    SolverFailureError,
    StageError,
    TexploreError,
)
from .lmi import (
    AffineLMI,
    LmiProgram,
    LmiSolution,
    hermitian_to_real,
    mirror_realify,
    mirror_unitary,
)
from .pipeline import (
    RunReport,
    design_from_npz,
    rebuild_problem,
    run_pipeline,
    save_design_npz,
    trajectory_from_csv,
    trajectory_to_csv,
    write_outputs,
)
from .plant import (
    BenchmarkPlantParams,
    LinearModel,
    Trajectory,
    benchmark_disturbance,
    discretize_benchmark,
    disturbance_energy,
    disturbance_energy_bound,
    friction_for_energy,
    model_from_theta,
    model_to_theta,
    simulate_linear,
    simulate_nonlinear_benchmark,
)
from .setmem import (
    ParameterEllipsoid,
    ParameterEstimate,
    RegressorData,
    accuracy_norm,
    build_regressors,
    check_data_condition,
    contains,
    least_squares,
    nonfalsified_set,
    posterior_error_certificate,
)
from .spectral import (
    ExplorationInputSpec,
    FrequencyGrid,
    SpectralAssemblies,
    TransferBlocks,
    assemble_spectral,
    cholesky_upper,
    empirical_excitation_check,
    spectral_line,
    symmetrize_mirror_pairs,
    transfer_blocks,
)
from .studies import STUDIES, StudyResult, error_bound_pair, run_study

__version__ = "0.1.0"

__all__ = [
    "AffineLMI",
    "BenchmarkPlantParams",
    "CertificationReport",
    "ConstructionError",
    "DimensionError",
    "ExperimentConfig",
    "ExplorationDesign",
    "ExplorationInputSpec",
    "ExplorationProblem",
    "FalsifiedPriorError",
    "FrequencyGrid",
    "InfeasibleDesignError",
    "InvalidParameterError",
    "LinearModel",
    "LmiProgram",
    "LmiSolution",
    "OffGridFrequencyError",
    "ParameterEllipsoid",
    "ParameterEstimate",
    "PriorTooLargeError",
    "RegressorData",
    "RunReport",
    "STUDIES",
    "ScenarioConfig",
    "SingularRegressorError",
    "SolverFailureError",
    "SpectralAssemblies",
    "StageError",
    "StudyResult",
    "TexploreError",
    "Trajectory",
    "TransferBlocks",
    "UncertaintyBounds",
    "accuracy_norm",
    "assemble_spectral",
    "benchmark_disturbance",
    "build_exploration_lmis",
    "build_exploration_problem",
    "build_regressors",
    "certify_design",
    "check_data_condition",
    "cholesky_upper",
    "contains",
    "design_from_npz",
    "discretize_benchmark",
    "disturbance_energy",
    "disturbance_energy_bound",
    "empirical_excitation_check",
    "error_bound_pair",
    "friction_for_energy",
    "hermitian_to_real",
    "mirror_realify",
    "mirror_unitary",
    "iterate_design",
    "least_squares",
    "model_from_theta",
    "model_to_theta",
    "naive_design",
    "noise_level_bounds",
    "nonfalsified_set",
    "posterior_error_certificate",
    "rebuild_problem",
    "run_pipeline",
    "run_study",
    "sample_prior",
    "save_design_npz",
    "scenario_gamma_bounds",
    "simulate_linear",
    "simulate_nonlinear_benchmark",
    "solve_exploration_sdp",
    "spectral_line",
    "symmetrize_mirror_pairs",
    "trajectory_from_csv",
    "trajectory_to_csv",
    "transfer_blocks",
    "write_outputs",
]
