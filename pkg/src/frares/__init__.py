"""State estimation for fractional-order systems with sensor artifacts."""

from .core import (
    ArtifactSpec,
    FracSystem,
    MeasurementBlock,
    PropagatorCache,
    build_propagators,
    propagate,
    psi,
    psi_table,
    simulate_outputs,
    simulate_states,
)
from .correctability import (
    BoundReport,
    CorrectabilityReport,
    ObservabilityReport,
    check_correctable_exact,
    confusable_pair,
    correctable_channel_cap,
    max_correctable_q,
    observability_index,
    sufficient_bound,
)
from .estimators import (
    EstimationResult,
    NullspaceReport,
    SolverConfig,
    estimate_l0,
    estimate_l1r,
    estimate_windows,
    nullspace_property_check,
    phi_adjoint,
    phi_apply,
)
from .exceptions import (
    ConfigurationError,
    DataError,
    EnumerationCapError,
    FraresError,
    SolverError,
)
from .scenarios import (
    GroundTruth,
    ScenarioSpec,
    eeg_like_system,
    generate_scenario,
    score_estimate,
    score_windows,
    synthetic_eeg,
    toy_system,
)

__version__ = "0.1.0"
