"""Simulator and consistency checker for nested-observer measurement scenarios."""

from .consistency import (
    CONSISTENT,
    CONTRADICTION,
    DEFINABILITY_MISMATCH,
    ConsistencyReport,
    check_scenario,
    compare_predictions,
    monte_carlo_check,
    prediction_table,
)
from .dsl import ParseDiagnostic, SourceSpan, parse_scenario, serialize_scenario
from .hilbert import (
    MeasurementBasis,
    Operator,
    PureState,
    Register,
    apply_unitary,
    basis_state,
    born_distribution,
    from_amplitudes,
    make_register,
    sample_outcome,
    tensor_product,
)
from .kernels import BACKEND
from .mixtures import (
    UNDEFINED,
    Definite,
    DensityOperator,
    Ensemble,
    Undefined,
    definite_value,
    interference_witness,
    partial_trace,
    proper_mixture_from_ensemble,
    trace_distance,
)
from .policies import (
    CollapseAt,
    UnitaryOnly,
    assign_states,
    ensemble_over_runs,
    exact_ensemble,
    parse_policy,
    run_trajectory,
)
from .rng import SplitMix64
from .scenarios import (
    BUILTINS,
    Scenario,
    build_decoherence_demo,
    build_epr_bell,
    build_molecule_toy,
    build_wigners_friend,
    validate_scenario,
)

__version__ = "0.1.0"
