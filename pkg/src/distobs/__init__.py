"""Distributed observer design and verification for sensor networks.

A discrete-time plant given in real Jordan form is watched by a network
of sensor agents over a directed communication graph.  The toolkit
classifies the observability structure, checks the design assumptions,
synthesizes output injection and consensus coupling gains with verified
Schur stability, and simulates the closed estimation network in lock
step.
"""

from .errors import (
    AssumptionError,
    DistObsError,
    DivergenceError,
    EigensolverError,
    GainSynthesisError,
    InfeasibleGainError,
    ModelFormatError,
)
from .gains import (
    FeasibleInterval,
    GainPlan,
    design_gains,
    design_output_injection,
    eigenvalues,
    feasible_interval,
    kron_spectrum_check,
    mode_error_matrix,
    pick_coupling_gains,
    reduced_laplacian,
    spanning_forest_diagnostic,
    spectral_radius,
)
from .kernels import NUMBA_ENABLED
from .model import (
    CommGraph,
    EigenvalueSpec,
    InputSpec,
    MiniblockSpec,
    PlantModel,
    SensorSuite,
    SimConfig,
    assemble_A,
    laplacian_of,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
)
from .sim import (
    NetworkOperator,
    SimMetrics,
    SimulationTrace,
    assemble_estimate,
    build_input_matrix,
    build_network_operator,
    error_metrics,
    initial_observer_states,
    run,
    step_consensus,
    step_observer,
    step_plant,
)
from .structure import (
    AgentClassification,
    ConsensusPartition,
    DetectableSubsystem,
    ModeAgentSets,
    NetworkAnalysis,
    analyze_network,
    build_consensus_partition,
    build_detectable_subsystem,
    build_network_structure,
    check_independence,
    check_joint_detectability,
    classify_agent,
    classify_all,
    mode_agent_sets,
    permutation_matrix,
)

__version__ = "0.1.0"

__all__ = [
    "AgentClassification",
    "AssumptionError",
    "CommGraph",
    "ConsensusPartition",
    "DetectableSubsystem",
    "DistObsError",
    "DivergenceError",
    "EigensolverError",
    "EigenvalueSpec",
    "FeasibleInterval",
    "GainPlan",
    "GainSynthesisError",
    "InfeasibleGainError",
    "InputSpec",
    "MiniblockSpec",
    "ModeAgentSets",
    "ModelFormatError",
    "NetworkAnalysis",
    "NetworkOperator",
    "NUMBA_ENABLED",
    "PlantModel",
    "SensorSuite",
    "SimConfig",
    "SimMetrics",
    "SimulationTrace",
    "analyze_network",
    "assemble_A",
    "assemble_estimate",
    "build_consensus_partition",
    "build_detectable_subsystem",
    "build_input_matrix",
    "build_network_operator",
    "build_network_structure",
    "check_independence",
    "check_joint_detectability",
    "classify_agent",
    "classify_all",
    "design_gains",
    "design_output_injection",
    "eigenvalues",
    "error_metrics",
    "feasible_interval",
    "initial_observer_states",
    "kron_spectrum_check",
    "laplacian_of",
    "load_model",
    "mode_agent_sets",
    "mode_error_matrix",
    "model_from_dict",
    "model_to_dict",
    "permutation_matrix",
    "pick_coupling_gains",
    "reduced_laplacian",
    "run",
    "save_model",
    "spanning_forest_diagnostic",
    "spectral_radius",
    "step_consensus",
    "step_observer",
    "step_plant",
    "__version__",
]
