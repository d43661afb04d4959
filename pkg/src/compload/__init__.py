"""Composite load modeling: simulation and two-stage identification.

The package simulates an aggregate distribution load built from six
parallel components (three induction motor fleets, a single-phase
compressor fleet with stall dynamics, an electronic load with
undervoltage tripping, and a static ZIP load) through voltage-sag
events, and identifies the load from a reference P/Q recording in two
stages: a double deep Q-learning search over composition fractions,
then Monte-Carlo sampling of the remaining component parameters.
"""

from .load_models import (
    COMPONENT_ORDER,
    CompositeParams,
    ElectronicParams,
    IMParams,
    IMState,
    ModelError,
    ParamRanges,
    SinglePhaseParams,
    SinglePhaseState,
    ZipParams,
    default_param_ranges,
    sample_params,
)
from .simulator import (
    FaultScenario,
    PQTrace,
    SimConfig,
    SimulationError,
    VoltageTrace,
    make_fault_trace,
    simulate,
    simulate_batch,
)
from .metrics import (
    RewardConfig,
    RmseResult,
    composite_loss,
    composition_pinball,
    pinball,
    reward,
    rmse_pq,
    trend_loss,
)
from .ddqn import (
    DdqnConfig,
    DdqnResult,
    IdentificationEnv,
    LoadComposition,
    train,
)
from .montecarlo import (
    IdentificationResult,
    loss_vs_samples_study,
    rank_compositions,
    stage_two_fit,
)
from .search_baselines import (
    GaConfig,
    PsoConfig,
    SearchResult,
    ga_search,
    pso_search,
)

__version__ = "0.1.0"

__all__ = [
    "COMPONENT_ORDER", "CompositeParams", "ElectronicParams", "IMParams",
    "IMState", "ModelError", "ParamRanges", "SinglePhaseParams",
    "SinglePhaseState", "ZipParams", "default_param_ranges", "sample_params",
    "FaultScenario", "PQTrace", "SimConfig", "SimulationError", "VoltageTrace",
    "make_fault_trace", "simulate", "simulate_batch",
    "RewardConfig", "RmseResult", "composite_loss", "composition_pinball",
    "pinball", "reward", "rmse_pq", "trend_loss",
    "DdqnConfig", "DdqnResult", "IdentificationEnv", "LoadComposition", "train",
    "IdentificationResult", "loss_vs_samples_study", "rank_compositions",
    "stage_two_fit",
    "GaConfig", "PsoConfig", "SearchResult", "ga_search", "pso_search",
    "__version__",
]
