"""Secure CRA ISAC

Joint electromagnetic-mode selection and baseband beamforming for secure
integrated sensing and communication with compound reconfigurable antennas:
maximize the radar SCNR subject to legitimate-user SINR floors and
eavesdropper SINR ceilings.

Usage:
    from secure_cra_isac import JointOptimizer, load_builtin, optimize_realization

    config = load_builtin("default_scenario")
    channels, dictionary, state, trace = optimize_realization(config, seed=7)

Environment Variables:
    CRA_ISAC_SOLVER: Conic solver used by the cvxpy backend (default: "CLARABEL")
    CRA_ISAC_JOBS: Default worker count for sweeps (default: "1")
    CRA_ISAC_LOG_LEVEL: CLI log level (default: "WARNING")
    CRA_ISAC_OUT_DIR: CLI output directory (default: "results")
"""

__version__ = "0.2.0"

from .channel import ChannelSet, CompoundChannel, ScatteringModel, generate_channel_set
from .conic_kernel import ConicBackend, ConicProgram, CvxpyBackend, configure_backend, get_backend
from .detector import roc_curve
from .em_core import EmDictionary, SelectionMatrix, assemble_em_beamformer, build_dictionary
from .errors import ConfigError, CraIsacError, EigenSolveError, SubproblemInfeasibleError
from .harness import (
    ScenarioConfig,
    apply_scheme,
    config_hash,
    load_builtin,
    load_config,
    optimize_realization,
    run_roc,
    run_sweep,
)
from .metrics import BeamformerState, NoiseModel, evaluate_state
from .optimizer import AlgorithmConfig, IterationTrace, JointOptimizer, ProblemConfig
from .oracle import dense_recompute, exhaustive_em_search
from .results import ResultTracker, export_results_report, get_result_tracker, record_result

__all__ = [
    "__version__",
    "JointOptimizer",
    "AlgorithmConfig",
    "ProblemConfig",
    "IterationTrace",
    "BeamformerState",
    "NoiseModel",
    "evaluate_state",
    "EmDictionary",
    "SelectionMatrix",
    "assemble_em_beamformer",
    "build_dictionary",
    "ChannelSet",
    "CompoundChannel",
    "ScatteringModel",
    "generate_channel_set",
    "ConicBackend",
    "ConicProgram",
    "CvxpyBackend",
    "get_backend",
    "configure_backend",
    "roc_curve",
    "dense_recompute",
    "exhaustive_em_search",
    "ScenarioConfig",
    "apply_scheme",
    "config_hash",
    "load_builtin",
    "load_config",
    "optimize_realization",
    "run_roc",
    "run_sweep",
    "ResultTracker",
    "get_result_tracker",
    "record_result",
    "export_results_report",
    "CraIsacError",
    "ConfigError",
    "SubproblemInfeasibleError",
    "EigenSolveError",
]
