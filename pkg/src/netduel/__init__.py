"""Simulator and analytical toolkit for two competing interconnected networks.

Submodules: topology (duplex graph generation), dynamics (failure,
recovery, takeover and substitution stepping plus the acquisition cost
law), meanfield (coupled fixed-point equations and hysteresis tracing),
protocols (seeded experiment drivers), streams (reproducible RNG
derivation), config (experiment files), output (CSV and manifests),
cli (command-line entry point).
"""

from netduel.config import ExperimentConfig, parse_config, serialize_config
from netduel.dynamics import DualThresholds, DynamicsParams
from netduel.errors import ConfigurationError, GenerationError
from netduel.meanfield import MeanFieldSystem, fixed_point, trace_hysteresis
from netduel.protocols import (
    AttackSchedule,
    TimeSeries,
    early_warning,
    run_hysteresis_sim,
    run_phase_diagram,
    run_timeseries,
    takeover_sweep,
)
from netduel.streams import derive_stream
from netduel.topology import DuplexNetwork, GeneratorConfig, generate

__version__ = "0.1.0"

__all__ = [
    "AttackSchedule",
    "ConfigurationError",
    "DualThresholds",
    "DuplexNetwork",
    "DynamicsParams",
    "ExperimentConfig",
    "GenerationError",
    "GeneratorConfig",
    "MeanFieldSystem",
    "TimeSeries",
    "derive_stream",
    "early_warning",
    "fixed_point",
    "generate",
    "parse_config",
    "run_hysteresis_sim",
    "run_phase_diagram",
    "run_timeseries",
    "serialize_config",
    "takeover_sweep",
    "trace_hysteresis",
    "__version__",
]
