"""Network-level sidelink broadcast simulator with cancellation receivers."""

from .config_io import (AllocationMode, ConfigError, PathlossParams,
                        ReceiverMode, RunOutputs, SimConfig, TrafficMode,
                        apply_overrides, parse_config_file, validate_config,
                        write_metrics_csv)
from .engine import Simulation, run_simulation

__version__ = "0.1.0"

__all__ = [
    "AllocationMode", "ConfigError", "PathlossParams", "ReceiverMode",
    "RunOutputs", "SimConfig", "TrafficMode", "apply_overrides",
    "parse_config_file", "validate_config", "write_metrics_csv",
    "Simulation", "run_simulation", "__version__",
]
