"""Behavioral simulator for a multichannel 3-step time-to-digital converter."""

from .io import VERSION as __version__
from .kernels import BACKEND
from .errors import (
    CalibrationError, CodeRangeError, ConfigError, DomainError, HorizonError,
    InconsistentMatrixError, InsufficientStatisticsError, LockError, ResidueError, TdcError,
)
from .timebase import ClockModel, HitStream
from .delay_lines import PvtCondition
from .time_amplifier import TaConfig
from .conversion import ChipConfig, MismatchConfig, assemble, build_chip, ideal_chip, power_estimate
from .characterization import linearity_report, solve_channel_sigmas
from .calibration import CalibrationTable, apply_correction, find_rcal
from .config import validate_config
from .cli import run_scenario

__all__ = [
    "__version__", "BACKEND", "TdcError", "CalibrationError", "CodeRangeError", "ConfigError",
    "DomainError", "HorizonError", "InconsistentMatrixError", "InsufficientStatisticsError",
    "LockError", "ResidueError", "ClockModel", "HitStream", "PvtCondition", "TaConfig", "ChipConfig",
    "MismatchConfig", "assemble", "build_chip", "ideal_chip", "power_estimate", "linearity_report",
    "solve_channel_sigmas", "CalibrationTable", "apply_correction", "find_rcal", "validate_config",
    "run_scenario",
]
