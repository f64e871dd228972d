"""Multipath real-time streaming simulator with Tetrys and block FEC coding."""

from .channel import GILBERT_ELLIOT, UNIFORM, LossModel, PathConfig
from .fec_block import FecParams
from .simcore import ExperimentConfig, MetricsLedger, run
from .tetrys import TetrysParams

__all__ = [
    "ExperimentConfig",
    "FecParams",
    "GILBERT_ELLIOT",
    "LossModel",
    "MetricsLedger",
    "PathConfig",
    "TetrysParams",
    "UNIFORM",
    "run",
]

__version__ = "0.1.0"
