"""Tiered proximity ("sweet spot") rewards for verifiable-reward RL.

Modules: :mod:`core` (reward math), :mod:`gui` and :mod:`grid` (task
scorers and verifiers), :mod:`envs` (desk-scale environments),
:mod:`grpo` (training), :mod:`analysis` (gradient statistics and sweeps),
:mod:`io` (file formats) and :mod:`cli`.
"""
__version__ = "0.1.0"

from .core import (RewardConfig, RewardMode, RewardRecord, StepRecord, Trajectory, ZoneSchema,
                   aggregate_proximity, compose_reward, default_schema, discretize, schema_for_k,
                   uniform_schema)
from .errors import (DegenerateDirectionError, FormatError, GridFormatError, InvalidInputError,
                     NoPathError, NumericError, RecordFormatError)

__all__ = [
    "__version__",
    "RewardConfig", "RewardMode", "RewardRecord", "StepRecord", "Trajectory", "ZoneSchema",
    "aggregate_proximity", "compose_reward", "default_schema", "discretize", "schema_for_k",
    "uniform_schema",
    "DegenerateDirectionError", "FormatError", "GridFormatError", "InvalidInputError",
    "NoPathError", "NumericError", "RecordFormatError",
]
