"""Brownian particles with Lennard-Jones interaction, a depletable
environmental field and field-dependent killing."""

from .errors import (AlreadyDeadError, DimensionMismatchError, InactiveError,
                     InsufficientSamplesError, LJReactError, ParseError, SingularError,
                     StepOverrunError, ValidationError)
from .model import (CEMETERY, ModelParams, ParticleState, Purpose, RandomStreams, SystemState,
                    draw_clocks, sample_initial_positions, validate_params)

__version__ = "0.1.0"

__all__ = [
    "AlreadyDeadError", "CEMETERY", "DimensionMismatchError", "InactiveError",
    "InsufficientSamplesError", "LJReactError", "ModelParams", "ParseError", "ParticleState",
    "Purpose", "RandomStreams", "SingularError", "StepOverrunError", "SystemState",
    "ValidationError", "draw_clocks", "sample_initial_positions", "validate_params",
    "__version__",
]
