"""Hybrid SAR detection datasets: incrust simulated targets into clutter and
score detectors against the auto-generated labels."""

from .core import BBox, SeedSpec, TargetChip, derive_stream
from .errors import (AnnotationError, ConfigError, DataIOError, EvaluationError, FormatError,
                     PlacementError, ToolkitError, ValidationError)

__version__ = "0.1.0"

__all__ = [
    "BBox", "SeedSpec", "TargetChip", "derive_stream",
    "AnnotationError", "ConfigError", "DataIOError", "EvaluationError", "FormatError",
    "PlacementError", "ToolkitError", "ValidationError",
]
