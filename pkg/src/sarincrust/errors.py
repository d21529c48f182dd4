"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class ToolkitError(Exception):
    exit_code = 1


class ConfigError(ToolkitError, ValueError):
    exit_code = 2


class ValidationError(ConfigError):
    """A value violates a type invariant (e.g. a mask label outside {0,1,2})."""


class DataIOError(ToolkitError, OSError):
    exit_code = 3


class FormatError(DataIOError, ValueError):
    """File header is not one of ours (bad magic, absurd dimensions)."""


class PlacementError(ToolkitError, RuntimeError):
    exit_code = 4


class AnnotationError(ToolkitError, ValueError):
    exit_code = 4


class EvaluationError(ToolkitError, ValueError):
    exit_code = 5


class InternalError(ToolkitError, RuntimeError):
    """A bug guard tripped (inconsistent shapes between pipeline stages)."""
