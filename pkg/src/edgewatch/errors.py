"""Exception hierarchy shared across the workbench."""


class EdgewatchError(Exception):
    """Base class for all workbench errors."""


class InstanceError(EdgewatchError):
    """A game instance violates a structural invariant."""


class InstanceMismatchError(EdgewatchError):
    """An action is not valid for the instance it was used with."""


class EnumerationOverflowError(EdgewatchError):
    """An exact operation would exceed the configured enumeration cap."""


class DegenerateInstanceError(EdgewatchError):
    """An operation requires at least two actions but the space has one."""


class InconsistencyError(EdgewatchError):
    """An action walks through a child the policy mask marks invalid."""


class TrainingAbortError(EdgewatchError):
    """Training hit a non-finite quantity and cannot proceed."""


class GenerationError(EdgewatchError):
    """A graph generator could not produce a feasible instance."""


class ConfigError(EdgewatchError):
    """A scenario configuration failed to parse or validate."""


class SchemaError(EdgewatchError):
    """A CSV file does not conform to its declared schema."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CheckpointError(EdgewatchError):
    """A policy checkpoint is malformed or belongs to another instance."""
