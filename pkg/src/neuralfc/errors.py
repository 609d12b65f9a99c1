"""Exception hierarchy shared across the pipeline.

Each class carries the process exit code the CLI maps it to.
"""


class NeuralFCError(Exception):
    exit_code = 1


class ParameterError(NeuralFCError, ValueError):
    """A numeric argument is outside its allowed domain."""

    exit_code = 2


class ConfigError(NeuralFCError):
    """A config file is missing keys or holds unparseable values."""

    exit_code = 2


class SimulationDiverged(NeuralFCError, FloatingPointError):
    exit_code = 4


class FormatError(NeuralFCError):
    """A model blob is truncated, has a bad header or inconsistent dims."""

    exit_code = 5


class CorruptionError(FormatError):
    """CRC mismatch on a model blob."""


class BudgetError(NeuralFCError):
    """Static footprint of a model exceeds the configured RAM budget."""

    exit_code = 3


class TrainingDiverged(NeuralFCError):
    exit_code = 4


class FlightFailed(NeuralFCError):
    exit_code = 6


class SchemaError(NeuralFCError):
    """Telemetry CSV does not match the documented column layout."""

    exit_code = 7
