from __future__ import annotations


class HdrmError(Exception):
    """Base class for every failure the library raises on purpose.

    ``exit_code`` is what the CLI returns when the error escapes a command.
    """

    exit_code = 1


class ConfigError(HdrmError):
    exit_code = 2


class DataError(HdrmError):
    exit_code = 3


class NumericError(HdrmError):
    exit_code = 4


class ManifoldConfigError(ConfigError):
    """Invalid curvature/dimension or points from two different manifolds."""


class ManifoldDimensionError(NumericError):
    pass


class ManifoldNumericError(NumericError):
    pass


class ParseError(DataError):
    """Malformed interaction line; carries the 1-based line number."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class EmptyDatasetError(DataError):
    pass


class NegativeSamplingError(DataError):
    pass


class NoiseInjectionError(DataError):
    pass


class MissingArtifactError(DataError):
    """A command needs an artifact an earlier command should have produced."""


class CheckpointError(DataError):
    pass


class ClusterError(HdrmError):
    pass


class ShapeError(NumericError):
    pass


class CacheMissingError(HdrmError):
    pass


class DiffusionNumericError(NumericError):
    pass


class TrainingDivergedError(NumericError):
    pass


class NonFiniteScoreError(NumericError):
    """A score function returned NaN or infinite values."""
