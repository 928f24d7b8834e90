from typing import Optional


class GlifError(Exception):
    """Base class for all errors raised by glifnet."""


class InvalidParameterError(GlifError, ValueError):
    """A raw or initial parameter value is non-finite or out of range."""


class ShapeError(GlifError, ValueError):
    """Vector lengths or matrix dimensions do not match."""


class TimeIndexError(GlifError, IndexError):
    """A time index lies outside [0, T)."""


class NumericError(GlifError, ArithmeticError):
    """A non-finite value appeared during a forward or backward pass."""

    def __init__(self, message: str, layer: Optional[int] = None, time_step: Optional[int] = None):
        location = []
        if layer is not None:
            location.append(f"layer={layer}")
        if time_step is not None:
            location.append(f"t={time_step}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.layer = layer
        self.time_step = time_step


class DivergenceError(NumericError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, epoch: int, batch: int):
        super().__init__(f"{message} (epoch={epoch}, batch={batch})")
        self.epoch = epoch
        self.batch = batch


class StructuralError(GlifError):
    """A tape or gradient set does not belong to the given network."""


class ParseError(GlifError, ValueError):
    """A data or config file is malformed."""

    def __init__(self, message: str, path: str = "", line: Optional[int] = None, offset: Optional[int] = None):
        where = path
        if line is not None:
            where += f":{line}"
        if offset is not None:
            where += f"@{offset}"
        super().__init__(f"{where}: {message}" if where else message)
        self.path = path
        self.line = line
        self.offset = offset


class EmptyDatasetError(ParseError):
    """A dataset file holds no samples."""


class ConfigError(GlifError, ValueError):
    """An experiment config is invalid."""


class OutputExistsError(GlifError):
    """An output directory already holds artifacts and --overwrite was not given."""
