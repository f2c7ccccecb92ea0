"""Exception hierarchy shared by every module."""


class GgaeError(Exception):
    """Base class for all package errors."""


class SchemaError(GgaeError):
    """Input header is missing a required column."""


class EmptyInputError(GgaeError):
    """Input contained no data at all."""


class EmptyGraphError(GgaeError):
    """A graph with no nodes or no edges where one is required."""


class DomainError(GgaeError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConfigError(GgaeError, ValueError):
    pass


class DimensionError(GgaeError, ValueError):
    pass


class ContractError(GgaeError):
    """Caller violated an operation precondition."""


class DivergenceError(GgaeError, FloatingPointError):
    """Training produced a non-finite value."""

    def __init__(self, message: str, epoch: int | None = None, run: int | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.run = run

    def __str__(self) -> str:
        msg = super().__str__()
        where = []
        if self.run is not None:
            where.append(f"run {self.run}")
        if self.epoch is not None:
            where.append(f"epoch {self.epoch}")
        return f"{msg} ({', '.join(where)})" if where else msg
