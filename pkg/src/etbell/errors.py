"""Exception hierarchy shared by all etbell modules."""


class EtbellError(Exception):
    """Base class for every error raised by the package."""


class DomainError(EtbellError, ValueError):
    """An argument lies outside the physical domain (bad visibility, non-PSD state, ...)."""


class ConfigError(EtbellError, ValueError):
    pass


class ProcessingError(EtbellError, RuntimeError):
    pass


class UndefinedEstimateError(EtbellError, ValueError):
    pass


class IncompleteDataError(EtbellError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class SingularFitError(EtbellError, ValueError):
    pass


class DegeneratePostselectionError(EtbellError, ValueError):
    pass


class SolverError(EtbellError, RuntimeError):
    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class ParseError(EtbellError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
