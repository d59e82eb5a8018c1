"""Exception types raised by the toolkit."""


class DNSEError(Exception):
    """Base class for all toolkit errors."""


class GridMismatchError(DNSEError, ValueError):
    """Fields or segments that must share a grid do not."""


class DomainError(DNSEError, ValueError):
    """An argument lies outside the region where an operation is defined."""


class IntegrationError(DNSEError, ArithmeticError):
    """Non-finite values appeared during time integration.

    ``substep`` is the index of the substep whose result was non-finite.
    """

    def __init__(self, message: str, substep: int):
        super().__init__(f"{message} (substep {substep})")
        self.substep = substep


class ConfigError(DNSEError, ValueError):
    """Invalid experiment configuration.

    ``line`` is the 1-based line number in the source text when known, and
    ``key`` the offending ``section.key``.
    """

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line
        self.key = key
