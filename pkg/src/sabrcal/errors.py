"""Exception hierarchy shared by every module of the package."""


class SabrError(Exception):
    """Base class for all package errors."""


class DomainError(SabrError, ValueError):
    """An argument lies outside the domain of the operation."""


class NumericDomainError(DomainError, ArithmeticError):
    """An intermediate quantity left its real domain (log of a non-positive number, ...)."""


class ConstraintError(DomainError):
    """Time-dependent model parameters violate rho(t) in [-1, 1] or nu(t) > 0."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = tuple(violations)


class ParseError(SabrError, ValueError):
    """Malformed input file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(SabrError, ValueError):
    """Well-formed input that breaks a data invariant."""


class ConfigError(SabrError, ValueError):
    """Invalid run configuration."""
