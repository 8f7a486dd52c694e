"""Exception types shared across the package."""

from __future__ import annotations


class PitaError(Exception):
    """Base class for all package errors."""


class ContractError(PitaError, ValueError):
    """A precondition of a public operation was violated."""


class ShapeError(ContractError):
    """Operand shapes are incompatible."""


class SchemaError(PitaError, ValueError):
    """An input file does not follow the expected schema."""


class ConfigError(PitaError, ValueError):
    """A configuration value is invalid or inconsistent."""


class NumericalError(PitaError, ArithmeticError):
    """A computation produced non-finite values or lost definiteness."""
