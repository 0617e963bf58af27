"""Exception hierarchy shared by every module."""

from __future__ import annotations


class VarBridgeError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(VarBridgeError, ValueError):
    pass


class NumericalError(VarBridgeError, ArithmeticError):
    pass


class DomainError(NumericalError):
    """Argument outside the mathematical domain of an operation (e.g. var <= 0)."""


class TrainingDivergedError(NumericalError):
    def __init__(self, message: str, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


class UnsupportedOperationError(VarBridgeError):
    pass


class ConfigError(VarBridgeError, ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
