"""Exception hierarchy shared by the library and the command line."""

from __future__ import annotations


class SaliencyError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(SaliencyError, ValueError):
    """An input file or in-memory structure violates its declared format.

    The CLI maps these to exit code 2.
    """


class PolicyFormatError(FormatError):
    def __init__(self, message: str, layer: int | None = None) -> None:
        self.layer = layer
        if layer is not None:
            message = f"layer {layer}: {message}"
        super().__init__(message)


class SchemaError(FormatError):
    pass


class ChannelError(FormatError):
    """A required episode channel or scalar is missing or malformed."""


class ComputationError(SaliencyError, ArithmeticError):
    """A well-formed input produced an undefined result (exit code 1)."""
