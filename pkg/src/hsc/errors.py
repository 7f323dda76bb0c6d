"""Exception hierarchy shared by every hsc module.

All errors derive from :class:`HSCError`; the CLI maps them to exit codes.
"""

from __future__ import annotations


class HSCError(Exception):
    """Base class for all toolkit errors."""


class MalformedFileError(HSCError):
    pass


class InvalidDataError(HSCError):
    def __init__(self, message: str, index: int | None = None) -> None:
        super().__init__(message)
        self.index = index


class LabelCountError(HSCError):
    pass


class EmptyInputError(HSCError):
    pass


class InvalidParameterError(HSCError, ValueError):
    pass


class ContractViolationError(HSCError, ValueError):
    pass


class DecodeUnderrunError(HSCError):
    pass


class FormatError(HSCError):
    pass


class CorruptionError(HSCError):
    pass


class ConfigError(HSCError):
    pass


class MissingLabelsError(HSCError):
    pass


class InsufficientPointsError(HSCError):
    pass


class DivisionDomainError(HSCError, ZeroDivisionError):
    pass


class OversizeError(HSCError):
    pass


class ProtocolError(HSCError):
    pass


class TransportError(HSCError):
    pass


class SpecError(HSCError):
    pass
