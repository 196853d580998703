"""Exception types shared across the kernel, scheme and cost-model layers."""

from __future__ import annotations


class CkksError(RuntimeError):
    """Base class for every error raised by this package."""


class ConfigurationError(CkksError):
    """Raised when parameters, moduli or ring sizes are unusable."""


class RepresentationError(CkksError):
    """Raised when a polynomial is in the wrong (coefficient/evaluation) form."""


class BasisMismatchError(CkksError):
    """Raised when operands live over different limb bases."""


class ScheduleError(CkksError):
    """Raised when a cost-model level schedule or usage log is inconsistent."""


class SerializationError(CkksError):
    """Raised when an artifact file cannot be decoded."""


__all__ = [
    "CkksError",
    "ConfigurationError",
    "RepresentationError",
    "BasisMismatchError",
    "ScheduleError",
    "SerializationError",
]
