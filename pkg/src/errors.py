"""
Errors module with the exception hierarchy shared by every part of the lab.
The CLI maps each class to a process exit code in one place (see main.py).
"""

from typing import Optional


class LabError(Exception):
    """Base class for every error raised by the laboratory."""


class GridError(LabError):
    """A grid (or its dimension) was rejected, or is too coarse for the request."""


class FieldError(LabError):
    """A field has non-finite samples, the wrong length, or lives on another grid."""


class SpecError(LabError):
    """A FieldSpec was used in a way its variant does not support."""


class NoRootError(LabError):
    """The scaling derivative has no sign change inside the search bracket."""


class EmptyConstraintError(LabError):
    """No member of a sampled family satisfies the requested constraint."""


class ConfigError(LabError):
    """An experiment file is missing, unreadable, or fails validation."""


class GateViolation(LabError):
    """A completed run contradicts the scattering/blow-up dichotomy."""


class SolverError(LabError):
    """
    Time stepping failed.

    Carries whatever part of the trace was recorded before the failure so the
    harness can still flush it to disk.
    """

    def __init__(self, message: str, trace: Optional["SimulationTrace"] = None):
        """
        Initialize a new SolverError.

        Args:
            message: What went wrong
            trace: The partial trace recorded up to the failure, if any
        """
        super().__init__(message)
        self.trace = trace
