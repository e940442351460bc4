"""Exception hierarchy shared by every module."""

from __future__ import annotations


class JInvertError(Exception):
    """Base class for all library errors."""


class DomainError(JInvertError, ValueError):
    """An argument lies outside the region where an operation is defined."""


class PrecisionError(JInvertError):
    """The requested or supplied precision cannot support a certified answer."""


class ConvergenceError(JInvertError):
    """An iteration failed to reach its target."""


class CertificationError(JInvertError):
    """A convergence certificate could not be established."""


class NumericalError(JInvertError, ArithmeticError):
    """A value became zero, infinite or NaN where that is not allowed."""


class InconsistencyError(JInvertError, ValueError):
    """Input data is not consistent with the structure it claims to have."""
