"""Certified inversion of the modular j-function and a CM test built on it."""

from .cm import AlgebraicInput, BinaryQuadraticForm, CMResult, is_cm, required_precision
from .errors import (
    CertificationError,
    ConvergenceError,
    DomainError,
    InconsistencyError,
    JInvertError,
    NumericalError,
    PrecisionError,
)
from .fundamental import FundamentalPoint, UnimodularMatrix, in_F, reduce_to_F
from .inversion import InversionResult, Regime, classify, invert
from .modular import j_agm, j_derivative, j_eval, j_qseries, j_theta
from .phi2 import PHI2, newton_solve, phi2_eval, specialize
from .precision import ApproxComplex, PrecisionClaim, PrecisionKind, approx, regulated_error

__all__ = [
    "AlgebraicInput", "ApproxComplex", "BinaryQuadraticForm", "CMResult", "CertificationError",
    "ConvergenceError", "DomainError", "FundamentalPoint", "InconsistencyError", "InversionResult",
    "JInvertError", "NumericalError", "PHI2", "PrecisionClaim", "PrecisionError", "PrecisionKind",
    "Regime", "UnimodularMatrix", "approx", "classify", "in_F", "invert", "is_cm", "j_agm",
    "j_derivative", "j_eval", "j_qseries", "j_theta", "newton_solve", "phi2_eval", "reduce_to_F",
    "regulated_error", "required_precision", "specialize",
]
