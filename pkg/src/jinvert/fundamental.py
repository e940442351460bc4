"""Reduction of upper half-plane points into the fundamental domain of SL2(Z).

The domain is the half-open region

    -1/2 < Re(tau) <= 1/2 and |tau| > 1,  plus the arc |tau| = 1 with Re(tau) >= 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import gmpy2
from gmpy2 import mpc, mpfr

from .errors import ConvergenceError, DomainError
from .precision import (
    GUARD_BITS,
    ApproxComplex,
    PrecisionClaim,
    PrecisionKind,
    check_bits,
    log2_abs,
    to_mpc,
    working,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class UnimodularMatrix:
    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        for name in "abcd":
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v:
                raise DomainError(f"matrix entry {name} is not an integer: {v!r}")
            object.__setattr__(self, name, int(v))
        if self.a * self.d - self.b * self.c != 1:
            raise DomainError(f"determinant of {self} is not 1")

    @classmethod
    def identity(cls) -> UnimodularMatrix:
        return cls(1, 0, 0, 1)

    @classmethod
    def translation(cls, n: int) -> UnimodularMatrix:
        return cls(1, n, 0, 1)

    @classmethod
    def inversion(cls) -> UnimodularMatrix:
        return cls(0, -1, 1, 0)

    def __matmul__(self, other: UnimodularMatrix) -> UnimodularMatrix:
        return UnimodularMatrix(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def inverse(self) -> UnimodularMatrix:
        return UnimodularMatrix(self.d, -self.b, -self.c, self.a)

    def is_identity(self) -> bool:
        # -I acts trivially as well
        return (self.b, self.c) == (0, 0) and self.a == self.d

    def apply(self, tau: mpc) -> mpc:
        """Moebius action at the current gmpy2 precision."""
        return (self.a * tau + self.b) / (self.c * tau + self.d)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.a, self.b, self.c, self.d)


@dataclass(frozen=True)
class FundamentalPoint:
    tau: ApproxComplex
    reducer: UnimodularMatrix


def default_tolerance(p: int) -> mpfr:
    return gmpy2.mul_2exp(mpfr(1), -int(p) + 8)


def _in_F(z: mpc, tol) -> bool:
    x, y = z.real, z.imag
    if y <= 0:
        return False
    if x <= mpfr(-0.5) + tol or x > mpfr(0.5) + tol:
        return False
    r2 = x * x + y * y
    if abs(r2 - 1) <= tol:
        return x >= -tol
    return r2 > 1


def in_F(tau, tol=None) -> bool:
    """Membership in the fundamental domain, comparing boundaries at ``tol``."""
    bits = tau.precision if isinstance(tau, ApproxComplex) else gmpy2.get_context().precision
    z = to_mpc(tau, bits + GUARD_BITS)
    with working(bits + GUARD_BITS):
        t = default_tolerance(bits) if tol is None else mpfr(tol)
        return _in_F(z, t)


def reduce_to_F(tau, p: int) -> FundamentalPoint:
    """Map ``tau`` into the fundamental domain; returns the point and the matrix used."""
    p = check_bits(p)
    src_bits = tau.precision if isinstance(tau, ApproxComplex) else p
    z0 = to_mpc(tau, max(src_bits, p) + GUARD_BITS)
    if z0.imag <= 0:
        raise DomainError("reduction requires Im(tau) > 0")
    # points close to the real axis lose bits in the final Moebius evaluation
    extra = max(0, math.ceil(-2 * log2_abs(z0.imag)))
    wp = max(src_bits, p) + GUARD_BITS + extra
    M = UnimodularMatrix.identity()
    S = UnimodularMatrix.inversion()
    with working(wp):
        z = mpc(z0)
        tol = default_tolerance(p)
        half = mpfr(0.5)
        limit = 64 + 8 * wp
        for it in range(limit):
            n = int(gmpy2.ceil(z.real - half))
            if n:
                z = z - n
                M = UnimodularMatrix.translation(-n) @ M
            if gmpy2.norm(z) < 1 - tol:
                z = -1 / z
                M = S @ M
                continue
            break
        else:
            raise ConvergenceError(f"reduction did not terminate after {limit} steps")
        # canonical representatives on the boundary
        if z.real <= -half + tol:
            z = z + 1
            M = UnimodularMatrix.translation(1) @ M
        if abs(gmpy2.norm(z) - 1) <= tol and z.real < -tol:
            z = -1 / z
            M = S @ M
        log.debug("reduced in %d steps, reducer %s", it + 1, M.as_tuple())
        out = M.apply(z0)
    with working(p):
        out = mpc(out)
    point = ApproxComplex.of(out, PrecisionClaim(PrecisionKind.ABSOLUTE, p - 8))
    return FundamentalPoint(point, M)
