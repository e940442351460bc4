"""Arbitrary-precision complex values with explicit precision bookkeeping.

Arithmetic is delegated to MPFR/MPC through gmpy2. Every public routine works
with ``p + GUARD_BITS`` bits and rounds its result to ``p`` bits.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterator, Union

import gmpy2
from gmpy2 import mpc, mpfr

from . import telemetry
from .errors import DomainError, NumericalError, PrecisionError

GUARD_BITS = 64
MIN_BITS = 53
# extra stored bits so that rounding the result does not eat the error budget
SPARE_BITS = 16


class PrecisionKind(Enum):
    ABSOLUTE = "Absolute"
    RELATIVE = "Relative"
    REGULATED = "Regulated"


@dataclass(frozen=True)
class PrecisionClaim:
    kind: PrecisionKind
    bits: int

    def __post_init__(self):
        if int(self.bits) < 0:
            raise PrecisionError(f"negative precision claim: {self.bits}")


def check_bits(p) -> int:
    """Validate a precision parameter (an integer number of bits, at least 53)."""
    if isinstance(p, bool) or not isinstance(p, int):
        try:
            if int(p) != p:
                raise TypeError
        except (TypeError, ValueError):
            raise PrecisionError(f"precision must be an integer, got {p!r}") from None
    p = int(p)
    if p < MIN_BITS:
        raise PrecisionError(f"precision {p} is below the minimum of {MIN_BITS} bits")
    return p


@contextmanager
def working(bits: int) -> Iterator[gmpy2.context]:
    """Run the block with gmpy2 arithmetic rounded to ``bits`` bits."""
    with gmpy2.context(precision=int(bits)) as ctx:
        yield ctx


def _exact_mpfr(x) -> mpfr:
    """Convert a real scalar to mpfr, exactly where the input is exact."""
    if isinstance(x, mpfr):
        return x
    if isinstance(x, (int, type(gmpy2.mpz(0)))) and not isinstance(x, bool):
        return mpfr(x, max(MIN_BITS, int(x).bit_length()))
    if isinstance(x, float):
        return mpfr(x, MIN_BITS)
    if isinstance(x, (Fraction, type(gmpy2.mpq(0)))):
        return mpfr(gmpy2.mpq(x))
    if isinstance(x, str):
        return mpfr(x)
    raise TypeError(f"cannot interpret {type(x).__name__} as a real number")


@dataclass(frozen=True)
class ApproxComplex:
    """A complex number ``re + i*im`` with an optional precision claim.

    The claim is metadata: arithmetic does not enforce it. Components are
    stored as mpfr and must be finite.
    """

    re: mpfr
    im: mpfr
    claim: PrecisionClaim | None = None

    def __post_init__(self):
        re, im = _exact_mpfr(self.re), _exact_mpfr(self.im)
        if not (gmpy2.is_finite(re) and gmpy2.is_finite(im)):
            raise NumericalError("non-finite component in ApproxComplex")
        # normalize -0 so that branch cuts behave as for +0
        if gmpy2.is_zero(re):
            re = mpfr(0)
        if gmpy2.is_zero(im):
            im = mpfr(0)
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)

    @classmethod
    def of(cls, value, claim: PrecisionClaim | None = None) -> ApproxComplex:
        if isinstance(value, ApproxComplex):
            return value if claim is None else cls(value.re, value.im, claim)
        if isinstance(value, mpc):
            return cls(value.real, value.imag, claim)
        if isinstance(value, complex):
            return cls(mpfr(value.real, MIN_BITS), mpfr(value.imag, MIN_BITS), claim)
        return cls(_exact_mpfr(value), mpfr(0), claim)

    @property
    def precision(self) -> int:
        return max(self.re.precision, self.im.precision)

    @property
    def value(self) -> mpc:
        with working(self.precision):
            return mpc(self.re, self.im)

    def with_claim(self, claim: PrecisionClaim | None) -> ApproxComplex:
        return ApproxComplex(self.re, self.im, claim)

    def __complex__(self) -> complex:
        return complex(float(self.re), float(self.im))

    def __abs__(self) -> mpfr:
        with working(self.precision + 2):
            return gmpy2.hypot(self.re, self.im)

    def __repr__(self) -> str:
        c = complex(self)
        claim = f", {self.claim.kind.value}:{self.claim.bits}" if self.claim else ""
        return f"ApproxComplex({c.real!r}{c.imag:+.17g}j, {self.precision}b{claim})"


Number = Union[ApproxComplex, mpc, mpfr, int, float, complex, Fraction, str]


def to_mpc(z: Number, bits: int | None = None) -> mpc:
    """Coerce ``z`` to mpc, rounding to ``bits`` (or the current context) when given."""
    if bits is None:
        bits = gmpy2.get_context().precision
    with working(bits):
        if isinstance(z, ApproxComplex):
            return mpc(z.re, z.im)
        if isinstance(z, mpc):
            return mpc(z)
        if isinstance(z, complex):
            return mpc(z)
        return mpc(_exact_mpfr(z), 0)


def approx(value, bits: int, kind: PrecisionKind = PrecisionKind.REGULATED,
           spare: int = 0) -> ApproxComplex:
    """Round ``value`` to ``bits + spare`` bits and attach a claim of ``bits``."""
    return ApproxComplex.of(to_mpc(value, bits + spare), PrecisionClaim(kind, int(bits)))


def regulated_error(approx_value: Number, reference: Number) -> mpfr:
    """Return ``|approx - reference| / max(1, |reference|)``."""
    a = to_mpc(approx_value, _storage_bits(approx_value))
    r = to_mpc(reference, _storage_bits(reference))
    if not gmpy2.is_finite(r):
        raise NumericalError("reference value is not finite")
    bits = max(a.precision[0], a.precision[1], r.precision[0], r.precision[1]) + GUARD_BITS
    with working(bits):
        diff = abs(a - r)
        scale = abs(r)
        return diff / scale if scale > 1 else diff


def _storage_bits(z) -> int:
    if isinstance(z, ApproxComplex):
        return z.precision
    if isinstance(z, mpc):
        return max(z.precision)
    if isinstance(z, mpfr):
        return z.precision
    if isinstance(z, int):
        return max(MIN_BITS, abs(int(z)).bit_length())
    return max(MIN_BITS, gmpy2.get_context().precision)


def pi_to(p: int) -> mpfr:
    """pi rounded to ``p`` bits (relative error at most 2^-p)."""
    p = max(int(p), 2)
    telemetry.record("pi", p)
    with working(p):
        return gmpy2.const_pi()


def complex_log(z: Number, p: int) -> ApproxComplex:
    """Principal logarithm, imaginary part in (-pi, pi]."""
    p = check_bits(p)
    wp = p + GUARD_BITS
    w = to_mpc(z, max(wp, _storage_bits(z)))
    if gmpy2.is_zero(w.real) and gmpy2.is_zero(w.imag):
        raise DomainError("logarithm of zero")
    telemetry.record("log", wp)
    with working(wp):
        if gmpy2.is_zero(w.imag):
            # keep -1 on the upper side of the cut
            w = mpc(w.real, 0)
        r = gmpy2.log(w)
    return approx(r, p, spare=SPARE_BITS)


def complex_exp(z: Number, p: int) -> ApproxComplex:
    p = check_bits(p)
    wp = p + GUARD_BITS
    telemetry.record("exp", wp)
    with working(wp):
        r = gmpy2.exp(to_mpc(z, wp))
    return approx(r, p, PrecisionKind.RELATIVE, spare=SPARE_BITS)


def complex_root(z: Number, n: int, p: int) -> ApproxComplex:
    """Principal ``n``-th root (argument in (-pi/n, pi/n]) for n in {2, 3}."""
    if n not in (2, 3):
        raise DomainError(f"root index must be 2 or 3, got {n}")
    p = check_bits(p)
    wp = p + GUARD_BITS
    w = to_mpc(z, max(wp, _storage_bits(z)))
    if gmpy2.is_zero(w.real) and gmpy2.is_zero(w.imag):
        return approx(0, p, PrecisionKind.RELATIVE)
    with working(wp):
        if gmpy2.is_zero(w.imag):
            w = mpc(w.real, 0)
        if n == 2:
            telemetry.record("sqrt", wp)
            r = gmpy2.sqrt(w)
        else:
            telemetry.record("log", wp)
            telemetry.record("exp", wp)
            r = gmpy2.exp(gmpy2.log(w) / 3)
    return approx(r, p, PrecisionKind.RELATIVE, spare=SPARE_BITS)


def log2_abs(x) -> float:
    """log2 of |x| as a float, safe for huge and tiny mpfr/mpc values (-inf for 0)."""
    if isinstance(x, ApproxComplex):
        x = abs(x)
    elif isinstance(x, mpc):
        with working(max(x.precision) + 2):
            x = abs(x)
    x = _exact_mpfr(x) if not isinstance(x, mpfr) else x
    if gmpy2.is_zero(x):
        return -math.inf
    e, m = gmpy2.frexp(abs(x))
    return math.log2(float(m)) + e
