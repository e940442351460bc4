"""Deciding whether an algebraic j-invariant is a singular modulus.

Given an approximation to an algebraic number j of degree at most d whose
Mahler measure is at most H^d, ``is_cm`` decides whether j = j(tau) for an
imaginary quadratic tau and, if so, returns the discriminant of tau.

The procedure inverts j to a point z0 of the fundamental domain, reads off
Re(z0) and Im(z0)^2 as rationals via continued fractions, and accepts when z0
lies within a Liouville-type separation radius of the quadratic point those
rationals define. Discriminants with |D| <= 16 are tested directly first.
All logarithms here are natural.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import gmpy2
from gmpy2 import mpc, mpfr

from .errors import DomainError, InconsistencyError, PrecisionError
from .fundamental import FundamentalPoint, reduce_to_F
from .inversion import MIN_INVERSION_BITS, invert
from .modular import j_eval
from .precision import (
    GUARD_BITS,
    ApproxComplex,
    PrecisionClaim,
    PrecisionKind,
    log2_abs,
    to_mpc,
    working,
)

log = logging.getLogger(__name__)

E_E = math.exp(math.e)
SMALL_DISCRIMINANTS = (-3, -4, -7, -8, -11, -12, -15, -16)


def _check_dh(d: int, H) -> tuple[int, float]:
    if isinstance(d, bool) or int(d) != d or int(d) < 1:
        raise DomainError(f"degree bound must be a positive integer, got {d!r}")
    h = float(H)
    if not h >= E_E * (1 - 1e-12):
        raise DomainError(f"height bound must be at least e^e, got {H!r}")
    return int(d), max(h, E_E)


def _complexity(d: int, H) -> float:
    """d^2 ln H (ln d + ln ln H)^2."""
    d, h = _check_dh(d, H)
    lh = math.log(h)
    return d * d * lh * (math.log(d) + math.log(lh)) ** 2


def required_precision(d: int, H) -> int:
    """Bits of regulated precision the input j must carry (never below 400)."""
    return max(MIN_INVERSION_BITS, math.ceil(300 * _complexity(d, H) + 200))


def max_discriminant(d: int, H) -> int:
    """Largest |D| a singular modulus of degree <= d and height <= H can have."""
    d, h = _check_dh(d, H)
    return math.floor(d * d * math.log(h) ** 2 / 9.7)


def _check_discriminant(D: int) -> int:
    if isinstance(D, bool) or int(D) != D or int(D) >= 0 or int(D) % 4 not in (0, 1):
        raise DomainError(f"not a negative discriminant: {D!r}")
    return int(D)


def class_number_bound(D: int) -> float:
    """(3 / 2 pi) sqrt|D| (2 + ln|D|), an upper bound for h(D)."""
    n = abs(_check_discriminant(D))
    return 3 / (2 * math.pi) * math.sqrt(n) * (2 + math.log(n))


def log_mahler_bound(D: int) -> float:
    """Bound 5.9 pi sqrt|D| (ln|D|)^2 on ln M(j(tau)) for tau of discriminant D."""
    n = abs(_check_discriminant(D))
    return 5.9 * math.pi * math.sqrt(n) * math.log(n) ** 2


def separation_log(d: int, H) -> float:
    """ln of the separation radius."""
    return -31 * _complexity(d, H) - 21


def separation_bound(d: int, H) -> mpfr:
    """exp(-31 d^2 ln H (ln d + ln ln H)^2 - 21).

    A point z0 of the fundamental domain within this distance of a quadratic
    tau with small enough discriminant has j(z0) = j(tau) whenever j(z0) is
    algebraic of degree <= d and height <= H. Returned as an mpfr since it
    underflows doubles for moderate d and H.
    """
    with working(64):
        return gmpy2.exp(mpfr(separation_log(d, H)))


def cf_tolerance(d: int, H) -> float:
    """19^-3 d^-8 (ln H)^-8, the stopping distance for the continued fractions."""
    d, h = _check_dh(d, H)
    return 19.0 ** -3 * float(d) ** -8 * math.log(h) ** -8


# ---------------------------------------------------------------------------
# binary quadratic forms

@dataclass(frozen=True, order=True)
class BinaryQuadraticForm:
    """a x^2 + b xy + c y^2 with negative discriminant and a > 0."""

    a: int
    b: int
    c: int

    def __post_init__(self):
        for name in "abc":
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v:
                raise DomainError(f"form coefficient {name} is not an integer: {v!r}")
            object.__setattr__(self, name, int(v))
        if self.a <= 0 or self.D >= 0:
            raise DomainError(f"{self.as_tuple()} is not positive definite")

    @property
    def D(self) -> int:
        return self.b * self.b - 4 * self.a * self.c

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.a, self.b, self.c)

    def is_primitive(self) -> bool:
        return math.gcd(self.a, self.b, self.c) == 1

    def is_reduced(self) -> bool:
        """|b| <= a <= c with b <= 0 on the boundary, so that the root lies in F."""
        a, b, c = self.a, self.b, self.c
        if not abs(b) <= a <= c:
            return False
        if abs(b) == a or a == c:
            return b <= 0
        return True

    def reduce(self) -> BinaryQuadraticForm:
        a, b, c = self.a, self.b, self.c
        while True:
            if c < a:
                a, b, c = c, -b, a
                continue
            # bring b into (-a, a]
            k = (a - b) // (2 * a)
            if k:
                b, c = b + 2 * a * k, a * k * k + b * k + c
                continue
            break
        if b == a or (a == c and b > 0):
            b = -b
        return BinaryQuadraticForm(a, b, c)

    def root(self, bits: int) -> mpc:
        """(-b + i sqrt|D|) / 2a, the root in the upper half-plane."""
        with working(bits):
            return mpc(-self.b, gmpy2.sqrt(mpfr(-self.D))) / (2 * self.a)

    def root_parts(self) -> tuple[Fraction, Fraction]:
        """(Re(root), Im(root)^2) as exact rationals."""
        return Fraction(-self.b, 2 * self.a), Fraction(-self.D, 4 * self.a * self.a)


def reduced_forms(D: int, primitive: bool = True) -> list[BinaryQuadraticForm]:
    """All reduced forms of discriminant D, primitive ones only by default."""
    D = _check_discriminant(D)
    out = []
    a = 1
    while 3 * a * a <= -D:
        for b in range(-a, a + 1):
            num = b * b - D
            if num % (4 * a):
                continue
            c = num // (4 * a)
            f = BinaryQuadraticForm(a, b, c)
            if f.is_reduced() and (f.is_primitive() or not primitive):
                out.append(f)
        a += 1
    return out


def class_number(D: int) -> int:
    return len(reduced_forms(D))


# ---------------------------------------------------------------------------
# continued fractions

@dataclass(frozen=True)
class ConvergentPair:
    """Rational approximations c_r to Re(z0) and c_i to Im(z0)^2."""

    c_r: Fraction
    c_i: Fraction

    @property
    def height_r(self) -> int:
        return rational_height(self.c_r)

    @property
    def height_i(self) -> int:
        return rational_height(self.c_i)


def rational_height(x: Fraction) -> int:
    return max(abs(x.numerator), x.denominator)


def _exact(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int) and not isinstance(x, bool):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x)
    if isinstance(x, mpfr):
        if not gmpy2.is_finite(x):
            raise DomainError("continued fraction of a non-finite number")
        q = gmpy2.mpq(x)
        return Fraction(int(q.numerator), int(q.denominator))
    if isinstance(x, type(gmpy2.mpq(0))):
        return Fraction(int(x.numerator), int(x.denominator))
    raise TypeError(f"cannot expand {type(x).__name__} as a continued fraction")


def convergents(x):
    """Yield the convergents p/q of the exact value of ``x`` in order."""
    r = _exact(x)
    p0, q0, p1, q1 = 0, 1, 1, 0
    while True:
        a = r.numerator // r.denominator
        p0, q0, p1, q1 = p1, q1, a * p1 + p0, a * q1 + q0
        yield Fraction(p1, q1)
        frac = r - a
        if frac == 0:
            return
        r = 1 / frac


def cf_convergents(x, stop_tol, error=0) -> Fraction:
    """First convergent of ``x`` within ``stop_tol`` of it.

    ``error`` bounds |x - true value|; it must not exceed stop_tol / 4,
    otherwise the convergent found says nothing about the true value.
    """
    tol = _exact(stop_tol)
    if tol <= 0:
        raise DomainError("stopping tolerance must be positive")
    err = _exact(error)
    if err > tol / 4:
        raise PrecisionError(f"value known to {float(err):.3g}, need {float(tol / 4):.3g}")
    r = _exact(x)
    for c in convergents(r):
        if abs(r - c) <= tol:
            return c
    raise AssertionError("continued fraction ended away from its value")  # pragma: no cover


def _point_error(z0: ApproxComplex) -> mpfr:
    """Absolute error bound implied by the precision claim of ``z0``."""
    bits = z0.claim.bits if z0.claim else z0.precision
    with working(64):
        scale = max(mpfr(1), abs(z0.value))
        return gmpy2.mul_2exp(scale, -bits)


def recognize_quadratic(z0, d: int, H) -> ConvergentPair | None:
    """Rationals (c_r, c_i) close to (Re z0, Im(z0)^2), or None if their heights are too large.

    Heights are max(|numerator|, denominator). The real part is rejected above
    d^2 (ln H)^2 / 9.7 and the squared imaginary part above d^4 (ln H)^4 / 90.
    """
    d, h = _check_dh(d, H)
    z0 = ApproxComplex.of(z0)
    tol = cf_tolerance(d, h)
    err = _point_error(z0)
    bits = z0.precision + GUARD_BITS
    with working(bits):
        x = z0.re
        y2 = z0.im * z0.im
        err_y2 = 3 * abs(z0.im) * err + err * err
    c_r = cf_convergents(x, tol, err)
    c_i = cf_convergents(y2, tol, err_y2)
    lh = math.log(h)
    if rational_height(c_r) > d * d * lh * lh / 9.7:
        log.debug("real convergent %s too high", c_r)
        return None
    if rational_height(c_i) > d ** 4 * lh ** 4 / 90:
        log.debug("imaginary convergent %s too high", c_i)
        return None
    return ConvergentPair(c_r, c_i)


def discriminant_from_convergents(c_r, c_i) -> BinaryQuadraticForm:
    """The primitive form whose root is c_r + i sqrt(c_i).

    The root satisfies x^2 - 2 c_r x + (c_r^2 + c_i) = 0; clearing denominators
    with the least possible leading coefficient gives the primitive form.
    """
    c_r, c_i = Fraction(c_r), Fraction(c_i)
    if c_i <= 0:
        raise InconsistencyError(f"squared imaginary part must be positive, got {c_i}")
    lin = -2 * c_r
    const = c_r * c_r + c_i
    a = math.lcm(lin.denominator, const.denominator)
    form = BinaryQuadraticForm(a, int(lin * a), int(const * a))
    if form.root_parts() != (c_r, c_i) or not form.is_primitive():
        raise InconsistencyError(f"no integral form has root {c_r} + i sqrt({c_i})")
    return form


# ---------------------------------------------------------------------------
# the test

@dataclass(frozen=True)
class AlgebraicInput:
    """An approximation to an algebraic j with degree <= d and Mahler measure <= H^d."""

    j_approx: ApproxComplex
    degree_bound: int
    height_bound: float

    def __post_init__(self):
        d, h = _check_dh(self.degree_bound, self.height_bound)
        object.__setattr__(self, "degree_bound", d)
        object.__setattr__(self, "height_bound", h)
        j = ApproxComplex.of(self.j_approx)
        if j.claim is None:
            j = j.with_claim(PrecisionClaim(PrecisionKind.REGULATED, j.precision))
        object.__setattr__(self, "j_approx", j)

    @classmethod
    def exact(cls, j, d: int, H) -> AlgebraicInput:
        """Input from an exact value (int, Fraction, or a callable bits -> mpc)."""
        bits = required_precision(d, H)
        if callable(j):
            value = to_mpc(j(bits + GUARD_BITS), bits + GUARD_BITS)
        elif isinstance(j, (Fraction, type(gmpy2.mpq(0)))):
            with working(bits + GUARD_BITS):
                value = mpc(mpfr(gmpy2.mpq(j)), 0)
        else:
            value = to_mpc(j, bits + GUARD_BITS)
        claim = PrecisionClaim(PrecisionKind.REGULATED, bits)
        return cls(ApproxComplex.of(value, claim), d, H)

    @property
    def precision(self) -> int:
        return self.j_approx.claim.bits

    @property
    def required_bits(self) -> int:
        return required_precision(self.degree_bound, self.height_bound)


@dataclass(frozen=True)
class CMResult:
    is_cm: bool
    form: BinaryQuadraticForm | None = None
    tau: FundamentalPoint | None = None
    certificate: dict = field(default_factory=dict)

    @property
    def discriminant(self) -> int | None:
        return self.form.D if self.form else None


def small_disc_threshold_log2(d: int, H) -> float:
    """log2 of 2^-2d H^-2d (3 10^6)^-d."""
    d, h = _check_dh(d, H)
    return -2 * d - 2 * d * math.log2(h) - d * math.log2(3e6)


def small_disc_bits(d: int, H) -> int:
    """Absolute precision at which the listed j(tau) are compared."""
    d, h = _check_dh(d, H)
    return math.ceil(4 * d * (33 + math.log(h))) + 2


@lru_cache(maxsize=None)
def _small_disc_points() -> tuple[BinaryQuadraticForm, ...]:
    return tuple(f for D in SMALL_DISCRIMINANTS for f in reduced_forms(D))


def _input_error_log2(inp: AlgebraicInput) -> float:
    return -inp.precision + max(0.0, log2_abs(inp.j_approx))


def small_disc_test(inp: AlgebraicInput) -> CMResult | None:
    """CM verdict when j is one of the singular moduli with |D| <= 16, else None."""
    d, h = inp.degree_bound, inp.height_bound
    bits = small_disc_bits(d, h)
    threshold = small_disc_threshold_log2(d, h)
    j = inp.j_approx
    slack = max(_input_error_log2(inp), -bits) + 1
    if slack >= threshold:
        raise PrecisionError("input too coarse for the small-discriminant comparison")
    with working(64):
        margin = mpfr(2) ** threshold - mpfr(2) ** slack
    wp = max(bits, inp.precision) + GUARD_BITS
    for form in _small_disc_points():
        # |j(tau)| < 2^18 here, so these extra bits turn regulated into absolute
        value = j_eval(form.root(wp), bits + 20)
        with working(wp):
            dist = abs(to_mpc(j, wp) - value.value)
        if dist <= margin:
            tau = reduce_to_F(form.root(wp), bits)
            cert = {
                "stage": "small_discriminant",
                "distance_log2": log2_abs(dist),
                "threshold_log2": threshold,
                "comparison_bits": bits,
            }
            return CMResult(True, form, tau, cert)
    return None


def is_cm(inp: AlgebraicInput) -> CMResult:
    """Decide whether the algebraic number approximated by ``inp`` is a singular modulus."""
    d, h = inp.degree_bound, inp.height_bound
    need = inp.required_bits
    if inp.precision < need:
        raise PrecisionError(f"input carries {inp.precision} bits, {need} required")
    hit = small_disc_test(inp)
    if hit is not None:
        return hit
    res = invert(inp.j_approx, need)
    z0 = res.tau.tau
    cert: dict = {
        "stage": "inversion",
        "required_bits": need,
        "inversion_bits": res.achieved_bits,
        "regime": res.regime.value,
    }
    pair = recognize_quadratic(z0, d, h)
    if pair is None:
        cert["rejected"] = "convergent height"
        return CMResult(False, certificate=cert)
    cert["c_r"], cert["c_i"] = str(pair.c_r), str(pair.c_i)
    try:
        form = discriminant_from_convergents(pair.c_r, pair.c_i)
    except InconsistencyError as exc:
        cert["rejected"] = str(exc)
        return CMResult(False, certificate=cert)
    bound = max_discriminant(d, h)
    cert["max_discriminant"] = bound
    if abs(form.D) > bound and abs(form.D) > 16:
        cert["rejected"] = "discriminant bound"
        return CMResult(False, certificate=cert)
    wp = z0.precision + GUARD_BITS
    tau = form.root(wp)
    with working(wp):
        dist = abs(z0.value - tau)
        err = _point_error(z0)
        total = dist + err
    sep = separation_log(d, h) / math.log(2)
    cert["distance_log2"] = log2_abs(total)
    cert["separation_log2"] = sep
    if log2_abs(total) > sep:
        cert["rejected"] = "separation"
        return CMResult(False, certificate=cert)
    form = form.reduce()
    return CMResult(True, form, reduce_to_F(form.root(wp), z0.precision), cert)
