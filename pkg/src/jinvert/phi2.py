"""The level-2 modular polynomial and Newton iteration on its specializations.

For fixed X = j(tau), the roots of Phi2(X, Y) in Y are j(2 tau), j(tau/2) and
j((tau + 1)/2). Newton's method on the cubic Y -> Phi2(j, Y) therefore
doubles (or halves) tau without evaluating j itself.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import gmpy2
from gmpy2 import mpc, mpfr

from . import telemetry
from .errors import ConvergenceError, NumericalError
from .precision import GUARD_BITS, ApproxComplex, approx, check_bits, log2_abs, to_mpc, working

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Phi2Poly:
    """Phi2(X, Y) as a map (i, k) -> coefficient of X^i Y^k."""

    coefficients: tuple[tuple[tuple[int, int], int], ...]

    def coefficient(self, i: int, k: int) -> int:
        return dict(self.coefficients).get((i, k), 0)

    def __call__(self, x, y):
        return phi2_eval(x, y)


PHI2 = Phi2Poly((
    ((3, 0), 1),
    ((0, 3), 1),
    ((2, 2), -1),
    ((2, 1), 1488),
    ((1, 2), 1488),
    ((2, 0), -162000),
    ((0, 2), -162000),
    ((1, 1), 40773375),
    ((1, 0), 8748000000),
    ((0, 1), 8748000000),
    ((0, 0), -157464000000000),
))


def _is_exact(v) -> bool:
    return isinstance(v, (int, Fraction, type(gmpy2.mpz(0)), type(gmpy2.mpq(0)))) and not isinstance(v, bool)


def _cubic_coefficients(x):
    """Coefficients (c2, c1, c0) of Phi2(x, Y) = Y^3 + c2 Y^2 + c1 Y + c0 (works for any ring)."""
    c2 = -x * x + 1488 * x - 162000
    c1 = (1488 * x + 40773375) * x + 8748000000
    c0 = ((x - 162000) * x + 8748000000) * x - 157464000000000
    return c2, c1, c0


def phi2_eval(x, y, p: int | None = None):
    """Phi2(x, y) by Horner's rule.

    Exact integers or rationals give an exact result. Anything else is
    evaluated as a complex number at ``p + 64`` bits (or the current precision).
    """
    if _is_exact(x) and _is_exact(y):
        c2, c1, c0 = _cubic_coefficients(x)
        return ((y + c2) * y + c1) * y + c0
    if p is None:
        wp = gmpy2.get_context().precision
        p = wp
    else:
        wp = check_bits(p) + GUARD_BITS
    with working(wp):
        xx, yy = to_mpc(x, wp), to_mpc(y, wp)
        c2, c1, c0 = _cubic_coefficients(xx)
        r = ((yy + c2) * yy + c1) * yy + c0
    telemetry.record("mul", wp, 6)
    return approx(r, p)


@dataclass(frozen=True)
class Phi2Cubic:
    """z^3 + c2 z^2 + c1 z + c0 = Phi2(j, z) for a fixed first argument j."""

    c2: object
    c1: object
    c0: object
    j: object = None

    def __call__(self, z):
        return ((z + self.c2) * z + self.c1) * z + self.c0

    def derivative(self, z):
        return (3 * z + 2 * self.c2) * z + self.c1

    def second_derivative(self, z):
        return 6 * z + 2 * self.c2

    def coefficient_scale(self) -> float:
        """log2 of 1 + |c2| + |c1| + |c0|, a size measure for residual tolerances."""
        vals = [log2_abs(c) if not _is_exact(c) else math.log2(abs(c) + 1) for c in (self.c2, self.c1, self.c0)]
        return max(0.0, *vals) + 2


def specialize(j_tilde, p: int | None = None) -> Phi2Cubic:
    """The cubic Phi2(j_tilde, z); exact for exact input, else at ``p + 64`` bits."""
    if _is_exact(j_tilde):
        c2, c1, c0 = _cubic_coefficients(j_tilde)
        return Phi2Cubic(c2, c1, c0, j_tilde)
    if p is None:
        src = j_tilde.precision if isinstance(j_tilde, ApproxComplex) else gmpy2.get_context().precision
        wp = src
    else:
        wp = check_bits(p) + GUARD_BITS
    with working(wp):
        x = to_mpc(j_tilde, wp)
        c2, c1, c0 = _cubic_coefficients(x)
    telemetry.record("mul", wp, 5)
    return Phi2Cubic(c2, c1, c0, x)


@dataclass(frozen=True)
class KantorovichCertificate:
    eta: float
    K: float
    h: float
    r: float
    ok: bool
    steps: int | None = None

    def error_bound_log2(self, k: int) -> float:
        """log2 of (1/2^k) (2h)^(2^k) eta / h, the error after k steps."""
        return _kantorovich_log2(self.eta, self.h, k)


def _kantorovich_log2(eta: float, h: float, k: int) -> float:
    if eta == 0:
        return -math.inf
    if h == 0:
        return -math.inf if k > 0 else math.log2(eta)
    two_h = 2 * h
    if two_h >= 1:
        return math.inf if two_h > 1 else -k + math.log2(eta / h)
    return -k + (2 ** k) * math.log2(two_h) + math.log2(eta / h)


def kantorovich_check(eta: float, K: float, r: float, target: float | None = None,
                      target_log2: float | None = None) -> KantorovichCertificate:
    """Check h = K eta <= 1/2 and r >= 2 eta; optionally the step count reaching a bound.

    The bound is given either directly (``target``) or as its base-2 logarithm
    (``target_log2``, for bounds below float range). ``steps`` is the least k
    with (1/2^k)(2h)^(2^k) eta/h under the bound, or None if not reachable.
    """
    eta, K, r = float(eta), float(K), float(r)
    if min(eta, K, r) < 0:
        raise ValueError("Kantorovich quantities must be nonnegative")
    h = K * eta
    ok = h <= 0.5 and r >= 2 * eta
    if target is not None:
        target_log2 = math.log2(target) if target > 0 else -math.inf
    steps = None
    if target_log2 is not None and ok:
        for k in range(0, 64):
            if _kantorovich_log2(eta, h, k) <= target_log2:
                steps = k
                break
    return KantorovichCertificate(eta, K, h, r, ok, steps)


def large_start(j):
    """Newton start for j(2 tau) given j = j(tau) with |j| large: j^2 - 1488 j + 160512."""
    return (j - 1488) * j + 160512


def large_certificate(p: int) -> KantorovichCertificate:
    """Certificate for one doubling step when |j(tau)| >= 10^8.

    Uses |Phi2(j, start)| <= 2^-54 |j|^6, |Phi2'| >= 0.71 |j|^4 and
    |Phi2''| <= 8.3 |j|^2 on a ball of radius 0.009 |j|^2 about the start.
    eta and r are in units of |j|^2, K in units of |j|^-2, so h is exact.
    """
    return kantorovich_check(2.0 ** -54 / 0.71, 8.3 / 0.71, 0.009, target_log2=-(p + 8))


def near_i_certificate(p: int) -> KantorovichCertificate:
    """Certificate for Newton from j(2 tau0) when tau0 = i + delta, in units of |delta|."""
    return kantorovich_check(2.8e13 / 1.7e12, 6.5e5 / 1.7e12, 35, target_log2=-(p // 3 + 8))


def near_rho_certificate(p: int) -> KantorovichCertificate:
    """Certificate for Newton from j(2 tau0) when tau0 = rho + delta, in units of |delta|."""
    return kantorovich_check(2.2e12 / 1.2e12, 1.36e7 / 1.2e12, 4, target_log2=-(p // 3 + 8))


def newton_solve(cubic: Phi2Cubic, z0, steps: int, p: int) -> ApproxComplex:
    """Run exactly ``steps`` Newton iterations at ``p + 64`` bits."""
    z, _ = newton_trace(cubic, z0, steps, p)
    return z


def newton_trace(cubic: Phi2Cubic, z0, steps: int, p: int) -> tuple[ApproxComplex, list[float]]:
    """Newton iterations returning the final iterate and log2 |cubic(z_k)| after each step.

    A growing residual above the rounding floor is treated as divergence.
    """
    p = check_bits(p)
    wp = p + GUARD_BITS
    residuals: list[float] = []
    with working(wp):
        z = to_mpc(z0, wp)
        c = Phi2Cubic(*(to_mpc(v, wp) for v in (cubic.c2, cubic.c1, cubic.c0)))
        if steps <= 0:
            return approx(z, p), residuals
        prev = log2_abs(c(z))
        for k in range(steps):
            f = c(z)
            d = c.derivative(z)
            if gmpy2.is_zero(d.real) and gmpy2.is_zero(d.imag):
                raise NumericalError("zero derivative in Newton iteration")
            z = z - f / d
            cur = log2_abs(c(z))
            if math.isnan(cur):
                raise NumericalError(f"Newton iterate is not finite at step {k + 1}")
            residuals.append(cur)
            # rounding floor: 2^-wp times the largest term of the cubic
            floor = -wp + 8 + max(3 * log2_abs(z), log2_abs(c.c2) + 2 * log2_abs(z),
                                  log2_abs(c.c1) + log2_abs(z), log2_abs(c.c0))
            if cur > prev + 4 and cur > floor:
                raise ConvergenceError(f"Newton residual grew at step {k + 1}")
            prev = min(prev, cur)
    telemetry.record("mul", wp, 7 * steps)
    telemetry.record("div", wp, steps)
    return approx(z, p), residuals
