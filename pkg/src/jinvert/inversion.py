"""Inversion of j: given an approximation to j(tau), recover tau in the fundamental domain.

The input is split into regimes:

* ``AtRho`` / ``AtI``: j is so close to 0 or 1728 that rho or i is already
  the answer to the achievable precision.
* ``Large``: |j| is large, so tau has large imaginary part. Newton on the
  level-2 modular polynomial computes j(2^k tau) until -log(j)/(2 pi i) is
  accurate, then the result is divided by 2^k.
* ``NearI`` / ``NearRho``: tau is close to an elliptic point where j is not
  locally invertible at full precision. A Taylor start gives j(2 tau) via the
  modular polynomial, whose preimage is well conditioned.
* ``Compact``: everything else, solved by the secant method from a
  hypergeometric starting point.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import gmpy2
from gmpy2 import mpc, mpfr

from .errors import CertificationError, ConvergenceError, DomainError, JInvertError, PrecisionError
from .fundamental import FundamentalPoint, UnimodularMatrix, reduce_to_F
from .modular import j_derivative, j_eval, low_precision_inverse, rho, special_derivatives
from .phi2 import (
    KantorovichCertificate,
    large_certificate,
    large_start,
    near_i_certificate,
    near_rho_certificate,
    newton_solve,
    specialize,
)
from .precision import (
    GUARD_BITS,
    ApproxComplex,
    PrecisionClaim,
    PrecisionKind,
    check_bits,
    complex_root,
    log2_abs,
    to_mpc,
    working,
)

log = logging.getLogger(__name__)

MIN_INVERSION_BITS = 400
# |tau0 - i| or |tau0 - rho| below 2^-31 selects the ramification procedures
RAMIFICATION_LOG2 = -31
# |j| above e^(6 pi) + 2079 forces Im(tau) >= 3
LARGE_J = math.exp(6 * math.pi) + 2079
LARGE_J_MIN = 1e8
# intermediate relative precision in the doubling chain must stay above 2^-300
CHAIN_FLOOR_BITS = 300


class Regime(Enum):
    AT_RHO = "AtRho"
    AT_I = "AtI"
    LARGE = "Large"
    NEAR_I = "NearI"
    NEAR_RHO = "NearRho"
    COMPACT = "Compact"


RAMIFIED = frozenset({Regime.AT_RHO, Regime.AT_I, Regime.NEAR_I, Regime.NEAR_RHO})


@dataclass(frozen=True)
class InversionResult:
    tau: FundamentalPoint
    achieved_bits: int
    kind: PrecisionKind
    regime: Regime
    doublings: int = 0
    newton_steps: tuple[int, ...] = ()
    certificates: tuple[KantorovichCertificate, ...] = ()
    secant_iterations: int = 0
    inner: InversionResult | None = field(default=None, repr=False)


def output_bits(regime: Regime, p: int) -> int:
    """Guaranteed output precision Q for input precision p."""
    if regime in RAMIFIED:
        return p // 6
    return math.floor(p - max(11 * math.log2(p), 100))


def _check_input_bits(p) -> int:
    p = check_bits(p)
    if p < MIN_INVERSION_BITS:
        raise PrecisionError(f"inversion needs at least {MIN_INVERSION_BITS} bits, got {p}")
    return p


def _input(j_tilde, p: int) -> mpc:
    src = j_tilde.precision if isinstance(j_tilde, ApproxComplex) else 0
    return to_mpc(j_tilde, max(src, p + GUARD_BITS))


def _result(tau: mpc, p: int, regime: Regime, reducer=None, **extra) -> InversionResult:
    q = output_bits(regime, p)
    if reducer is None:
        point = reduce_to_F(tau, p)
    else:
        with working(p):
            point = FundamentalPoint(ApproxComplex.of(mpc(tau), PrecisionClaim(PrecisionKind.RELATIVE, q)), reducer)
    point = FundamentalPoint(point.tau.with_claim(PrecisionClaim(PrecisionKind.RELATIVE, q)), point.reducer)
    return InversionResult(point, q, PrecisionKind.RELATIVE, regime, **extra)


def _low_precision_start(j: mpc) -> ApproxComplex:
    err: JInvertError | None = None
    for bits in (128, 256, 512):
        try:
            return low_precision_inverse(j, bits)
        except ConvergenceError as exc:
            err = exc
    raise ConvergenceError(f"no low-precision preimage found: {err}")


def _classify(j_tilde, p: int) -> tuple[Regime, ApproxComplex | None]:
    p = _check_input_bits(p)
    j = _input(j_tilde, p)
    a = log2_abs(j)
    if a <= -p / 2:
        return Regime.AT_RHO, None
    with working(j.precision[0] + 8):
        b = log2_abs(j - 1728)
    if b <= -p / 3:
        return Regime.AT_I, None
    if a >= math.log2(LARGE_J):
        return Regime.LARGE, None
    # so close to 1728 or 0 that tau is certainly within 2^-40 of i or rho
    if b <= -80:
        return Regime.NEAR_I, None
    if a <= -120:
        return Regime.NEAR_RHO, None
    tau0 = _low_precision_start(j)
    with working(tau0.precision):
        t = tau0.value
        r = rho(tau0.precision)
        radius = gmpy2.mul_2exp(mpfr(1), RAMIFICATION_LOG2)
        if abs(t - mpc(0, 1)) <= radius:
            return Regime.NEAR_I, tau0
        if abs(t - r) <= radius or abs(t - (r - 1)) <= radius:
            return Regime.NEAR_RHO, tau0
        if t.imag >= 3:
            return Regime.LARGE, tau0
    return Regime.COMPACT, tau0


def classify(j_tilde, p: int) -> Regime:
    """Which inversion procedure applies to ``j_tilde`` at precision ``p`` (p >= 400)."""
    return _classify(j_tilde, p)[0]


# ---------------------------------------------------------------------------
# large |j|

def large_newton_steps(p: int, log2_abs_j: float) -> int:
    return math.ceil(2 * math.log2(p) + 2 * math.log2(max(log2_abs_j, 2.0)))


def _tau_from_log(j: mpc, bits: int) -> mpc:
    """i log(j) / (2 pi), the representative of tau mod 1 with |j - e^(-2 pi i tau)| small."""
    with working(bits):
        return mpc(0, 1) * gmpy2.log(j) / (2 * gmpy2.const_pi())


def invert_large(j_tilde, p: int) -> InversionResult:
    """Inversion for |j| >= 10^8 by repeated doubling of tau through Phi2."""
    p = _check_input_bits(p)
    wp = p + GUARD_BITS
    current = _input(j_tilde, p)
    if log2_abs(current) < math.log2(LARGE_J_MIN):
        raise DomainError("large-j inversion needs |j| >= 10^8")
    cert = large_certificate(p)
    if not cert.ok:
        raise CertificationError("Kantorovich condition fails for the doubling step")
    est_bits = 128
    # estimate of tau, carried along so the real part survives the doublings
    tau_est = _tau_from_log(current, est_bits)
    k = 0
    steps: list[int] = []
    while log2_abs(current) < p + 12:
        if p - 3 * (k + 1) < CHAIN_FLOOR_BITS:
            raise CertificationError("precision of the doubling chain would fall below 2^-300")
        n = large_newton_steps(p, log2_abs(current))
        with working(wp):
            start = large_start(current)
        current = newton_solve(specialize(current, p), start, n, p).value
        k += 1
        steps.append(n)
        t = _tau_from_log(current, est_bits + k)
        with working(est_bits + k):
            m = int(gmpy2.rint(tau_est.real * 2 ** k - t.real))
            tau_est = (t + m) / 2 ** k
        log.debug("doubling %d: log2|j| = %.1f, %d Newton steps", k, log2_abs(current), n)
    t = _tau_from_log(current, wp + k)
    with working(wp + k):
        m = int(gmpy2.rint(tau_est.real * 2 ** k - t.real))
        tau = (t + m) / 2 ** k
    return _result(tau, p, Regime.LARGE, doublings=k, newton_steps=tuple(steps),
                   certificates=(cert,) * k)


# ---------------------------------------------------------------------------
# near the elliptic points

def _forward_distance(tau: mpc, j: mpc, bits: int) -> mpfr:
    value = j_eval(tau, bits).value
    with working(bits):
        return abs(value - j) / max(mpfr(1), abs(j))


def _disambiguate(candidates: list[mpc], j: mpc, p: int) -> mpc:
    """Pick the candidate whose j-value is closest to ``j`` (escalating the check once)."""
    reduced = [reduce_to_F(c, p).tau.value for c in candidates]
    for bits in (128, 256):
        dists = [_forward_distance(c, j, bits) for c in reduced]
        best = min(range(len(reduced)), key=lambda i: dists[i])
        if log2_abs(dists[best]) <= -24:
            return reduced[best]
    raise ConvergenceError("no candidate preimage matches the input")


def _inner_inversion(w: mpc, p: int) -> InversionResult:
    res = invert(ApproxComplex.of(w), p)
    if res.regime in RAMIFIED:
        raise AssertionError(f"image point landed in regime {res.regime.value}")
    return res


def _ramified_inversion(j_tilde, p: int, order: int, branch: int) -> InversionResult:
    p = _check_input_bits(p)
    wp = p + GUARD_BITS
    j = _input(j_tilde, p)
    sd = special_derivatives()
    if order == 2:
        with working(wp):
            d = j - 1728
        if log2_abs(d) <= -p / 3:
            raise DomainError("|j - 1728| is below the shortcut threshold; the answer is i")
        with working(wp):
            eps = complex_root(2 * d / sd.j2_at_i, 2, p).value
            if branch % 2:
                eps = -eps
            base = mpc(0, 1)
        cert = near_i_certificate(p)
        regime = Regime.NEAR_I
    else:
        if log2_abs(j) <= -p / 2:
            raise DomainError("|j| is below the shortcut threshold; the answer is rho")
        with working(wp):
            eps = complex_root(6 * j / sd.j3_at_rho, 3, p).value
            if branch % 3:
                eps *= gmpy2.exp(mpc(0, 2 * gmpy2.const_pi() * (branch % 3) / 3))
            base = rho(wp)
        cert = near_rho_certificate(p)
        regime = Regime.NEAR_RHO
    if not cert.ok:
        raise CertificationError("Kantorovich condition fails near the elliptic point")
    delta_log2 = log2_abs(eps)
    eval_bits = max(128, math.ceil(-delta_log2) + 64)
    with working(wp):
        tau0 = base + eps
        w0 = j_eval(2 * tau0, eval_bits).value
    steps = math.ceil(2 * math.log2(p))
    w = newton_solve(specialize(j, p), w0, steps, p).value
    inner = _inner_inversion(w, p)
    sigma = inner.tau.tau.value
    with working(wp):
        if order == 2:
            candidates = [sigma / 2, 2 * sigma]
        else:
            candidates = [(sigma + 1) / 2, 2 / (1 - sigma), 1 - 2 / (sigma + 1)]
    tau = _disambiguate(candidates, j, p)
    return _result(tau, p, regime, newton_steps=(steps,), certificates=(cert,), inner=inner)


def invert_near_i(j_tilde, p: int, branch: int = 0) -> InversionResult:
    """Inversion when tau is within about 2^-31 of i; ``branch`` selects the square root."""
    return _ramified_inversion(j_tilde, p, 2, branch)


def invert_near_rho(j_tilde, p: int, branch: int = 0) -> InversionResult:
    """Inversion when tau is within about 2^-31 of rho; ``branch`` selects the cube root."""
    return _ramified_inversion(j_tilde, p, 3, branch)


# ---------------------------------------------------------------------------
# compact region

def _is_zero(z: mpc) -> bool:
    return gmpy2.is_zero(z.real) and gmpy2.is_zero(z.imag)


def _secant_ladder(top: int, accuracy: float, guard: int = GUARD_BITS) -> list[int]:
    """Precisions b_1 < ... < b_n = top with b_i = b_(i+1)/2 + guard, starting near 2*accuracy."""
    levels = [top]
    while levels[-1] > 2 * accuracy and levels[-1] > 2 * guard:
        levels.append(levels[-1] // 2 + guard)
    return levels[::-1]


def _secant(j: mpc, p: int, start_bits: int, tau0: ApproxComplex | None) -> tuple[mpc, int]:
    """Secant iteration on j(z) - j_tilde over a precision ladder.

    From the hypergeometric start tau0 one derivative step gives tau1. Each
    later step at precision b uses the secant through z and z + 2^(-b/2); the
    slope is then good to about b/2 bits, so every step doubles the number of
    correct bits and the top precision is reached after a fixed number of
    evaluations (three at full precision including the final residual check).
    """
    target = p + GUARD_BITS
    tol_log2 = -p + max(0.0, log2_abs(j))
    if tau0 is None or tau0.precision < start_bits:
        tau0 = low_precision_inverse(j, start_bits)
    bits = min(target, 2 * start_bits)
    z0 = to_mpc(tau0, bits)
    f0 = _residual(z0, j, bits)
    d = j_derivative(z0, 1, start_bits).value
    with working(bits):
        newton = f0 / d
        z = z0 - newton
    if _is_zero(newton):
        accuracy = float(bits - 40)
    else:
        accuracy = min(2 * -log2_abs(newton) - 40, bits - 40)
    iterations = 1
    cap = math.ceil(4 * math.log2(p))
    levels = _secant_ladder(target, max(accuracy, 32.0))
    while True:
        for b in levels:
            with working(b):
                z = to_mpc(z, b)
                h = gmpy2.mul_2exp(mpfr(1), -(b // 2))
                f = _residual(z, j, b)
                fh = _residual(z + h, j, b)
                df = fh - f
                if _is_zero(df):
                    raise ConvergenceError("secant slope vanished")
                z = z - f * h / df
            iterations += 1
        f = _residual(z, j, target)
        if log2_abs(f) <= tol_log2:
            return z, iterations
        if iterations >= cap:
            raise ConvergenceError(f"secant did not reach the residual tolerance in {cap} steps")
        levels = [target]


def _residual(z: mpc, j: mpc, bits: int) -> mpc:
    if z.imag <= 0:
        raise ConvergenceError("secant iterate left the upper half-plane")
    value = j_eval(z, bits).value
    with working(bits):
        return value - j


def invert_compact(j_tilde, p: int, tau0: ApproxComplex | None = None,
                   start_bits: int = 128, restarts: int = 3) -> InversionResult:
    """Secant-method inversion away from i, rho and the cusp."""
    p = _check_input_bits(p)
    j = _input(j_tilde, p)
    err: Exception | None = None
    for attempt in range(restarts + 1):
        try:
            z, its = _secant(j, p, start_bits << attempt, tau0 if attempt == 0 else None)
        except (ConvergenceError, DomainError, PrecisionError) as exc:
            log.debug("secant attempt %d failed: %s", attempt, exc)
            err = exc
            continue
        return _result(z, p, Regime.COMPACT, secant_iterations=its)
    raise ConvergenceError(f"input is not consistent with any value of j at the claimed precision ({err})")


# ---------------------------------------------------------------------------

def invert(j_tilde, p: int) -> InversionResult:
    """tau in the fundamental domain with j(tau) = j_tilde, to the precision Q(p)."""
    regime, tau0 = _classify(j_tilde, p)
    log.debug("regime %s at %d bits", regime.value, p)
    if regime is Regime.AT_RHO:
        return _result(rho(p + GUARD_BITS), p, regime, reducer=UnimodularMatrix.identity())
    if regime is Regime.AT_I:
        return _result(mpc(0, 1), p, regime, reducer=UnimodularMatrix.identity())
    if regime is Regime.LARGE:
        return invert_large(j_tilde, p)
    if regime is Regime.NEAR_I:
        return invert_near_i(j_tilde, p)
    if regime is Regime.NEAR_RHO:
        return invert_near_rho(j_tilde, p)
    return invert_compact(j_tilde, p, tau0=tau0)
