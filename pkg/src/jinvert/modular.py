"""Evaluation of the modular j-function and related series.

Three evaluation paths are provided:

* ``j_qseries``: the q-expansion with exact integer coefficients and a
  rigorous tail bound; this is the reference implementation.
* ``j_theta``: eighth powers of the theta constants, O(sqrt(p)) terms.
* ``j_agm``: Newton iteration on the AGM relation between theta quotients and
  tau, which costs O(log p) full-precision multiplications.

``j_eval`` picks one of them. The module also holds the Gauss hypergeometric
series 2F1(1/6, 5/6; 1; z) used to produce a low-precision inverse of j.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from functools import lru_cache

import gmpy2
from gmpy2 import mpc, mpfr

from . import telemetry
from .errors import ConvergenceError, DomainError, NumericalError, PrecisionError
from .fundamental import reduce_to_F
from .precision import (
    GUARD_BITS,
    SPARE_BITS,
    ApproxComplex,
    PrecisionClaim,
    PrecisionKind,
    approx,
    check_bits,
    log2_abs,
    to_mpc,
    working,
)

LN2 = math.log(2)
TWO_PI = 2 * math.pi

# precision from which the AGM path is used by j_eval
AGM_MIN_BITS = 1024
# above this imaginary part lambda is tiny and theta series converge fast anyway
AGM_MAX_IM = 3.5


# ---------------------------------------------------------------------------
# exact q-expansion coefficients

def _partition_numbers(n: int) -> list[int]:
    p = [0] * (n + 1)
    p[0] = 1
    for m in range(1, n + 1):
        total, k = 0, 1
        while True:
            g1 = k * (3 * k - 1) // 2
            if g1 > m:
                break
            sign = 1 if k % 2 else -1
            total += sign * p[m - g1]
            g2 = k * (3 * k + 1) // 2
            if g2 <= m:
                total += sign * p[m - g2]
            k += 1
        p[m] = total
    return p


def _kronecker_mul(a: list[int], b: list[int], n: int) -> list[int]:
    """First ``n`` coefficients of a*b for polynomials with nonnegative coefficients."""
    bound = max(a) * max(b) * min(len(a), len(b))
    slot = bound.bit_length() // 8 + 2
    pa = int.from_bytes(b"".join(x.to_bytes(slot, "little") for x in a), "little")
    pb = int.from_bytes(b"".join(x.to_bytes(slot, "little") for x in b), "little")
    prod = int(gmpy2.mpz(pa) * gmpy2.mpz(pb))
    raw = prod.to_bytes(slot * (len(a) + len(b)), "little")
    return [int.from_bytes(raw[i * slot:(i + 1) * slot], "little") for i in range(n)]


def _sigma3(n: int) -> list[int]:
    s = [0] * (n + 1)
    for d in range(1, n + 1):
        d3 = d ** 3
        for m in range(d, n + 1, d):
            s[m] += d3
    return s


def compute_j_coefficients(n: int) -> list[int]:
    """Return c(-1), c(0), ..., c(n) of j = sum c(k) q^k, computed exactly as E4^3/Delta."""
    m = n + 2
    s3 = _sigma3(m)
    e4 = [1] + [240 * s3[k] for k in range(1, m)]
    p = _partition_numbers(m - 1)
    p2 = _kronecker_mul(p, p, m)
    p4 = _kronecker_mul(p2, p2, m)
    p8 = _kronecker_mul(p4, p4, m)
    p16 = _kronecker_mul(p8, p8, m)
    p24 = _kronecker_mul(p16, p8, m)
    e4sq = _kronecker_mul(e4, e4, m)
    e4cube = _kronecker_mul(e4sq, e4, m)
    return _kronecker_mul(e4cube, p24, m)


class _CoefficientCache:
    """Append-only cache; readers see an immutable tuple, writers are serialized."""

    def __init__(self):
        self._lock = threading.Lock()
        self._data: tuple[int, ...] = ()

    def get(self, n: int) -> tuple[int, ...]:
        """Coefficients c(-1)..c(n) (possibly more)."""
        data = self._data
        if len(data) >= n + 2:
            return data
        with self._lock:
            if len(self._data) < n + 2:
                size = max(n, 2 * (len(self._data) - 2), 64)
                self._data = tuple(compute_j_coefficients(size))
            return self._data


_COEFFS = _CoefficientCache()


def j_coefficients(n: int) -> tuple[int, ...]:
    """Exact coefficients c(-1)..c(n) of the q-expansion of j."""
    return _COEFFS.get(n)[: n + 2]


@dataclass(frozen=True)
class QExpansionBound:
    """|c(n)| <= factor * exp(4*pi*sqrt(n)); derivatives pick up (2*pi*n)^k."""

    factor: float = 4.0

    def coefficient_bound(self, n: int, order: int = 0) -> mpfr:
        with working(64):
            pi = gmpy2.const_pi()
            return self.factor * (2 * pi * n) ** order * gmpy2.exp(4 * pi * gmpy2.sqrt(mpfr(n)))

    def log_term(self, n: int, y: float, order: int = 0) -> float:
        """Natural log of the bound on the n-th term at Im(tau) = y."""
        return (math.log(self.factor) + order * math.log(TWO_PI * n)
                + 4 * math.pi * math.sqrt(n) - TWO_PI * n * y)

    def truncation(self, y: float, bits: int, order: int = 0) -> int:
        """Smallest N whose tail sum_{n>N} of term bounds is <= 2^-bits."""
        target = -bits * LN2
        n = 1
        while True:
            m = n + 1
            ratio = ((m + 1) / m) ** order * math.exp(TWO_PI / math.sqrt(m) - TWO_PI * y)
            if ratio < 0.99:
                tail = self.log_term(m, y, order) - math.log1p(-ratio)
                if tail <= target:
                    return n
            n += 1


QBOUND = QExpansionBound()


def _as_tau(tau, bits: int) -> mpc:
    z = to_mpc(tau, bits)
    if z.imag <= 0:
        raise DomainError("tau must lie in the upper half-plane")
    return z


def _qseries(tau, p: int, order: int) -> ApproxComplex:
    p = check_bits(p)
    src = _as_tau(tau, max(p, tau.precision if isinstance(tau, ApproxComplex) else p) + GUARD_BITS)
    y = float(src.imag)
    if y < 0.5:
        raise PrecisionError(f"q-series tail bound needs Im(tau) >= 0.5, got {y:.6g}")
    wp = p + GUARD_BITS + max(0, math.ceil(math.log2(1 + abs(complex(src))))) + 8 * order
    N = QBOUND.truncation(y, p + 8, order)
    coeffs = j_coefficients(N)
    telemetry.record("exp", wp)
    telemetry.record("mul", wp, N + 1)
    with working(wp):
        t = mpc(src)
        two_pi_i = mpc(0, 2 * gmpy2.const_pi())
        q = gmpy2.exp(two_pi_i * t)
        s = mpc(0)
        for n in range(N, 0, -1):
            s = (s + coeffs[n + 1] * n ** order) * q
        if order == 0:
            s += coeffs[1]
        s += (-1) ** order / q
        if order:
            s *= two_pi_i ** order
    return approx(s, p, spare=SPARE_BITS)


def j_qseries(tau, p: int) -> ApproxComplex:
    """j(tau) from the q-expansion, regulated error at most 2^-p; needs Im(tau) >= 0.5."""
    return _qseries(tau, p, 0)


def j_derivative(tau, order: int, p: int) -> ApproxComplex:
    """The ``order``-th derivative of j (order 1, 2 or 3) by the differentiated q-series."""
    if order not in (1, 2, 3):
        raise DomainError(f"derivative order must be 1, 2 or 3, got {order}")
    return _qseries(tau, p, order)


# ---------------------------------------------------------------------------
# theta constants

def theta_constants(tau: mpc, bits: int) -> tuple[mpc, mpc, mpc]:
    """(theta2, theta3, theta4) at nome exp(i*pi*tau), evaluated at the current precision.

    Terms are dropped once |q|^(n^2) falls below 2^-bits.
    """
    y = float(tau.imag)
    if y <= 0:
        raise DomainError("theta constants need Im(tau) > 0")
    # |q|^(n^2) = exp(-pi y n^2)
    nmax = int(math.sqrt((bits + 8) * LN2 / (math.pi * y))) + 2
    pi = gmpy2.const_pi()
    q = gmpy2.exp(mpc(0, pi) * tau)
    q2 = q * q
    # theta3, theta4 terms q^(n^2); theta2 terms q^(n(n+1))
    t3 = mpc(1)
    t4 = mpc(1)
    t2 = mpc(1)
    sq = q          # q^(n^2)
    odd = q         # q^(2n-1)
    pr = mpc(1)     # q^(n(n-1))
    even = mpc(1)   # q^(2n-2)
    for n in range(1, nmax + 1):
        if n > 1:
            odd *= q2
            sq *= odd
            even *= q2
        t3 += 2 * sq
        t4 += -2 * sq if n % 2 else 2 * sq
        if n > 1:
            pr *= even
            t2 += pr
    # pr now ends at q^(nmax(nmax-1)); one more term keeps theta2 consistent with the bound
    t2 += pr * even * q2
    t2 *= 2 * gmpy2.exp(mpc(0, pi) * tau / 4)
    telemetry.record("mul", gmpy2.get_context().precision, 6 * nmax + 4)
    telemetry.record("exp", gmpy2.get_context().precision, 2)
    return t2, t3, t4


def j_theta(tau, p: int) -> ApproxComplex:
    """j(tau) as 32 (t2^8 + t3^8 + t4^8)^3 / (t2 t3 t4)^8."""
    p = check_bits(p)
    src = _as_tau(tau, max(p, tau.precision if isinstance(tau, ApproxComplex) else p) + GUARD_BITS)
    if float(src.imag) < 0.5:
        raise PrecisionError("theta evaluation is certified only for Im(tau) >= 0.5")
    wp = p + GUARD_BITS + math.ceil(4.6 * float(src.imag))
    with working(wp):
        t = mpc(src)
        t2, t3, t4 = theta_constants(t, wp)
        a, b, c = t2 ** 8, t3 ** 8, t4 ** 8
        r = 32 * (a + b + c) ** 3 / (t2 * t3 * t4) ** 8
    telemetry.record("mul", wp, 12)
    return approx(r, p, spare=SPARE_BITS)


# ---------------------------------------------------------------------------
# AGM path

def _agm1(b: mpc, bits: int) -> mpc:
    """AGM(1, b) with the 'good' square root at each step."""
    a = mpc(1)
    eps = gmpy2.mul_2exp(mpfr(1), -bits + 4)
    steps = 0
    limit = 4 * bits.bit_length() + 64
    while abs(a - b) > eps * abs(a):
        a1 = (a + b) / 2
        b1 = gmpy2.sqrt(a * b)
        if abs(a1 - b1) > abs(a1 + b1):
            b1 = -b1
        a, b = a1, b1
        steps += 1
        if steps > limit:
            raise ConvergenceError("AGM failed to converge")
    telemetry.record("mul", bits, 2 * steps)
    telemetry.record("sqrt", bits, steps)
    return (a + b) / 2


def _tau_of_z(z: mpc, kref: mpc, bits: int) -> tuple[mpc, mpc]:
    """tau = i AGM(1, z) / AGM(1, k) with k^2 = 1 - z^2, k on the side of kref."""
    k = gmpy2.sqrt(1 - z * z)
    if abs(k - kref) > abs(k + kref):
        k = -k
    telemetry.record("sqrt", bits)
    return mpc(0, 1) * _agm1(z, bits) / _agm1(k, bits), k


def j_agm(tau, p: int) -> ApproxComplex:
    """j(tau) by Newton iteration on z = theta4^2/theta3^2 through the AGM.

    The map z -> tau is inverted with a precision ladder (each level doubles the
    number of correct bits), after which j follows from lambda = 1 - z^2.
    """
    p = check_bits(p)
    point = reduce_to_F(tau, p + GUARD_BITS).tau
    y = float(point.im)
    if y > AGM_MAX_IM:
        return j_theta(point, p)
    guard = 32 + math.ceil(4.6 * y)
    top = p + guard
    with working(64):
        t2, t3, t4 = theta_constants(to_mpc(point, 64), 64)
        z = t4 ** 2 / t3 ** 2
        kref = t2 ** 2 / t3 ** 2
    ladder = []
    bits = top
    while bits > 48:
        ladder.append(bits)
        bits = bits // 2 + guard // 2
    ladder.reverse()
    for bits in ladder:
        with working(bits):
            t = to_mpc(point, bits)
            z = mpc(z)
            f0, kref = _tau_of_z(z, kref, bits)
            h = gmpy2.mul_2exp(mpfr(1), -(bits // 2))
            f1, _ = _tau_of_z(z + h, kref, bits)
            z = z - (f0 - t) * h / (f1 - f0)
    with working(top):
        lam = 1 - z * z
        r = 256 * (1 - lam + lam * lam) ** 3 / (lam * lam * (1 - lam) ** 2)
    telemetry.record("mul", top, 8)
    return approx(r, p, spare=SPARE_BITS)


def j_eval(tau, p: int) -> ApproxComplex:
    """j(tau) for any tau in the upper half-plane, to regulated error 2^-p."""
    p = check_bits(p)
    point = reduce_to_F(tau, p + GUARD_BITS).tau
    if j_method(point, p) == "agm":
        return j_agm(point, p)
    return j_theta(point, p)


def j_method(point, p: int) -> str:
    """Name of the evaluator ``j_eval`` uses for a reduced point: "agm" or "theta"."""
    im = point.im if isinstance(point, ApproxComplex) else to_mpc(point).imag
    return "agm" if p >= AGM_MIN_BITS and float(im) <= AGM_MAX_IM else "theta"


# ---------------------------------------------------------------------------
# derivative constants at the elliptic points

@dataclass(frozen=True)
class SpecialDerivatives:
    j2_at_i: mpc
    j3_at_rho: mpc
    j1_at_2i: mpc
    j1_at_i_sqrt3: mpc


# accepted ranges for |j''(i)|, |j'''(rho)| and |j'(i sqrt 3)|
SPECIAL_BOUNDS = {
    "j2_at_i": (49600, 49700),
    "j3_at_rho": (274000, 275000),
    "j1_at_i_sqrt3": (334000, 334600),
}


def rho(bits: int) -> mpc:
    with working(bits):
        return mpc(mpfr(1) / 2, gmpy2.sqrt(mpfr(3)) / 2)


@lru_cache(maxsize=1)
def special_derivatives() -> SpecialDerivatives:
    """Derivatives of j at i, rho, 2i and i*sqrt(3), computed once at 128 bits."""
    bits = 128
    with working(bits):
        i = mpc(0, 1)
        sqrt3 = gmpy2.sqrt(mpfr(3))
    vals = SpecialDerivatives(
        j2_at_i=j_derivative(i, 2, bits).value,
        j3_at_rho=j_derivative(rho(bits), 3, bits).value,
        j1_at_2i=j_derivative(mpc(0, 2), 1, bits).value,
        j1_at_i_sqrt3=j_derivative(mpc(0, sqrt3), 1, bits).value,
    )
    for name, (lo, hi) in SPECIAL_BOUNDS.items():
        v = float(abs(getattr(vals, name)))
        if not lo <= v <= hi:
            raise NumericalError(f"|{name}| = {v} outside [{lo}, {hi}]")
    return vals


# ---------------------------------------------------------------------------
# 2F1(1/6, 5/6; 1; z)

def _hyp_terms(z: mpc, bits: int):
    """Yield (k, t_k) for t_k = (1/6)_k (5/6)_k / k!^2 z^k until the tail is below 2^-bits."""
    az = float(abs(z))
    t = mpc(1)
    k = 0
    log_stop = -bits - 8 + math.log2(1 - az) if az < 1 else -math.inf
    while True:
        yield k, t
        t = t * z * ((6 * k + 1) * (6 * k + 5)) / (36 * (k + 1) ** 2)
        k += 1
        # term ratio is below |z|, so the tail after t is at most |t| / (1 - |z|)
        if log2_abs(t) < log_stop or gmpy2.is_zero(t.real) and gmpy2.is_zero(t.imag):
            telemetry.record("mul", bits, k)
            return


def hypergeom_16_56(z, p: int) -> ApproxComplex:
    """2F1(1/6, 5/6; 1; z) by its power series, valid for |z| <= 0.9 and |1 - z| >= 0.05."""
    p = check_bits(p)
    wp = p + GUARD_BITS
    w = to_mpc(z, wp)
    with working(wp):
        if abs(w) > mpfr("0.9") or abs(1 - w) < mpfr("0.05"):
            raise DomainError("hypergeometric series used outside |z| <= 0.9, |1-z| >= 0.05")
        s = mpc(0)
        for _, t in _hyp_terms(w, wp):
            s += t
    return approx(s, p, spare=SPARE_BITS)


def _hypergeom_reflected(alpha: mpc, bits: int) -> mpc:
    """2F1(1/6, 5/6; 1; 1 - alpha) for |alpha| <= 0.9 via the logarithmic connection series.

    Uses 2F1(a, 1-a; 1; 1-x) = (1/(2 pi)) sum_k t_k (h_k - log x) x^k with
    h_0 = log 432 and h_{k+1} = h_k + 2/(k+1) - 1/(k+1/6) - 1/(k+5/6).
    """
    la = gmpy2.log(alpha)
    # |h_k - log x| <= 7 + |log x| for all k
    extra = math.ceil(math.log2(7 + float(abs(la))))
    h = gmpy2.log(mpfr(432))
    s = mpc(0)
    for k, t in _hyp_terms(alpha, bits + extra):
        s += t * (h - la)
        h += mpfr(2) / (k + 1) - mpfr(6) / (6 * k + 1) - mpfr(6) / (6 * k + 5)
    telemetry.record("log", bits, 2)
    return s / (2 * gmpy2.const_pi())


def _cube_root_start(j: mpc, j3: mpc, bits: int) -> mpc:
    eps = gmpy2.exp(gmpy2.log(6 * j / j3) / 3) if not gmpy2.is_zero(abs(j)) else mpc(0)
    return rho(bits) + eps


def _newton_refine(tau: mpc, j: mpc, bits: int, iterations: int = 60) -> mpc:
    """Damped Newton on j(t) = j near a reasonable start, evaluated by the q-series."""
    best = tau
    f_best = abs(j_qseries(tau, bits).value - j)
    for _ in range(iterations):
        d = j_derivative(best, 1, bits).value
        if gmpy2.is_zero(abs(d)):
            break
        step = (j_qseries(best, bits).value - j) / d
        lam = mpfr(1)
        while True:
            cand = best - lam * step
            if cand.imag > 0.5:
                f = abs(j_qseries(cand, bits).value - j)
                if f < f_best:
                    break
            lam /= 2
            if lam < mpfr(2) ** -20:
                return best
        best, f_best = cand, f
        if abs(lam * step) <= gmpy2.mul_2exp(mpfr(1), -bits + 8):
            break
    return best


def low_precision_inverse(j_tilde, bits: int = 128) -> ApproxComplex:
    """A point tau0 of the fundamental domain with j(tau0) close to j_tilde.

    Works at a fixed precision (128 bits by default). With alpha the root of
    j = 1728 / (4 alpha (1 - alpha)) satisfying |alpha| <= |1 - alpha|, tau is
    i 2F1(1 - alpha) / 2F1(alpha) up to SL2(Z). Near j = 0, where alpha is close
    to the unit circle, a cube-root Taylor start refined by Newton is used.
    """
    bits = check_bits(bits)
    src_bits = j_tilde.precision if isinstance(j_tilde, ApproxComplex) else bits
    jj = to_mpc(j_tilde, max(src_bits, bits) + GUARD_BITS)
    with working(max(src_bits, bits) + GUARD_BITS):
        if gmpy2.is_zero(abs(jj)):
            raise DomainError("j = 0 is handled by the rho shortcut")
        # bits lost forming 1 - 1728/j near j = 1728
        gap = log2_abs(jj - 1728)
        loss = max(0.0, log2_abs(jj) - gap) if math.isfinite(gap) else 0.0
    wp = bits + GUARD_BITS + min(math.ceil(loss), 4 * bits)
    with working(wp):
        j = mpc(jj)
        s = gmpy2.sqrt(1 - 1728 / j)
        if s.real < 0:
            s = -s
        alpha = 864 / (j * (1 + s))
        telemetry.record("div", wp, 3)
        telemetry.record("sqrt", wp)
        candidates = []
        if abs(alpha) <= mpfr("0.9"):
            f_alpha = mpc(0)
            for _, t in _hyp_terms(alpha, wp):
                f_alpha += t
            ratio = _hypergeom_reflected(alpha, wp) / f_alpha
            t0 = mpc(0, 1) * ratio
            candidates = [t0, -1 / t0]
        else:
            sd = special_derivatives()
            candidates = [_newton_refine(_cube_root_start(j, sd.j3_at_rho, wp), j, wp)]
        tol = gmpy2.mul_2exp(mpfr(1), -bits // 2) * max(mpfr(1), abs(j))
    for cand in candidates:
        if cand.imag <= 0:
            continue
        point = reduce_to_F(cand, wp).tau
        residual = abs(j_theta(point, bits).value - j)
        if residual <= tol:
            return ApproxComplex.of(to_mpc(point, bits), PrecisionClaim(PrecisionKind.ABSOLUTE, 90))
    raise ConvergenceError("low-precision inverse failed its forward check")
