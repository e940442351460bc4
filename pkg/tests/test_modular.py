import math
import random
import threading

import gmpy2
import mpmath
import pytest
from gmpy2 import mpc, mpfr

from jinvert.errors import DomainError, PrecisionError
from jinvert.fundamental import reduce_to_F
from jinvert.modular import (
    QBOUND,
    SPECIAL_BOUNDS,
    compute_j_coefficients,
    hypergeom_16_56,
    j_agm,
    j_coefficients,
    j_derivative,
    j_eval,
    j_qseries,
    j_theta,
    low_precision_inverse,
    rho,
    special_derivatives,
)
from jinvert.phi2 import phi2_eval
from jinvert.precision import working
from oracles import mpc_to_mp, j_ref, random_gamma, random_in_F, rel_err_log2

# c(-1), c(0), ..., c(5) of j, OEIS A000521
KNOWN_COEFFICIENTS = [1, 744, 196884, 21493760, 864299970, 20245856256, 333202640600]


def sqrt3i(bits):
    with working(bits):
        return mpc(0, gmpy2.sqrt(mpfr(3)))


def test_coefficients_match_published_values():
    assert list(j_coefficients(5)) == KNOWN_COEFFICIENTS


def test_coefficients_are_cached_consistently_across_threads():
    out = []
    threads = [threading.Thread(target=lambda n=n: out.append(j_coefficients(n))) for n in (50, 300, 120, 400)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    ref = compute_j_coefficients(400)
    for c in out:
        assert list(c) == ref[: len(c)]


def test_coefficient_bound_dominates_and_is_monotone():
    c = j_coefficients(300)
    prev = 0
    for n in range(1, 301):
        b = QBOUND.coefficient_bound(n)
        assert abs(c[n + 1]) <= b
        assert b > prev
        prev = b


@pytest.mark.parametrize("f", [j_qseries, j_theta])
def test_j_at_i(f):
    assert f(mpc(0, 1), 256).value == 1728


@pytest.mark.parametrize("f", [j_qseries, j_theta])
def test_j_at_rho(f):
    assert abs(f(rho(300), 256).value) < 2.0 ** -250


@pytest.mark.parametrize("f", [j_qseries, j_theta, j_agm])
def test_j_at_i_sqrt3(f):
    v = f(sqrt3i(1200), 1100).value
    with working(1200):
        assert abs(v - 54000) < gmpy2.mul_2exp(mpfr(1), -1080)


def test_j_at_2i_is_root_of_phi2():
    assert phi2_eval(1728, 287496) == 0
    v = j_qseries(mpc(0, 2), 512).value
    with working(600):
        assert abs(v - 287496) <= 287496 * 2.0 ** -512


def test_qseries_refuses_small_imaginary_part():
    with pytest.raises(PrecisionError):
        j_qseries(mpc(0.1, 0.4), 100)
    with pytest.raises(PrecisionError):
        j_theta(mpc(0.1, 0.4), 100)


def test_qseries_rejects_lower_half_plane():
    with pytest.raises(DomainError):
        j_qseries(mpc(0, -1), 100)


def test_qseries_against_mpmath():
    rng = random.Random(11)
    for _ in range(30):
        t = random_in_F(rng, max_im=6, bits=600)
        assert rel_err_log2(j_qseries(t, 512).value, j_ref(t, 512)) <= -512


def test_theta_matches_qseries():
    rng = random.Random(12)
    for _ in range(100):
        with working(400):
            t = mpc(mpfr(rng.uniform(-0.5, 0.5)), mpfr(rng.uniform(0.9, 3.2)))
        assert rel_err_log2(j_theta(t, 300).value, j_qseries(t, 340).value) <= -300


def test_agm_matches_qseries_at_high_precision():
    rng = random.Random(13)
    for _ in range(5):
        t = random_in_F(rng, bits=4200)
        assert rel_err_log2(j_agm(t, 4096).value, j_qseries(t, 4200).value) <= -4096


def test_j_eval_reduces_first():
    with working(600):
        t = mpc(mpfr(3) + mpfr("0.2"), mpfr("0.3"))
    ref = j_ref(t, 512)
    assert rel_err_log2(j_eval(t, 512).value, ref) <= -500


def test_modularity():
    rng = random.Random(14)
    for _ in range(50):
        t = random_in_F(rng, bits=400)
        a, b, c, d = random_gamma(rng)
        with working(600):
            gt = (a * t + b) / (c * t + d)
        ref = j_qseries(t, 256).value
        assert rel_err_log2(j_eval(gt, 256).value, ref) <= -256 + 8


def test_q_dominance():
    rng = random.Random(15)
    for _ in range(200):
        t = random_in_F(rng, max_im=8, min_dist=0, bits=200)
        v = j_theta(t, 128).value
        with working(200):
            q_inv = gmpy2.exp(mpc(0, -2) * gmpy2.const_pi() * t)
            assert abs(v - q_inv) <= 2079


def test_special_derivative_intervals():
    sd = special_derivatives()
    for name, (lo, hi) in SPECIAL_BOUNDS.items():
        assert lo <= abs(complex(getattr(sd, name))) <= hi
    assert 49600 <= abs(complex(j_derivative(mpc(0, 1), 2, 128))) <= 49700
    assert 274000 <= abs(complex(j_derivative(rho(200), 3, 128))) <= 275000
    assert 334000 <= abs(complex(j_derivative(sqrt3i(200), 1, 128))) <= 334600


def test_first_derivative_vanishes_at_elliptic_points():
    assert abs(j_derivative(mpc(0, 1), 1, 200).value) < 2.0 ** -180
    assert abs(j_derivative(rho(300), 1, 200).value) < 2.0 ** -180
    assert abs(j_derivative(rho(300), 2, 200).value) < 2.0 ** -170


def test_derivative_invalid_order():
    with pytest.raises(DomainError):
        j_derivative(mpc(0, 1), 4, 100)


@pytest.mark.parametrize("seed", range(5))
def test_derivative_matches_finite_difference(seed):
    rng = random.Random(seed)
    p = 300
    t = random_in_F(rng, bits=p + 200)
    h = gmpy2.mul_2exp(mpfr(1), -(p // 3))
    with working(p + 200):
        fd = (j_qseries(t + h, p + 100).value - j_qseries(t - h, p + 100).value) / (2 * h)
    d = j_derivative(t, 1, p).value
    with working(p + 200):
        assert abs(d - fd) <= 2.0 ** (-p / 3 + 16) * max(1, abs(d))


def test_hypergeom_at_zero():
    assert hypergeom_16_56(0, 128).value == 1


def test_hypergeom_against_mpmath_and_partial_sum():
    p = 256
    v = hypergeom_16_56(mpfr("0.5"), p).value
    with mpmath.workprec(2 * p):
        ref = mpmath.hyp2f1(mpmath.mpf(1) / 6, mpmath.mpf(5) / 6, 1, mpmath.mpf("0.5"))
        term, partial = mpmath.mpf(1), mpmath.mpf(0)
        for k in range(10000):
            partial += term
            term *= (k + mpmath.mpf(1) / 6) * (k + mpmath.mpf(5) / 6) / (k + 1) ** 2 * mpmath.mpf("0.5")
        assert abs(ref - partial) < mpmath.mpf(2) ** (-2 * p + 8)
        assert abs(mpmath.mpc(str(v.real)) - ref) < mpmath.mpf(2) ** -p * 4


def test_hypergeom_complex_argument_against_mpmath():
    with working(300):
        z = mpc("0.3+0.4j")
    v = hypergeom_16_56(z, 200).value
    with mpmath.workprec(300):
        ref = mpmath.hyp2f1(mpmath.mpf(1) / 6, mpmath.mpf(5) / 6, 1, mpc_to_mp(z))
        assert abs(mpmath.mpc(str(v.real), str(v.imag)) - ref) < mpmath.mpf(2) ** -195


def test_hypergeom_symmetric_point():
    a = hypergeom_16_56(mpfr("0.5"), 128).value
    b = hypergeom_16_56(1 - mpfr("0.5"), 128).value
    assert a == b


@pytest.mark.parametrize("z", [mpfr("0.95"), mpc("0.5+0.8j"), mpc("0.97+0.01j")])
def test_hypergeom_domain(z):
    with pytest.raises(DomainError):
        hypergeom_16_56(z, 128)


def test_low_precision_inverse_special_values():
    assert abs(complex(low_precision_inverse(1728)) - 1j) < 1e-30
    assert abs(complex(low_precision_inverse(287496)) - 2j) < 1e-30
    assert abs(complex(low_precision_inverse(54000)) - 1j * math.sqrt(3)) < 1e-30


def test_low_precision_inverse_accuracy():
    rng = random.Random(16)
    for _ in range(40):
        t = random_in_F(rng, max_im=3.5, min_dist=2.0 ** -20, bits=300)
        j = j_ref(t, 256)
        t0 = low_precision_inverse(j).value
        with working(300):
            assert abs(t0 - t) <= 2.0 ** -90


def test_low_precision_inverse_near_zero():
    with working(300):
        t = rho(300) + mpc("1e-6+1e-6j")
    t0 = low_precision_inverse(j_ref(t, 256)).value
    with working(300):
        assert abs(t0 - reduce_to_F(t, 256).tau.value) <= 2.0 ** -90


def test_low_precision_inverse_rejects_zero():
    with pytest.raises(DomainError):
        low_precision_inverse(0)
