import math
import random

import gmpy2
import pytest
from gmpy2 import mpc, mpfr
from hypothesis import given
from hypothesis import strategies as st

from jinvert.errors import DomainError
from jinvert.fundamental import UnimodularMatrix, in_F, reduce_to_F
from jinvert.precision import working
from oracles import j_ref, rel_err_log2

P = 200


def point(re, im, bits=P + 64):
    with working(bits):
        return mpc(mpfr(re), mpfr(im))


def test_translation_to_i():
    fp = reduce_to_F(point(1, 1), P)
    assert fp.tau.value == mpc(0, 1)
    assert fp.reducer == UnimodularMatrix.translation(-1)


def test_translation_only():
    fp = reduce_to_F(point(2.5, 2), P)
    assert complex(fp.tau) == 0.5 + 2j
    assert fp.reducer.c == 0


def test_inversion_then_translation():
    tau = point(0.5, 0.5)
    fp = reduce_to_F(tau, P)
    assert abs(complex(fp.tau) - 1j) < 1e-50
    assert rel_err_log2(j_ref(tau, P), j_ref(fp.tau.value, P)) < -P + 8


def test_rejects_lower_half_plane():
    with pytest.raises(DomainError):
        reduce_to_F(point(0, -1), P)
    with pytest.raises(DomainError):
        reduce_to_F(point(3, 0), P)


def test_matrix_determinant_enforced():
    with pytest.raises(DomainError):
        UnimodularMatrix(2, 0, 0, 1)
    m = UnimodularMatrix(2, 1, 1, 1)
    assert (m @ m.inverse()).is_identity()


def test_in_F_examples():
    with working(P):
        s3 = gmpy2.sqrt(mpfr(3)) / 2
        assert in_F(mpc(0, 1))
        assert not in_F(mpc(-0.5, s3))
        assert in_F(mpc(0.5, s3))
        assert not in_F(mpc(0.4, 0.5))


def test_left_arc_is_mapped_to_right_arc():
    with working(P + 64):
        t = mpc(-0.3, gmpy2.sqrt(1 - mpfr(0.09)))
    fp = reduce_to_F(t, P)
    assert fp.tau.re > 0
    assert abs(complex(fp.tau) - complex(0.3, math.sqrt(0.91))) < 1e-40


def test_left_corner_goes_to_rho():
    with working(P + 64):
        t = mpc(-0.5, gmpy2.sqrt(mpfr(3)) / 2)
    fp = reduce_to_F(t, P)
    assert abs(complex(fp.tau) - complex(0.5, math.sqrt(3) / 2)) < 1e-40


tau_strategy = st.tuples(
    st.floats(min_value=-20, max_value=20, allow_nan=False),
    st.floats(min_value=0.1, max_value=10, allow_nan=False),
)


@given(tau_strategy)
def test_reduced_point_in_F_and_reducer_consistent(t):
    tau = point(*t)
    fp = reduce_to_F(tau, P)
    assert in_F(fp.tau)
    assert fp.reducer.a * fp.reducer.d - fp.reducer.b * fp.reducer.c == 1
    with working(P + 64):
        assert abs(fp.reducer.apply(tau) - fp.tau.value) <= 2.0 ** (-P + 8)


@given(tau_strategy)
def test_idempotent(t):
    fp = reduce_to_F(point(*t), P)
    again = reduce_to_F(fp.tau, P)
    assert again.reducer.is_identity()


def test_j_invariance_random():
    rng = random.Random(7)
    for _ in range(100):
        tau = point(rng.uniform(-3, 3), rng.uniform(0.1, 10))
        fp = reduce_to_F(tau, P)
        assert rel_err_log2(j_ref(fp.tau.value, P), j_ref(tau, P + 40)) <= -P + 8
