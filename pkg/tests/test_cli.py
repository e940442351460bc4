import io
import json
import math
from fractions import Fraction

import gmpy2
import pytest
from gmpy2 import mpfr

from jinvert import cli
from jinvert.cli import NumberLiteral, format_real, main
from jinvert.precision import working
from oracles import j_ref, mp_to_mpc


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    text = out.getvalue()
    return code, text


def record(*argv):
    code, text = run(*argv)
    assert code == 0, text
    lines = text.splitlines()
    assert len(lines) == 1
    return json.loads(lines[0])


# ---------------------------------------------------------------------------
# literals

@pytest.mark.parametrize("text,value", [
    ("12", Fraction(12)), ("-3/4", Fraction(-3, 4)), ("−3375", Fraction(-3375)),
    ("1e3", Fraction(1000)), ("2.50e1", Fraction(25)),
])
def test_exact_literals(text, value):
    lit = NumberLiteral.parse(text)
    assert lit.value == value and lit.bits is None


def test_inexact_literal_bits():
    lit = NumberLiteral.parse("1.7320508")
    assert lit.value == Fraction(17320508, 10 ** 7)
    assert lit.bits == math.ceil(8 * math.log2(10))
    assert NumberLiteral.parse("-3.375e-3").bits == math.ceil(4 * math.log2(10))


@pytest.mark.parametrize("text", ["abc", "1/0", "", "1.2.3", "nan", "inf"])
def test_bad_literals(text):
    with pytest.raises(ValueError):
        NumberLiteral.parse(text)


def test_format_round_trip():
    with working(300):
        x = gmpy2.const_pi() * mpfr(10) ** 40
        y = gmpy2.const_pi() / mpfr(10) ** 30
    for v in (x, y, -x):
        s = format_real(v, 300)
        back = NumberLiteral.parse(s).to_mpfr(300)
        with working(320):
            assert abs(back - v) <= abs(v) * mpfr(2) ** -295


# ---------------------------------------------------------------------------
# commands

def test_eval_j_at_i():
    r = record("eval-j", "0", "1", "--prec-bits", "256")
    assert r["j_re"] == "1728" and r["prec_bits"] == 256
    assert abs(float(r["j_im"])) < 2.0 ** -200


def test_eval_j_near_rho():
    r = record("eval-j", "0.5", "0.8660254037844386", "--prec-bits", "256")
    # input is rho to about 1e-16 and j has a triple zero there
    assert abs(complex(float(r["j_re"]), float(r["j_im"]))) < 1e-30


def test_eval_j_sqrt3():
    r = record("eval-j", "0", "1.7320508075688772935274463415058723669", "--prec-bits", "128")
    assert float(r["j_re"]) == pytest.approx(54000, abs=1e-20 * 54000 * 1e10)


@pytest.mark.parametrize("method", ["qseries", "theta", "agm"])
def test_eval_j_methods_agree(method):
    r = record("eval-j", "1/7", "6/5", "--prec-bits", "200", "--method", method)
    assert r["method"] == method
    with working(200):
        tau = gmpy2.mpc(mpfr(1) / 7, mpfr(6) / 5)
    ref = complex(j_ref(tau, 200))
    assert complex(float(r["j_re"]), float(r["j_im"])) == pytest.approx(ref, rel=1e-14)


def test_eval_j_fields_round_trip():
    r = record("eval-j", "1/7", "6/5", "--prec-bits", "300")
    with working(300):
        tau = gmpy2.mpc(mpfr(1) / 7, mpfr(6) / 5)
    ref = j_ref(tau, 300)
    got_re = NumberLiteral.parse(r["j_re"]).to_mpfr(300)
    with working(340):
        assert abs(got_re - ref.real) <= abs(ref) * mpfr(2) ** -280


def test_invert_compact():
    r = record("invert", "287496", "0", "--prec-bits", "512")
    assert r["regime"] == "Compact"
    assert float(r["tau_re"]) == pytest.approx(0, abs=1e-100)
    assert float(r["tau_im"]) == 2
    assert r["precision_kind"] in ("Relative", "Absolute", "Regulated")
    assert r["achieved_bits"] >= 512 - 110


def test_invert_rho_shortcut():
    r = record("invert", "0", "--prec-bits", "600")
    assert r["regime"] == "AtRho"
    assert r["tau_re"] == "0.5"
    assert float(r["tau_im"]) == pytest.approx(math.sqrt(3) / 2)


def test_invert_large():
    r = record("invert", "1e300", "0", "--prec-bits", "512")
    assert r["regime"] == "Large" and r["doublings"] >= 0
    # j(iy) ~ e^{2 pi y}
    assert float(r["tau_im"]) == pytest.approx(math.log(1e300 - 744) / (2 * math.pi), rel=1e-12)


def test_invert_needs_input_bits():
    code, text = run("invert", "1.5", "--prec-bits", "512")
    assert code == cli.EXIT_PRECISION
    assert json.loads(text)["exit_code"] == 5
    r = record("invert", "1.5", "--prec-bits", "512", "--input-bits", "512")
    assert r["regime"] == "Compact"


def test_cm_examples():
    r = record("cm", "-3375", "--degree", "1", "--height", "3375")
    assert r["is_cm"] is True and r["discriminant"] == -7
    assert (r["form_a"], r["form_b"], r["form_c"]) == (1, -1, 2)
    r = record("cm", "1729", "--degree", "1", "--height", "1729")
    assert r["is_cm"] is False
    r = record("cm", "1728", "--degree", "1", "--height", "1728")
    assert r["is_cm"] is True and r["discriminant"] == -4


def test_cm_low_precision_input():
    code, _ = run("cm", "1728.5", "--degree", "1", "--height", "3000")
    assert code == cli.EXIT_PRECISION


def test_cm_height_domain():
    code, _ = run("cm", "8000", "--degree", "1", "--height", "10")
    assert code == cli.EXIT_DOMAIN


def test_phi2_root_double():
    r = record("phi2-root", "1728", "0", "287000", "0", "--steps", "20")
    # a double root only gives linear convergence
    assert abs(float(r["z_re"]) - 287496) < 1e-3
    assert len(r["residuals_log2"]) == 20


def test_phi2_root_triple():
    r = record("phi2-root", "0", "0", "54001", "0", "--steps", "20")
    assert abs(float(r["z_re"]) - 54000) < 1e-3


def test_phi2_root_simple():
    r = record("phi2-root", "1728", "0", "1700", "0", "--steps", "12")
    assert float(r["z_re"]) == 1728
    # None marks a residual that is exactly zero
    assert r["residuals_log2"][-1] is None or r["residuals_log2"][-1] < -400


def test_phi2_root_zero_steps():
    r = record("phi2-root", "1728", "0", "287000", "0", "--steps", "0")
    assert (r["z_re"], r["z_im"]) == ("287000", "0")


def test_phi2_zero_derivative():
    # (z - 287496)^2 (z - 1728) has a critical point at 96984 that is not a root
    code, text = run("phi2-root", "1728", "0", "96984", "0", "--steps", "1")
    assert code == cli.EXIT_DOMAIN


# ---------------------------------------------------------------------------
# plumbing

@pytest.mark.parametrize("argv", [
    ["eval-j", "abc", "1"], ["frobnicate"], ["invert"], ["eval-j", "0", "1", "--prec-bits", "-3"],
])
def test_parse_errors(argv, capsys):
    code, _ = run(*argv)
    assert code == cli.EXIT_PARSE


def test_domain_error():
    code, text = run("eval-j", "0", "-1")
    assert code == cli.EXIT_DOMAIN
    assert json.loads(text)["error"] == "DomainError"


def test_env_default_precision(monkeypatch):
    monkeypatch.setenv("JINVERT_PREC_BITS", "320")
    assert record("eval-j", "0", "1")["prec_bits"] == 320
    monkeypatch.delenv("JINVERT_PREC_BITS")
    assert record("eval-j", "0", "1")["prec_bits"] == cli.DEFAULT_PREC_BITS


def test_telemetry_flag():
    r = record("eval-j", "0", "6/5", "--telemetry")
    assert r["telemetry"]["cost"] > 0
    assert sum(r["telemetry"]["multiplications_by_precision"].values()) > 0
    assert "telemetry" not in record("eval-j", "0", "6/5")


def test_text_format():
    code, text = run("eval-j", "0", "1", "--format", "text")
    assert code == 0
    assert "j_re" in text and "{" not in text
