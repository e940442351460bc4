"""Command-line interface: ``jinvert {eval-j,invert,cm,phi2-root}``.

Every invocation prints one record. Numbers are written as decimal strings
with enough digits for the precision stated alongside them.

Exit codes:
    0  success
    2  unparsable arguments
    3  domain error (Im(tau) <= 0, zero derivative, ...)
    4  certification or convergence failure
    5  insufficient input precision
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import re
import sys
from contextlib import nullcontext
from dataclasses import dataclass
from fractions import Fraction

import gmpy2
from gmpy2 import mpc, mpfr

from . import telemetry
from .cm import AlgebraicInput, is_cm, required_precision
from .errors import (
    CertificationError,
    ConvergenceError,
    DomainError,
    InconsistencyError,
    NumericalError,
    PrecisionError,
)
from .fundamental import reduce_to_F
from .inversion import invert
from .modular import j_agm, j_method, j_qseries, j_theta
from .phi2 import newton_trace, specialize
from .precision import GUARD_BITS, ApproxComplex, PrecisionClaim, PrecisionKind, working

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_DOMAIN = 3
EXIT_CERTIFICATION = 4
EXIT_PRECISION = 5

PREC_ENV = "JINVERT_PREC_BITS"
DEFAULT_PREC_BITS = 512

_LOG2_10 = math.log2(10)
_DECIMAL = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")
_RATIONAL = re.compile(r"[+-]?\d+/\d+")
_EVALUATORS = {"qseries": j_qseries, "theta": j_theta, "agm": j_agm}


class UsageError(Exception):
    """Raised for arguments that parse but make no sense together."""


@dataclass(frozen=True)
class NumberLiteral:
    """A parsed real literal: its exact value and the precision it carries.

    ``bits`` is None for exact literals (integers, p/q, and decimals denoting
    integers); otherwise it is ceil(significant digits * log2 10).
    """

    text: str
    value: Fraction
    bits: int | None

    @classmethod
    def parse(cls, text: str) -> NumberLiteral:
        s = text.strip().replace("−", "-").replace("_", "")
        if _RATIONAL.fullmatch(s):
            num, den = s.split("/")
            if int(den) == 0:
                raise ValueError(f"zero denominator in {text!r}")
            return cls(text, Fraction(int(num), int(den)), None)
        if not _DECIMAL.fullmatch(s):
            raise ValueError(f"not a number: {text!r}")
        value = Fraction(s)
        if value.denominator == 1:
            return cls(text, value, None)
        mantissa = re.split(r"[eE]", s)[0].lstrip("+-").replace(".", "").lstrip("0")
        return cls(text, value, math.ceil(max(len(mantissa), 1) * _LOG2_10))

    def to_mpfr(self, bits: int) -> mpfr:
        with working(bits):
            return mpfr(gmpy2.mpq(self.value.numerator, self.value.denominator))


def _literal(text: str) -> NumberLiteral:
    try:
        return NumberLiteral.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _combined_bits(*parts: NumberLiteral) -> int | None:
    bits = [p.bits for p in parts if p.bits is not None and p.value != 0]
    return min(bits) if bits else None


def _complex(re_part: NumberLiteral, im_part: NumberLiteral, bits: int) -> mpc:
    with working(bits):
        return mpc(re_part.to_mpfr(bits), im_part.to_mpfr(bits))


def format_real(x: mpfr, bits: int) -> str:
    """Decimal string for ``x`` with enough digits to recover ``bits`` bits."""
    if gmpy2.is_zero(x):
        return "0"
    n = math.ceil(bits / _LOG2_10) + 1
    digits, exp, _ = x.digits(10, n)
    sign = "-" if digits.startswith("-") else ""
    m = digits.lstrip("-").rstrip("0") or "0"
    # value = 0.m * 10^exp
    if 0 < exp <= n:
        if exp >= len(m):
            body = m + "0" * (exp - len(m))
        else:
            body = m[:exp] + "." + m[exp:]
    elif -6 < exp <= 0:
        body = "0." + "0" * (-exp) + m
    else:
        body = m[0] + ("." + m[1:] if len(m) > 1 else "") + f"e{exp - 1}"
    return sign + body


def _complex_fields(prefix: str, z, bits: int) -> dict[str, str]:
    z = ApproxComplex.of(z) if not isinstance(z, ApproxComplex) else z
    return {f"{prefix}_re": format_real(z.re, bits), f"{prefix}_im": format_real(z.im, bits)}


def _require_bits(supplied: int | None, needed: int, override: int | None) -> None:
    have = override if override is not None else supplied
    if have is not None and have < needed:
        raise PrecisionError(
            f"input literal carries {have} bits but {needed} are needed; "
            "pass more digits or --input-bits"
        )


# ---------------------------------------------------------------------------
# commands

def cmd_eval_j(args) -> dict:
    p = args.prec_bits
    wp = p + GUARD_BITS
    im = args.tau_im.value
    if im <= 0:
        raise DomainError("Im(tau) must be positive")
    # points near the real axis need extra bits to survive reduction
    extra = max(0, 2 * (im.denominator.bit_length() - im.numerator.bit_length() + 1))
    tau = _complex(args.tau_re, args.tau_im, wp + extra)
    point = reduce_to_F(tau, wp).tau
    method = j_method(point, p) if args.method == "auto" else args.method
    value = _EVALUATORS[method](point, p)
    record = _complex_fields("j", value, p)
    record.update(prec_bits=p, method=method, input_bits=_combined_bits(args.tau_re, args.tau_im))
    return record


def cmd_invert(args) -> dict:
    p = args.prec_bits
    _require_bits(_combined_bits(args.j_re, args.j_im), p, args.input_bits)
    j = _complex(args.j_re, args.j_im, p + GUARD_BITS)
    claim = PrecisionClaim(PrecisionKind.REGULATED, p)
    res = invert(ApproxComplex.of(j, claim), p)
    record = _complex_fields("tau", res.tau.tau, res.achieved_bits)
    record.update(
        achieved_bits=res.achieved_bits,
        precision_kind=res.kind.value,
        regime=res.regime.value,
        doublings=res.doublings,
        prec_bits=p,
    )
    return record


def cmd_cm(args) -> dict:
    d = args.degree
    H = float(args.height.value)
    need = required_precision(d, H)
    _require_bits(_combined_bits(args.j_re, args.j_im), need, args.input_bits)
    j = _complex(args.j_re, args.j_im, need + GUARD_BITS)
    claim = PrecisionClaim(PrecisionKind.REGULATED, need)
    result = is_cm(AlgebraicInput(ApproxComplex.of(j, claim), d, H))
    record: dict = {"is_cm": result.is_cm, "discriminant": result.discriminant}
    form = result.form.as_tuple() if result.form else (None, None, None)
    record.update(form_a=form[0], form_b=form[1], form_c=form[2])
    if result.tau is not None:
        record.update(_complex_fields("tau", result.tau.tau, 64))
    else:
        record.update(tau_re=None, tau_im=None)
    record["required_bits"] = need
    return record


def cmd_phi2_root(args) -> dict:
    p = args.prec_bits
    wp = p + GUARD_BITS
    j = _complex(args.j_re, args.j_im, wp)
    start = _complex(args.start_re, args.start_im, wp)
    cubic = specialize(j, p)
    z, residuals = newton_trace(cubic, start, args.steps, p)
    record = _complex_fields("z", z, p)
    record.update(
        steps=args.steps,
        prec_bits=p,
        residuals_log2=[None if math.isinf(r) else round(r, 3) for r in residuals],
    )
    return record


# ---------------------------------------------------------------------------
# argument handling

def _prec_default() -> int:
    raw = os.environ.get(PREC_ENV)
    if raw is None:
        return DEFAULT_PREC_BITS
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{PREC_ENV} must be an integer, got {raw!r}") from None


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative: {text!r}")
    return v


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARSE, f"{self.prog}: error: {message}\n")


def build_parser(default_bits: int = DEFAULT_PREC_BITS) -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--prec-bits", type=_positive_int, default=default_bits,
                        help=f"working precision in bits (default {default_bits}, env {PREC_ENV})")
    common.add_argument("--format", choices=("json", "text"), default="json")
    common.add_argument("--telemetry", action="store_true",
                        help="add operation counts per precision to the record")
    common.add_argument("-v", "--verbose", action="store_true")
    literal_note = "decimals carry ceil(digits*log2(10)) bits; integers and p/q are exact"

    parser = _Parser(prog="jinvert", description="Evaluate and invert the modular j-function.",
                     epilog=__doc__.split("\n\n", 2)[2], formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ev = sub.add_parser("eval-j", parents=[common], help="evaluate j(tau)", description=literal_note)
    ev.add_argument("tau_re", type=_literal)
    ev.add_argument("tau_im", type=_literal)
    ev.add_argument("--method", choices=("auto", *_EVALUATORS), default="auto")
    ev.set_defaults(func=cmd_eval_j)

    inv = sub.add_parser("invert", parents=[common], help="find tau in F with j(tau) = j",
                         description=literal_note)
    inv.add_argument("j_re", type=_literal)
    inv.add_argument("j_im", type=_literal, nargs="?", default=NumberLiteral("0", Fraction(0), None))
    inv.add_argument("--input-bits", type=_positive_int, help="override the precision inferred from the literals")
    inv.set_defaults(func=cmd_invert)

    cm = sub.add_parser(
        "cm", parents=[common], help="test whether j is a singular modulus",
        description=literal_note + ". The height bound H must satisfy M(j) <= H^d; "
        "(d+1) times the naive height of the minimal polynomial always works.",
    )
    cm.add_argument("j_re", type=_literal)
    cm.add_argument("j_im", type=_literal, nargs="?", default=NumberLiteral("0", Fraction(0), None))
    cm.add_argument("--degree", type=_positive_int, required=True)
    cm.add_argument("--height", type=_literal, required=True)
    cm.add_argument("--input-bits", type=_positive_int, help="override the precision inferred from the literals")
    cm.set_defaults(func=cmd_cm)

    ph = sub.add_parser("phi2-root", parents=[common], help="Newton iteration on Phi2(j, z)",
                        description=literal_note)
    ph.add_argument("j_re", type=_literal)
    ph.add_argument("j_im", type=_literal)
    ph.add_argument("start_re", type=_literal)
    ph.add_argument("start_im", type=_literal)
    ph.add_argument("--steps", type=_positive_int, default=20)
    ph.set_defaults(func=cmd_phi2_root)
    return parser


def _emit(record: dict, fmt: str, out) -> None:
    if fmt == "json":
        out.write(json.dumps(record, separators=(",", ":")) + "\n")
    else:
        for k, v in record.items():
            out.write(f"{k}={json.dumps(v) if isinstance(v, (dict, list)) else v}\n")


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, PrecisionError):
        return EXIT_PRECISION
    if isinstance(exc, (CertificationError, ConvergenceError, InconsistencyError)):
        return EXIT_CERTIFICATION
    if isinstance(exc, (DomainError, NumericalError)):
        return EXIT_DOMAIN
    raise exc


def main(argv: list[str] | None = None, out=None) -> int:
    out = sys.stdout if out is None else out
    try:
        parser = build_parser(_prec_default())
    except UsageError as exc:
        print(f"jinvert: error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        with telemetry.collect() if args.telemetry else nullcontext() as t:
            record = args.func(args)
    except (PrecisionError, CertificationError, ConvergenceError, InconsistencyError,
            DomainError, NumericalError) as exc:
        code = _exit_code(exc)
        print(f"jinvert: {exc}", file=sys.stderr)
        _emit({"error": type(exc).__name__, "message": str(exc), "exit_code": code}, args.format, out)
        return code
    if t is not None:
        record["telemetry"] = t.as_dict()
    _emit(record, args.format, out)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
