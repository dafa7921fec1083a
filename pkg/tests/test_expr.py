import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfis.errors import CapViolation, EvalError, ExprSyntaxError, UnknownIdentifier
from rfis.expr import (
    BinOp,
    Call,
    Neg,
    Num,
    Var,
    certify_bounds,
    evaluate,
    is_constant,
    lipschitz_estimate,
    parse,
    to_string,
)

SINE = "sin(10*x^2+10*y^2)"


def test_parse_sine_tree():
    e = parse(SINE)
    sq = lambda v: BinOp("^", Var(v), Num(2.0))
    assert e == Call("sin", BinOp("+", BinOp("*", Num(10.0), sq("x")),
                                  BinOp("*", Num(10.0), sq("y"))))
    assert parse("0.5") == Num(0.5)
    assert parse("  2 *\tx ") == parse("2*x")


def test_syntax_error_offset():
    with pytest.raises(ExprSyntaxError) as info:
        parse("x + * y")
    assert info.value.offset == 4


@pytest.mark.parametrize("text,offset", [("(x + 1", 6), ("2 $ 3", 2), ("", 0), ("x y", 2),
                                         ("x^y", 1), ("sin x", 4)])
def test_syntax_errors(text, offset):
    with pytest.raises(ExprSyntaxError) as info:
        parse(text)
    assert info.value.offset == offset


def test_byte_offset_counts_utf8():
    with pytest.raises(ExprSyntaxError) as info:
        parse("x + é")
    assert info.value.offset == 4
    with pytest.raises(ExprSyntaxError) as info:
        parse("é + $")
    assert info.value.offset == 0


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifier) as info:
        parse("x + tan(y)")
    assert info.value.offset == 4
    with pytest.raises(UnknownIdentifier):
        parse("z")


def test_precedence():
    assert evaluate(parse("2+3*4"), 0, 0) == 14
    assert evaluate(parse("2^3^2"), 0, 0) == 512
    assert evaluate(parse("-2^2"), 0, 0) == -4
    assert evaluate(parse("8-3-2"), 0, 0) == 3
    assert evaluate(parse("16/4/2"), 0, 0) == 2
    assert evaluate(parse("(2+3)*4"), 0, 0) == 20


def test_eval_examples():
    e = parse(SINE)
    assert evaluate(e, 0, 0) == 0
    assert evaluate(parse("0.5"), 0.3, 0.9) == 0.5
    assert evaluate(e, 0.25, 0) == pytest.approx(math.sin(0.625), abs=1e-15)
    assert evaluate(e, 0.25, 0) == pytest.approx(0.585097, abs=1e-6)


def test_eval_functions_and_arrays():
    x = np.linspace(0, 1, 7)
    y = np.linspace(1, 2, 7)
    got = evaluate(parse("cos(x) + exp(-y) * abs(x - 0.5) + sqrt(y)"), x, y)
    assert np.allclose(got, np.cos(x) + np.exp(-y) * np.abs(x - 0.5) + np.sqrt(y), atol=1e-15)


@pytest.mark.parametrize("text", ["1/x", "sqrt(x - 2)", "exp(1000*y)"])
def test_eval_error(text):
    with pytest.raises(EvalError):
        evaluate(parse(text), 0.0, 1.0)


def test_is_constant():
    assert is_constant(parse("2^3 * sin(1)"))
    assert not is_constant(parse("x * 0"))


def test_certify_constant():
    assert certify_bounds(parse("0.7"), (0.3, 0.9, 0, 1)) == (0.7, 0.7)
    assert certify_bounds(parse("-0.7"), (0, 1, 0, 1)) == (0.7, 0.7)
    with pytest.raises(CapViolation) as info:
        certify_bounds(parse("1.2"), (0, 1, 0, 1), region=(2, 3))
    assert info.value.region == (2, 3)


def test_certify_sine_region11():
    rect = (0, 0.25, 0, 0.25)
    lo, hi = certify_bounds(parse(SINE), rect, 64)
    olo, ohi = certify_bounds(parse(SINE), rect, 4096)
    assert (olo, ohi) == pytest.approx((0.0, math.sin(1.25)), abs=1e-12)
    assert lo == 0.0
    assert hi == pytest.approx(math.sin(1.25), abs=1e-12)
    assert hi == pytest.approx(0.948985, abs=1e-6)


def test_certify_pad():
    lo, hi = certify_bounds(parse("0.5 + 0.1*x"), (0, 1, 0, 1), 64, pad=0.01)
    assert (lo, hi) == pytest.approx((0.49, 0.61))
    assert certify_bounds(parse("0.005"), (0, 1, 0, 1), pad=0.01)[0] == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 40), st.floats(0, 0.75), st.floats(0, 0.75))
def test_certify_nested_density(d, x0, y0):
    # a (2d-1) lattice contains the d lattice, so its interval can only grow,
    # and both stay inside a dense oracle interval
    rect = (x0, x0 + 0.25, y0, y0 + 0.25)
    e = parse("0.9*" + SINE)
    lo1, hi1 = certify_bounds(e, rect, d)
    lo2, hi2 = certify_bounds(e, rect, 2 * d - 1)
    olo, ohi = certify_bounds(e, rect, 1025)
    assert lo2 <= lo1 + 1e-15 and hi1 <= hi2 + 1e-15
    assert olo <= lo2 + 1e-15 and hi2 <= ohi + 1e-15


def test_lipschitz_estimate():
    assert lipschitz_estimate(parse("0.3"), (0, 1, 0, 1)) == 0.0
    assert lipschitz_estimate(parse("0.2*x + 0.1*y"), (0, 1, 0, 1)) == pytest.approx(
        math.hypot(0.2, 0.1) * 1.0, rel=0.1)


# -- round trip ------------------------------------------------------------

_leaf = st.one_of(
    st.floats(0, 1e6, allow_nan=False).map(Num),
    st.sampled_from(["x", "y"]).map(Var),
)


def _tree(children):
    return st.one_of(
        children.map(Neg),
        st.tuples(st.sampled_from(["+", "-", "*", "/"]), children, children)
        .map(lambda t: BinOp(*t)),
        st.tuples(st.sampled_from(["sin", "cos", "exp", "abs", "sqrt"]), children)
        .map(lambda t: Call(*t)),
        st.tuples(children, st.floats(0, 5).map(Num)).map(lambda t: BinOp("^", *t)),
    )


@given(st.recursive(_leaf, _tree, max_leaves=12))
def test_print_parse_roundtrip(tree):
    once = parse(to_string(tree))
    assert parse(to_string(once)) == once
    assert once == tree
