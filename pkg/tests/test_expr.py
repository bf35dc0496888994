import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minimax_bvp import expr


@pytest.mark.parametrize(
    "text, t, expected",
    [
        ("sin(t)/20", math.pi / 2, 0.05),
        ("cos(t)", 0.0, 1.0),
        ("0.5 + 0.159155*t + 0.1*sin(t)", 0.0, 0.5),
        ("exp(-t)", 2 * math.pi, math.exp(-2 * math.pi)),
        ("t^2", 3.0, 9.0),
        ("pi", 17.0, math.pi),
        ("e", 0.0, math.e),
        ("2+3*4", 0.0, 14.0),
        ("(2+3)*4", 0.0, 20.0),
        ("2^3^2", 0.0, 512.0),
        ("-2^2", 0.0, -4.0),
        ("8/4/2", 0.0, 1.0),
        ("10-4-3", 0.0, 3.0),
        ("abs(-t) + sqrt(4) + log(e) + tan(0)", 1.5, 4.5),
        ("2*-t", 1.0, -2.0),
        ("1.5e-3*t", 2.0, 3e-3),
    ],
)
def test_evaluate(text, t, expected):
    assert expr.evaluate(expr.parse(text), t) == pytest.approx(expected, rel=1e-12, abs=1e-15)


def test_exp_at_two_pi_matches_reference_digits():
    assert expr.evaluate(expr.parse("exp(-t)"), 2 * math.pi) == pytest.approx(0.00186744, abs=5e-9)


@pytest.mark.parametrize(
    "text, offset",
    [("2t", 1), ("sin t", 4), ("1+", 2), ("foo(t)", 0), ("(1", 0), ("1)", 1), ("x+1", 0), ("", 0)],
)
def test_syntax_errors_carry_offset(text, offset):
    with pytest.raises(expr.ExprSyntaxError) as info:
        expr.parse(text)
    assert info.value.offset == offset


def test_implicit_multiplication_is_named():
    with pytest.raises(expr.ExprSyntaxError, match="implicit multiplication"):
        expr.parse("2t")


@pytest.mark.parametrize("text", ["log(t - 1)", "sqrt(t - 2)", "1/(t - 1)", "log(0*t)"])
def test_domain_errors_are_raised_not_nan(text):
    with pytest.raises(expr.ExprDomainError):
        expr.evaluate(expr.parse(text), 1.0)


def test_vectorised_evaluation_matches_scalar():
    node = expr.parse("exp(-t)*cos(2*t) + t^3/7")
    t = np.linspace(0, 5, 11)
    np.testing.assert_allclose(expr.evaluate_array(node, t), [expr.evaluate(node, x) for x in t], rtol=1e-15)


def test_constant_expression_broadcasts():
    assert expr.evaluate_array(expr.parse("pi/2"), np.zeros(4)).shape == (4,)


def test_depends_on_t():
    assert expr.depends_on_t(expr.parse("1 + sin(2*t)"))
    assert not expr.depends_on_t(expr.parse("2*pi"))


# ---------------------------------------------------------------- properties

_leaf = st.one_of(
    st.just("t"),
    st.just("pi"),
    st.floats(min_value=0, max_value=1e6, allow_nan=False, allow_infinity=False).map(repr),
)


def _compose(children):
    binary = st.tuples(children, st.sampled_from(["+", "-", "*", "/", "^"]), children).map(
        lambda p: f"({p[0]}){p[1]}({p[2]})"
    )
    call = st.tuples(st.sampled_from(expr.FUNCTIONS), children).map(lambda p: f"{p[0]}({p[1]})")
    neg = children.map(lambda c: f"-({c})")
    return st.one_of(binary, call, neg)


expressions = st.recursive(_leaf, _compose, max_leaves=12)


@settings(max_examples=300, deadline=None)
@given(expressions)
def test_pretty_print_round_trip(text):
    node = expr.parse(text)
    assert expr.parse(expr.to_string(node)) == node


@settings(max_examples=300, deadline=None)
@given(
    st.floats(min_value=-1e12, max_value=1e12, allow_subnormal=False),
    st.floats(min_value=-1e12, max_value=1e12, allow_subnormal=False),
    st.sampled_from(["+", "-", "*", "/"]),
)
def test_binary_arithmetic_is_exact(a, b, op):
    if op == "/" and b == 0:
        return
    expected = {"+": a + b, "-": a - b, "*": a * b, "/": a / b if b else 0.0}[op]
    if not math.isfinite(expected):
        return
    node = expr.BinOp(op, expr.Const(a), expr.Const(b))
    assert expr.evaluate(node, 0.0) == expected
    # and through the text form
    text = f"({a!r}){op}({b!r})"
    assert expr.evaluate(expr.parse(text), 0.0) == expected
