"""Expression-language tests: precedence, names, and positioned errors."""

import math

import numpy as np
import pytest

from fmdlab.exprs import ExprError, compile_expr, parse_expr


def ev(src, x=0.0, y=0.0):
    return compile_expr(src)(x, y)


def test_precedence_and_associativity():
    assert ev("2+3*4") == 14.0
    assert ev("(2+3)*4") == 20.0
    assert ev("2^3^2") == 512.0  # right-associative power
    assert ev("-2^2") == -4.0  # unary minus binds looser than power
    assert ev("(-2)^2") == 4.0
    assert ev("2*3^2") == 18.0
    assert ev("7-4-2") == 1.0  # left-associative subtraction
    assert ev("12/4/3") == 1.0
    assert ev("2^-1") == 0.5  # unary minus allowed in the exponent


def test_functions_constants_variables():
    assert ev("pi") == pytest.approx(math.pi, rel=1e-15)
    assert ev("e") == pytest.approx(math.e, rel=1e-15)
    assert ev("sin(pi/2)") == pytest.approx(1.0, rel=1e-15)
    assert ev("cos(0)") == 1.0
    assert ev("exp(1)") == pytest.approx(math.e, rel=1e-15)
    assert ev("log(e)") == pytest.approx(1.0, rel=1e-15)
    assert ev("abs(-3)") == 3.0
    assert ev("sqrt(9)") == 3.0
    assert ev("x+2*y", x=1.0, y=3.0) == 7.0
    assert ev("sin(x)*cos(y)", x=0.5, y=0.25) == pytest.approx(
        math.sin(0.5) * math.cos(0.25), rel=1e-15
    )


def test_vectorized_broadcast():
    fn = compile_expr("x^2 - y")
    x = np.array([1.0, 2.0, 3.0])
    y = np.array([0.5, 0.5, 0.5])
    assert np.allclose(fn(x, y), x**2 - 0.5)
    const = compile_expr("3.5")
    out = const(x, y)
    assert out.shape == x.shape and np.all(out == 3.5)


def test_scientific_notation_and_whitespace():
    assert ev("1e2") == 100.0
    assert ev("2.5e-1") == 0.25
    assert ev(" 1 +  2 ") == 3.0
    assert ev(".5*4") == 2.0


def test_error_positions():
    with pytest.raises(ExprError) as e:
        parse_expr("1+$2")
    assert e.value.pos == 2
    with pytest.raises(ExprError) as e:
        parse_expr("2*zebra")
    assert "unknown name 'zebra'" in str(e.value)
    assert e.value.pos == 2
    with pytest.raises(ExprError) as e:
        parse_expr("(1+2")
    assert "expected ')'" in str(e.value)
    with pytest.raises(ExprError) as e:
        parse_expr("1+2)")
    assert "trailing input" in str(e.value)
    with pytest.raises(ExprError):
        parse_expr("")
    with pytest.raises(ExprError):
        parse_expr("sin 3")  # function calls need parentheses
    with pytest.raises(ExprError):
        parse_expr("1+")


def test_division_conventions():
    out = ev("1/x", x=np.array([0.0, 2.0]), y=np.array([0.0, 0.0]))
    assert math.isinf(out[0]) and out[1] == 0.5
