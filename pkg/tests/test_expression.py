"""
Tests for the expression grammar used by configs and problem files
"""
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fixiter.core.errors import ConfigurationError, ExpressionError
from fixiter.services.expression import compile_expression, tokenize

small = st.floats(min_value=-50, max_value=50, allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize(
    "text,expected",
    [
        ("1 + 2 * 3", 7.0),
        ("(1 + 2) * 3", 9.0),
        ("2 ^ 3 ^ 2", 512.0),
        ("2 ** 3", 8.0),
        ("-2 ^ 2", -4.0),
        ("2 ^ -1", 0.5),
        ("8 / 4 / 2", 1.0),
        ("10 - 4 - 3", 3.0),
        ("cbrt(27)", 3.0),
        ("sqrt(16) + abs(-2)", 6.0),
        ("1.5e2 + .5", 150.5),
    ],
)
def test_precedence_and_associativity(text, expected):
    assert compile_expression(text, ())() == pytest.approx(expected)


def test_constants():
    assert compile_expression("pi", ())() == pytest.approx(math.pi)
    assert compile_expression("log(e)", ())() == pytest.approx(1.0)


def test_cube_root_map_at_its_fixed_point():
    T = compile_expression("cbrt(3*x + 18)")
    assert T(3.0) == 3.0
    assert T(1000.0) == pytest.approx(14.45128320, abs=1e-8)


def test_vectorized_evaluation():
    f = compile_expression("v + 2*u - t", ("t", "u", "v"))
    t = np.array([0.0, 1.0, 2.0])
    result = f(t, np.ones(3), np.full(3, 4.0))
    np.testing.assert_allclose(result, [6.0, 5.0, 4.0])


def test_keyword_arguments():
    f = compile_expression("t * u", ("t", "u"))
    assert f(u=3.0, t=2.0) == 6.0


def test_constant_expression_stays_scalar():
    zero = compile_expression("0", ("t", "u", "v"))
    assert zero(np.zeros(4), np.zeros(4), np.zeros(4)) == 0.0


@pytest.mark.parametrize(
    "text,position",
    [
        ("1 +", 3),
        ("(1 + 2", 6),
        ("1 $ 2", 2),
        ("y + 1", 0),
        ("", 0),
        ("sin 2", 4),
        ("1 2", 2),
    ],
)
def test_syntax_errors_report_position(text, position):
    with pytest.raises(ExpressionError) as info:
        compile_expression(text)
    assert info.value.position == position


def test_expression_errors_are_configuration_errors():
    with pytest.raises(ConfigurationError):
        compile_expression("cbrt(")


def test_variables_may_not_shadow_builtins():
    with pytest.raises(ExpressionError):
        compile_expression("e + 1", ("e",))


def test_missing_argument():
    f = compile_expression("t + u", ("t", "u"))
    with pytest.raises(ExpressionError):
        f(1.0)


def test_tokenizer_normalizes_power_operator():
    kinds = [(tok.kind, tok.text) for tok in tokenize("x**2")]
    assert kinds == [("name", "x"), ("op", "^"), ("number", "2"), ("end", "")]


@given(small, small, small)
def test_matches_python_arithmetic(a, b, c):
    f = compile_expression("a*b + c - a/(1 + b*b)", ("a", "b", "c"))
    assert f(a, b, c) == pytest.approx(a * b + c - a / (1 + b * b), rel=1e-12, abs=1e-12)
