import numpy as np
import pytest

from nlhj.errors import ParseError
from nlhj.expressions import Expression


def ev(src, x, t=0.0):
    pts = np.atleast_2d(np.asarray(x, dtype=float)).T if np.ndim(x) == 1 \
        else np.asarray(x, dtype=float)
    return Expression(src)(pts, t)


def test_numbers_and_precedence():
    assert ev("1 + 2*3", [0.0])[0] == 7.0
    assert ev("(1 + 2)*3", [0.0])[0] == 9.0
    assert ev("2^3^2", [0.0])[0] == 512.0  # right associative
    assert ev("-2^2", [0.0])[0] == -4.0
    assert ev("6/3/2", [0.0])[0] == 1.0


def test_variables_and_functions():
    x = np.array([0.25, -0.5])
    assert np.allclose(ev("x^2 + 1", x), x ** 2 + 1)
    assert np.allclose(ev("abs(x)", x), np.abs(x))
    assert np.allclose(ev("min(x, 0)", x), np.minimum(x, 0))
    assert np.allclose(ev("max(x, 0, 0.1)", x), np.maximum(np.maximum(x, 0), 0.1))
    assert np.allclose(ev("sin(x) + cos(x)*exp(x)", x),
                       np.sin(x) + np.cos(x) * np.exp(x))


def test_time_variable():
    e = Expression("x*t + 1")
    assert e.time_dependent
    assert np.allclose(e(np.array([[2.0]]), 3.0), [7.0])
    assert not Expression("x + 1").time_dependent


def test_2d_variables():
    e = Expression("x*y")
    pts = np.array([[2.0, 3.0], [1.0, -1.0]])
    assert np.allclose(e(pts, 0.0), [6.0, -1.0])
    with pytest.raises(ParseError):
        Expression("y + 1")(np.array([[1.0]]), 0.0)


def test_constant_broadcast():
    out = Expression("2.5")(np.zeros((4, 1)), 0.0)
    assert out.shape == (4,)
    assert np.all(out == 2.5)


@pytest.mark.parametrize("bad", [
    "1 +", "sin()", "foo(2)", "1 2", "min(1)", "(1", "x @ 2", "1..2",
])
def test_parse_errors_carry_position(bad):
    with pytest.raises(ParseError):
        Expression(bad)


def test_error_message_names_position():
    try:
        Expression("1 + $")
    except ParseError as e:
        assert "position 4" in str(e)
    else:
        raise AssertionError("expected ParseError")
