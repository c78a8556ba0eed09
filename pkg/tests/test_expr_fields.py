import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vbob import dual
from vbob.chart import ChartDomain, DomainError
from vbob.expr import ParseError, compile_expression, parse
from vbob.fields import DerivativeField, Field

SMOOTH = [
    "x*y + sin(z)",
    "exp(-x^2) * cos(y*z)",
    "sqrt(1 + x^2 + y^2) / (2 + z)",
    "(x - y)^3 - 2*x*z + pi",
    "x^y",
]


def test_precedence_and_unary_minus():
    f = compile_expression("-x^2 + 2^3^2", ["x"])
    assert f([3.0]) == -9.0 + 2.0 ** 9


def test_constants_and_functions():
    f = compile_expression("sin(pi/2) + exp(0) + sqrt(4) + cos(0)", [])
    assert f([]) == pytest.approx(5.0)


@pytest.mark.parametrize("text,col", [("x +", 4), ("x $ y", 3), ("foo(x)", 1), ("(x", 3), ("x y", 3)])
def test_parse_errors_carry_columns(text, col):
    with pytest.raises(ParseError) as info:
        compile_expression(text, ["x", "y"], line=7)
    assert info.value.line == 7
    assert info.value.column == col


def test_unknown_variable_is_located():
    with pytest.raises(ParseError) as info:
        compile_expression("x + w", ["x"], column0=10)
    assert info.value.column == 14


def test_ast_is_plain_tuples():
    assert parse("x*2") == ("*", ("var", "x", 1), ("num", 2.0))


@pytest.mark.parametrize("text", SMOOTH)
def test_ad_matches_central_differences(text):
    f = Field.from_expressions([text], ["x", "y", "z"])
    dom = ChartDomain(((0.2, 1.5), (0.1, 1.2), (-0.5, 0.8)))
    pts = dom.sample(1000, seed=3)
    _, grad = f.jet(pts)
    h = 1e-5
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (f.evaluate(pts + e) - f.evaluate(pts - e)) / (2 * h)
        rel = np.abs(grad[..., k] - fd) / np.maximum(1.0, np.abs(fd))
        assert rel.max() <= 1e-6


def test_second_order_jet_matches_fd_of_gradient():
    f = Field.from_expressions([["x*y^2", "sin(x)*exp(y)"]], ["x", "y"])
    p = np.array([[0.3, -0.7]])
    _, g, H = f.jet(p, order=2)
    h = 1e-5
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (f.jet(p + e)[1] - f.jet(p - e)[1]) / (2 * h)
        assert np.allclose(H[..., k], fd, atol=1e-7)


def test_derivative_field_chains_through_ad():
    f = Field.from_expressions(["x^3*y"], ["x", "y"])
    dfx = DerivativeField(f, 0)
    val, grad = dfx.jet(np.array([[2.0, 5.0]]))
    assert val[0, 0] == pytest.approx(3 * 4 * 5)
    assert grad[0, 0] == pytest.approx([6 * 2 * 5, 3 * 4])


def test_evaluation_is_bit_deterministic():
    f = Field.from_expressions(SMOOTH[:4], ["x", "y", "z"])
    pts = ChartDomain(((0, 1),) * 3).sample(50, seed=11)
    assert np.array_equal(f.evaluate(pts), f.evaluate(pts))


def test_dual_arithmetic_rules():
    x = dual.seed(np.array([[0.5, 2.0]]))
    a, b = x
    q = a / b + a * a - b
    assert q.val[0] == pytest.approx(0.25 + 0.25 - 2)
    assert q.grad[0] == pytest.approx([1 / 2.0 + 1.0, -0.5 / 4.0 - 1])


@settings(max_examples=60, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_constant_field_has_zero_gradient(x, y):
    f = Field.constant([[1.0, 2.0]], 2)
    _, g = f.jet(np.array([[x, y]]))
    assert np.all(g == 0.0)


class TestChart:
    def test_sampling_respects_box_and_ball(self):
        dom = ChartDomain(((-2, 2),) * 3, ("x", "y", "z"), excluded_radius=0.1)
        pts = dom.sample(500, seed=1)
        assert pts.shape == (500, 3)
        assert np.all(np.abs(pts) <= 2)
        assert np.all(np.linalg.norm(pts, axis=1) > 0.1)

    def test_seeded_sampling_is_reproducible(self):
        dom = ChartDomain(((0, 1), (0, 1)))
        assert np.array_equal(dom.sample(20, seed=4), dom.sample(20, seed=4))
        assert not np.array_equal(dom.sample(20, seed=4), dom.sample(20, seed=5))

    def test_ball_dims_restricts_exclusion(self):
        dom = ChartDomain(((-1, 1),) * 4, excluded_radius=0.5, ball_dims=3)
        pts = dom.sample(200)
        assert np.all(np.linalg.norm(pts[:, :3], axis=1) > 0.5)
        assert not dom.contains(np.array([0.0, 0.0, 0.0, 0.9]))

    @pytest.mark.parametrize("bounds,radius", [(((1, 1),), None), (((-1, 1),), 2.0), (((0, 1),), -0.1)])
    def test_invalid_charts(self, bounds, radius):
        with pytest.raises(ValueError):
            ChartDomain(bounds, excluded_radius=radius)

    def test_require_raises_outside(self):
        dom = ChartDomain(((0, 1),))
        with pytest.raises(DomainError):
            dom.require(np.array([[1.5]]))


def test_pi_constant_value():
    assert compile_expression("pi", [])([]) == math.pi


def test_entry_products_leave_large_operands_intact():
    from vbob.fields import empty, matmul

    n = 1 << 16
    A, B = empty((2, 2)), empty((2,))
    for idx in np.ndindex(2, 2):
        A[idx] = np.full(n, 1.0 + idx[0] + 2 * idx[1])
    B[0], B[1] = np.full(n, 3.0), 2.0
    C = matmul(A, B)
    assert [float(A[idx][0]) for idx in np.ndindex(2, 2)] == [1.0, 3.0, 2.0, 4.0]
    assert float(C[0][0]) == 1 * 3 + 3 * 2 and float(C[1][0]) == 2 * 3 + 4 * 2
