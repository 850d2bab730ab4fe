from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hho_elasticity.quadrature import MAX_DEGREE, UnsupportedDegree, quad_rule, segment_points, triangle_points

from conftest import random_triangles


def barycentric_moment(a, b, c, area):
    """Exact ``int_T l0^a l1^b l2^c`` (classical simplex formula)."""
    return 2.0 * area * factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 2)


@pytest.mark.parametrize("degree", [0, 1, 2, 5, 8, 13, 20, 31])
def test_triangle_rule_exact_on_barycentric_monomials(degree):
    rng = np.random.default_rng(degree)
    tris = random_triangles(rng, 4)
    rule = quad_rule("triangle", degree)
    pts, wts = triangle_points(tris, rule)
    lam = rule.barycentric()
    e1, e2 = tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            c = degree - a - b
            vals = lam[:, 0] ** a * lam[:, 1] ** b * lam[:, 2] ** c
            approx = wts @ vals
            exact = np.array([barycentric_moment(a, b, c, s) for s in area])
            np.testing.assert_allclose(approx, exact, rtol=1e-12, atol=1e-15)


@given(st.integers(0, 40))
@settings(max_examples=25, deadline=None)
def test_segment_rule_exact(degree):
    rule = quad_rule("segment", degree)
    a = np.array([[0.3, -1.0]])
    b = np.array([[1.5, 2.0]])
    pts, wts = segment_points(a, b, rule)
    t = (pts[0, :, 0] - 0.3) / 1.2  # arc parameter in [0, 1]
    length = np.hypot(1.2, 3.0)
    np.testing.assert_allclose(wts[0] @ t ** degree, length / (degree + 1), rtol=1e-12)


@pytest.mark.parametrize("kind", ["triangle", "segment"])
def test_weights_positive_and_normalized(kind):
    for degree in (0, 3, 10, 40):
        rule = quad_rule(kind, degree)
        assert np.all(rule.weights > 0)
        assert rule.weights.sum() == pytest.approx(1.0, abs=1e-14)


def test_triangle_points_inside():
    rule = quad_rule("triangle", 12)
    x, y = rule.points.T
    assert np.all(x > 0) and np.all(y > 0) and np.all(x + y < 1)


@pytest.mark.parametrize("degree", [-1, MAX_DEGREE + 1, 2.5])
def test_unsupported_degree(degree):
    with pytest.raises(UnsupportedDegree):
        quad_rule("triangle", degree)


def test_unknown_kind():
    with pytest.raises(ValueError):
        quad_rule("square", 2)
