import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hho_elasticity.approximation import (
    PolyField,
    cell_oscillation_squared,
    dirichlet_oscillation_squared,
    face_oscillation_squared,
    l2_project_cell,
    l2_project_face,
    lobatto_nodes,
    oscillation,
)
from hho_elasticity.basis import ElementBasis
from hho_elasticity.mesh import DIRICHLET, build_initial_mesh, uniform_refine
from hho_elasticity.quadrature import quad_rule, segment_points, triangle_points


def smooth(x):
    return np.stack([np.sin(3 * x[..., 0]) * np.exp(x[..., 1]), np.cos(x[..., 0] * x[..., 1])], -1)


def poly_vec(p):
    def f(x):
        X, Y = x[..., 0], x[..., 1]
        return np.stack([X ** p - 2 * Y ** p + (X * Y if p > 1 else X), 0.5 + X ** (p - 1) * Y], -1)
    return f


@pytest.mark.parametrize("p", [1, 2, 3])
def test_cell_projection_reproduces_polynomials(graded_mesh, p):
    basis = ElementBasis(graded_mesh, p)
    field = PolyField(basis, p, l2_project_cell(poly_vec(p), basis, p))
    pts, _ = triangle_points(graded_mesh.element_vertices(), quad_rule("triangle", 5))
    np.testing.assert_allclose(field(pts), poly_vec(p)(pts), atol=1e-11)
    assert field.rank_shape == (2,)


def test_cell_projection_residual_is_orthogonal(square_mesh):
    k = 2
    basis = ElementBasis(square_mesh, k)
    coef = l2_project_cell(smooth, basis, k, quad_degree=16)
    pts, wts = triangle_points(square_mesh.element_vertices(), quad_rule("triangle", 16))
    phi = basis.eval(pts)
    res = smooth(pts) - np.einsum("mia,mqa->mqi", coef, phi)
    np.testing.assert_allclose(np.einsum("mq,mqi,mqa->mia", wts, res, phi), 0.0, atol=1e-13)


def test_polyfield_gradient(graded_mesh):
    basis = ElementBasis(graded_mesh, 3)
    rng = np.random.default_rng(0)
    field = PolyField(basis, 3, rng.standard_normal((graded_mesh.n_elements, 2, 2, basis.dim)))
    pts, _ = triangle_points(graded_mesh.element_vertices(), quad_rule("triangle", 2))
    g = field.gradient(pts)
    assert g.shape == pts.shape[:2] + (2, 2, 2)
    h = 1e-6 * graded_mesh.diameters[:, None, None]
    fd = (field(pts + h * np.array([0, 1.0])) - field(pts - h * np.array([0, 1.0]))) / (2 * h[..., None])
    np.testing.assert_allclose(g[..., 1], fd, rtol=1e-5, atol=1e-5 * np.abs(g).max())


def test_polyfield_l2_norm(square_mesh):
    basis = ElementBasis(square_mesh, 2)
    rng = np.random.default_rng(1)
    field = PolyField(basis, 2, rng.standard_normal((square_mesh.n_elements, 2, basis.dim)))
    pts, wts = triangle_points(square_mesh.element_vertices(), quad_rule("triangle", 4))
    assert field.l2_norm() == pytest.approx(np.sqrt(np.einsum("mq,mqi->", wts, field(pts) ** 2)))


@pytest.mark.parametrize("k", [0, 1, 3])
def test_face_projection(square_mesh, k):
    m = square_mesh
    coef = l2_project_face(poly_vec(max(k, 1)), m, k)
    assert coef.shape == (m.n_sides, 2, k + 1)
    # the first Legendre coefficient is the side mean times sqrt(|F|)
    rule = quad_rule("segment", 8)
    pts, wts = segment_points(m.vertices[m.sides[:, 0]], m.vertices[m.sides[:, 1]], rule)
    mean = np.einsum("mq,mqi->mi", wts, poly_vec(max(k, 1))(pts)) / m.side_lengths[:, None]
    np.testing.assert_allclose(coef[..., 0], mean * np.sqrt(m.side_lengths)[:, None], atol=1e-13)


@pytest.mark.parametrize("k", [1, 2])
def test_oscillations_vanish_on_polynomials(lshape_mesh, k):
    m = lshape_mesh
    basis = ElementBasis(m, k)
    assert np.abs(cell_oscillation_squared(poly_vec(k), basis, k)).max() < 1e-26
    sides = np.arange(m.n_sides)
    assert np.abs(face_oscillation_squared(poly_vec(k), m, k, sides)).max() < 1e-26
    # Dirichlet interpolation has degree k + 1
    d = dirichlet_oscillation_squared(poly_vec(k + 1), m, k, sides)
    assert np.abs(d).max() < 1e-14


def test_oscillation_rates():
    """Smooth data: osc(f) ~ h^(k+2), osc(g) ~ h^(k+3/2), osc(u_D) ~ h^(k+3/2)."""
    k = 1
    meshes = [uniform_refine(build_initial_mesh("unit_square"), n) for n in (3, 4)]
    vals = []
    for m in meshes:
        sides = m.sides_with_label(DIRICHLET)
        vals.append((oscillation("f", smooth, m, k), oscillation("g", smooth, m, k, sides=sides),
                     oscillation("u_D", smooth, m, k)))
    rates = np.log2(np.array(vals[0]) / np.array(vals[1]))
    np.testing.assert_allclose(rates, [k + 2, k + 1.5, k + 1.5], atol=0.15)


def test_dirichlet_oscillation_gradient_and_fd_agree(square_mesh):
    def grad(x):
        s3, c3 = np.sin(3 * x[..., 0]), np.cos(3 * x[..., 0])
        e = np.exp(x[..., 1])
        sxy = np.sin(x[..., 0] * x[..., 1])
        return np.stack([np.stack([3 * c3 * e, s3 * e], -1),
                         np.stack([-x[..., 1] * sxy, -x[..., 0] * sxy], -1)], -2)

    sides = square_mesh.sides_with_label(DIRICHLET)
    a = dirichlet_oscillation_squared(smooth, square_mesh, 1, sides, grad)
    b = dirichlet_oscillation_squared(smooth, square_mesh, 1, sides)
    np.testing.assert_allclose(a, b, rtol=1e-6)


@given(st.integers(2, 12))
@settings(max_examples=11, deadline=None)
def test_lobatto_nodes_integrate_exactly(n):
    x = lobatto_nodes(n)
    assert x[0] == -1 and x[-1] == 1 and np.all(np.diff(x) > 0)
    # Lobatto weights 2 / (n (n - 1) P_{n-1}(x)^2) integrate degree 2n - 3 exactly
    p = np.polynomial.legendre.legval(x, [0] * (n - 1) + [1])
    w = 2.0 / (n * (n - 1) * p ** 2)
    deg = 2 * n - 3
    exact = 0.0 if deg % 2 else 2.0 / (deg + 1)
    assert w @ x ** deg == pytest.approx(exact, abs=1e-12)
    assert w.sum() == pytest.approx(2.0)


def test_lobatto_needs_two_nodes():
    with pytest.raises(ValueError):
        lobatto_nodes(1)


def test_unknown_oscillation_kind(square_mesh):
    with pytest.raises(ValueError):
        oscillation("q", smooth, square_mesh, 1)
