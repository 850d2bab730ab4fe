import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from hho_elasticity.problem import (
    LSHAPE_ALPHA,
    LSHAPE_OMEGA,
    Material,
    apply_compliance_tensor,
    apply_elasticity_tensor,
    cooks_problem,
    cooks_traction,
    lame_from_young_poisson,
    lshape_alpha_root,
    lshape_displacement,
    lshape_exact,
    lshape_gradient,
    lshape_problem,
    manufactured_polynomial,
)

X, Y = sp.symbols("x y", real=True)


def sympy_stress(u, lam, mu):
    J = sp.Matrix(2, 2, lambda i, j: sp.diff(u[i], (X, Y)[j]))
    eps = (J + J.T) / 2
    return 2 * mu * eps + lam * eps.trace() * sp.eye(2), J


def evaluate(expr, pts):
    f = sp.lambdify((X, Y), expr, "numpy")
    return np.array([np.array(f(*p), dtype=float) for p in pts])


def test_lame_conversion():
    # closed-form relations
    lam, mu = lame_from_young_poisson(1e5, 0.4999)
    assert mu == pytest.approx(1e5 / 2.9998)
    assert lam == pytest.approx(1e5 * 0.4999 / (1.4999 * 0.0002))
    assert lam / mu > 4999
    m = Material.from_young_poisson(1e5, 0.3)
    assert (m.lam, m.mu) == pytest.approx((1e5 * 0.3 / (1.3 * 0.4), 1e5 / 2.6))


@pytest.mark.parametrize("E,nu", [(1e5, 0.5), (1e5, 0.7), (1e5, -1.0), (0.0, 0.3)])
def test_lame_conversion_rejects(E, nu):
    with pytest.raises(ValueError):
        lame_from_young_poisson(E, nu)


@given(st.floats(0.0, 1e6), st.floats(1e-3, 1e3), st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_compliance_inverts_elasticity(lam, mu, seed):
    tau = np.random.default_rng(seed).standard_normal((5, 2, 2))
    back = apply_compliance_tensor(apply_elasticity_tensor(tau, lam, mu), lam, mu)
    # round-off grows with the conditioning lam / mu of the tensor
    tol = 1e-13 * (1.0 + lam / mu)
    np.testing.assert_allclose(back, tau, rtol=tol, atol=tol * np.abs(tau).max())


def test_material_on_mesh(lshape_mesh):
    lam, mu = Material(2.0, lambda x: 1.0 + x[:, 0] ** 2).on(lshape_mesh)
    assert lam.shape == mu.shape == (lshape_mesh.n_elements,)
    np.testing.assert_allclose(mu, 1 + lshape_mesh.centroids[:, 0] ** 2)
    with pytest.raises(ValueError):
        Material(1.0, 0.0).on(lshape_mesh)


def test_alpha_root():
    # published singular exponent of the L-shape benchmark
    assert lshape_alpha_root() == pytest.approx(LSHAPE_ALPHA, abs=1e-12)
    # independent check: traction-free 3pi/2 wedge: sin(3 pi a / 2) = a
    assert np.sin(1.5 * np.pi * LSHAPE_ALPHA) == pytest.approx(LSHAPE_ALPHA, abs=1e-11)


@pytest.fixture(scope="module")
def lshape_sympy():
    lam, mu = lame_from_young_poisson(1e5, 0.4999)
    lam, mu = sp.Float(lam, 30), sp.Float(mu, 30)
    a, w = sp.Float(LSHAPE_ALPHA, 30), 3 * sp.pi / 4
    r = sp.sqrt(X ** 2 + Y ** 2)
    phi = sp.atan2(Y, X)
    c1 = -sp.cos((a + 1) * w) / sp.cos((a - 1) * w)
    c2 = 2 * (lam + 2 * mu) / (lam + mu)
    ur = r ** a / (2 * mu) * (-(a + 1) * sp.cos((a + 1) * phi) + (c2 - (a + 1)) * c1 * sp.cos((a - 1) * phi))
    up = r ** a / (2 * mu) * ((a + 1) * sp.sin((a + 1) * phi) + (c2 + a - 1) * c1 * sp.sin((a - 1) * phi))
    u = sp.Matrix([sp.cos(phi) * ur - sp.sin(phi) * up, sp.sin(phi) * ur + sp.cos(phi) * up])
    sig, J = sympy_stress(u, lam, mu)
    return float(lam), float(mu), u, J, sig


def lshape_points(n=12, seed=0):
    rng = np.random.default_rng(seed)
    r = rng.uniform(0.05, 1.0, n)
    phi = rng.uniform(-LSHAPE_OMEGA, LSHAPE_OMEGA, n)
    return np.stack([r * np.cos(phi), r * np.sin(phi)], -1)


def test_lshape_matches_sympy(lshape_sympy):
    lam, mu, u, J, sig = lshape_sympy
    pts = lshape_points()
    np.testing.assert_allclose(lshape_displacement(pts, lam, mu), evaluate(u, pts)[..., 0], rtol=1e-10)
    np.testing.assert_allclose(lshape_gradient(pts, lam, mu), evaluate(J, pts), rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(lshape_exact(pts, lam, mu)[1], evaluate(sig, pts), rtol=1e-8, atol=1e-8)


def test_lshape_equilibrium_and_free_edges(lshape_sympy):
    lam, mu, u, J, sig = lshape_sympy
    div = sp.Matrix([sp.diff(sig[i, 0], X) + sp.diff(sig[i, 1], Y) for i in range(2)])
    pts = lshape_points(6, 1)
    scale = np.abs(evaluate(sig, pts)).max()
    assert np.abs(evaluate(div, pts)).max() < 1e-9 * scale
    # the reentrant edges at polar angles +-3pi/4 are traction free
    for ang in (LSHAPE_OMEGA, -LSHAPE_OMEGA + 1e-15):
        d = np.array([np.cos(ang), np.sin(ang)])
        nrm = np.array([-d[1], d[0]])
        p = np.outer([0.1, 0.5, 0.9], d)
        s = lshape_exact(p, lam, mu)[1]
        assert np.abs(s @ nrm).max() < 1e-9 * np.abs(s).max()


def test_lshape_singular_at_origin():
    with pytest.raises(ValueError):
        lshape_gradient(np.zeros((1, 2)), 1.0, 1.0)
    with pytest.raises(ValueError):
        lshape_problem(Material(1.0, lambda x: x[:, 0]))


def test_lshape_problem_fields():
    prob = lshape_problem(Material(2.0, 1.0))
    assert prob.has_exact and prob.singular_points == ((0.0, 0.0),)
    pts = lshape_points(4)
    np.testing.assert_allclose(prob.f(pts), 0.0)


@pytest.mark.parametrize("degree", [1, 2, 3, 4])
@pytest.mark.parametrize("div_free", [False, True])
def test_manufactured_data_match_sympy(degree, div_free):
    if div_free and degree < 2:
        with pytest.raises(ValueError):
            manufactured_polynomial(degree, Material(1.0, 1.0), True)
        return
    lam, mu = 3.0, 0.7
    prob = manufactured_polynomial(degree, Material(lam, mu), div_free)
    c0, c1 = prob.extra["coefficients"]
    u = sp.Matrix([sum(c[a, b] * X ** a * Y ** b for a in range(c.shape[0]) for b in range(c.shape[1]))
                   for c in (c0, c1)])
    sig, J = sympy_stress(u, lam, mu)
    f = -sp.Matrix([sp.diff(sig[i, 0], X) + sp.diff(sig[i, 1], Y) for i in range(2)])
    pts = np.random.default_rng(degree).uniform(-1, 1, (7, 2))
    np.testing.assert_allclose(prob.u(pts), evaluate(u, pts)[..., 0], atol=1e-12)
    np.testing.assert_allclose(prob.sigma(pts), evaluate(sig, pts), atol=1e-11)
    np.testing.assert_allclose(prob.f(pts), evaluate(f, pts)[..., 0], atol=1e-11)
    nrm = np.array([[0.6, 0.8]] * 7)
    np.testing.assert_allclose(prob.g(pts, nrm), np.einsum("mij,mj->mi", evaluate(sig, pts), nrm), atol=1e-11)
    if div_free:
        np.testing.assert_allclose(np.trace(prob.grad_u(pts), axis1=-2, axis2=-1), 0.0, atol=1e-12)
    # exact polynomial degree
    assert max(a + b for c in (c0, c1) for a, b in zip(*np.nonzero(c))) == degree


def test_cooks_data():
    # standard benchmark data: unit vertical traction on the right edge, no body force
    prob = cooks_problem(Material(1.0, 1.0))
    pts = np.array([[48.0, 50.0], [20.0, 55.0], [48.0, 44.0]])
    nrm = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(cooks_traction(pts, nrm), [[0, 1], [0, 0], [0, 1]])
    np.testing.assert_array_equal(prob.f(pts), 0.0)
    assert prob.homogeneous_dirichlet and not prob.has_exact
