"""Material law, load and boundary data, and exact solutions of the benchmarks."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import brentq

# first root of alpha sin(2 omega) + sin(2 omega alpha) = 0 for omega = 3 pi / 4
LSHAPE_ALPHA = 0.544483736782
LSHAPE_OMEGA = 3.0 * np.pi / 4.0


def lame_from_young_poisson(E: float, nu: float) -> tuple[float, float]:
    """Lame parameters ``(lambda, mu)`` from Young's modulus and Poisson ratio."""
    if E <= 0:
        raise ValueError("Young's modulus must be positive")
    if not -1.0 < nu < 0.5:
        raise ValueError("Poisson ratio must lie in (-1, 1/2); nu = 1/2 is the incompressible limit")
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = E / (2.0 * (1.0 + nu))
    return lam, mu


def apply_elasticity_tensor(tau: np.ndarray, lam, mu) -> np.ndarray:
    """``C tau = 2 mu tau + lam tr(tau) I`` for stacks of 2x2 matrices."""
    tau = np.asarray(tau, dtype=float)
    lam = np.asarray(lam, dtype=float)[..., None, None]
    mu = np.asarray(mu, dtype=float)[..., None, None]
    tr = np.trace(tau, axis1=-2, axis2=-1)[..., None, None]
    return 2.0 * mu * tau + lam * tr * np.eye(2)


def apply_compliance_tensor(sigma: np.ndarray, lam, mu) -> np.ndarray:
    """Inverse of :func:`apply_elasticity_tensor` in two dimensions."""
    sigma = np.asarray(sigma, dtype=float)
    lam = np.asarray(lam, dtype=float)[..., None, None]
    mu = np.asarray(mu, dtype=float)[..., None, None]
    tr = np.trace(sigma, axis1=-2, axis2=-1)[..., None, None]
    return sigma / (2.0 * mu) - lam * tr * np.eye(2) / (2.0 * mu * (2.0 * mu + 2.0 * lam))


@dataclass(frozen=True)
class Material:
    """Lame parameters, constant or given as functions of position.

    Piecewise constant coefficients are sampled at element centroids.
    """

    lam: float | Callable = 1.0
    mu: float | Callable = 1.0

    @classmethod
    def from_young_poisson(cls, E: float, nu: float) -> "Material":
        return cls(*lame_from_young_poisson(E, nu))

    def on(self, mesh) -> tuple[np.ndarray, np.ndarray]:
        """Per-element ``(lam, mu)`` arrays."""
        def sample(v):
            if callable(v):
                return np.asarray(v(mesh.centroids), dtype=float)
            return np.full(mesh.n_elements, float(v))
        lam, mu = sample(self.lam), sample(self.mu)
        if np.any(mu <= 0) or np.any(lam < 0):
            raise ValueError("need mu > 0 and lambda >= 0")
        return lam, mu

    @property
    def is_constant(self) -> bool:
        return not callable(self.lam) and not callable(self.mu)


def _zero_vector(points):
    return np.zeros(np.shape(points))


def _zero_traction(points, normals):
    return np.zeros(np.shape(points))


@dataclass
class ProblemData:
    """Loads, boundary data and (optionally) the exact solution.

    Vector fields map points ``(..., 2)`` to ``(..., 2)``; the traction ``g``
    also receives the outward unit normals ``(..., 2)``. ``grad_u`` returns
    the Jacobian ``(..., 2, 2)`` with ``[i, j] = d u_i / d x_j``.
    """

    material: Material
    f: Callable = _zero_vector
    g: Callable = _zero_traction
    u_d: Callable = _zero_vector
    grad_u_d: Optional[Callable] = None
    u: Optional[Callable] = None
    grad_u: Optional[Callable] = None
    sigma: Optional[Callable] = None
    singular_points: tuple = ()
    name: str = "custom"
    # polynomial degree of f if it is a polynomial, else None
    f_degree: Optional[int] = None
    homogeneous_dirichlet: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def has_exact(self) -> bool:
        return self.u is not None and self.sigma is not None


# ---------------------------------------------------------------------- L-shape
def lshape_alpha_root() -> float:
    """Solve ``a sin(2w) + sin(2wa) = 0`` for its first root in ``(0.5, 0.6)``."""
    w = LSHAPE_OMEGA
    return brentq(lambda a: a * np.sin(2 * w) + np.sin(2 * w * a), 0.5, 0.6, xtol=1e-15)


def _lshape_polar(r, phi, lam, mu, alpha=LSHAPE_ALPHA, omega=LSHAPE_OMEGA):
    c1 = -np.cos((alpha + 1) * omega) / np.cos((alpha - 1) * omega)
    c2 = 2.0 * (lam + 2.0 * mu) / (lam + mu)
    ap, am = alpha + 1.0, alpha - 1.0
    A = -ap * np.cos(ap * phi) + (c2 - ap) * c1 * np.cos(am * phi)
    B = ap * np.sin(ap * phi) + (c2 + am) * c1 * np.sin(am * phi)
    dA = ap * ap * np.sin(ap * phi) - (c2 - ap) * c1 * am * np.sin(am * phi)
    dB = ap * ap * np.cos(ap * phi) + (c2 + am) * c1 * am * np.cos(am * phi)
    return A, B, dA, dB


def lshape_displacement(points, lam, mu):
    p = np.asarray(points, dtype=float)
    r = np.hypot(p[..., 0], p[..., 1])
    phi = np.arctan2(p[..., 1], p[..., 0])
    A, B, _, _ = _lshape_polar(r, phi, lam, mu)
    s = r ** LSHAPE_ALPHA / (2.0 * mu)
    ur, uphi = s * A, s * B
    c, sn = np.cos(phi), np.sin(phi)
    return np.stack([c * ur - sn * uphi, sn * ur + c * uphi], axis=-1)


def lshape_gradient(points, lam, mu):
    """Analytic Jacobian of the L-shape displacement."""
    p = np.asarray(points, dtype=float)
    r = np.hypot(p[..., 0], p[..., 1])
    if np.any(r == 0):
        raise ValueError("the L-shape solution is singular at the origin")
    phi = np.arctan2(p[..., 1], p[..., 0])
    A, B, dA, dB = _lshape_polar(r, phi, lam, mu)
    s = r ** (LSHAPE_ALPHA - 1.0) / (2.0 * mu)
    # polar Jacobian: rows (u_r, u_phi), columns (d_r, d_phi / r)
    Mp = np.empty(p.shape[:-1] + (2, 2))
    Mp[..., 0, 0] = s * LSHAPE_ALPHA * A
    Mp[..., 0, 1] = s * (dA - B)
    Mp[..., 1, 0] = s * LSHAPE_ALPHA * B
    Mp[..., 1, 1] = s * (dB + A)
    c, sn = np.cos(phi), np.sin(phi)
    Q = np.empty_like(Mp)
    Q[..., 0, 0], Q[..., 0, 1], Q[..., 1, 0], Q[..., 1, 1] = c, -sn, sn, c
    return Q @ Mp @ np.swapaxes(Q, -1, -2)


def lshape_exact(points, lam, mu):
    """Exact displacement and stress of the L-shape benchmark."""
    J = lshape_gradient(points, lam, mu)
    eps = 0.5 * (J + np.swapaxes(J, -1, -2))
    return lshape_displacement(points, lam, mu), apply_elasticity_tensor(eps, lam, mu)


def lshape_problem(material: Material) -> ProblemData:
    if not material.is_constant:
        raise ValueError("the L-shape solution needs constant Lame parameters")
    lam, mu = float(material.lam), float(material.mu)
    u = lambda x: lshape_displacement(x, lam, mu)  # noqa: E731
    grad = lambda x: lshape_gradient(x, lam, mu)  # noqa: E731
    sigma = lambda x: lshape_exact(x, lam, mu)[1]  # noqa: E731
    return ProblemData(material, u_d=u, grad_u_d=grad, u=u, grad_u=grad, sigma=sigma,
                       singular_points=((0.0, 0.0),), name="lshape", f_degree=0)


# ---------------------------------------------------------------------- Cook
def cooks_traction(points, normals):
    """Unit vertical traction on the right edge ``x = 48``, zero elsewhere."""
    p = np.asarray(points, dtype=float)
    out = np.zeros(p.shape)
    out[..., 1] = np.where(np.abs(p[..., 0] - 48.0) < 1e-9, 1.0, 0.0)
    return out


def cooks_problem(material: Material) -> ProblemData:
    return ProblemData(material, g=cooks_traction, name="cooks", f_degree=0, homogeneous_dirichlet=True)


# ---------------------------------------------------------------------- manufactured
def _poly_u(degree: int, divergence_free: bool) -> tuple[np.ndarray, np.ndarray]:
    """2D coefficient arrays ``c[a, b]`` of ``x^a y^b`` for both components."""
    n = max(degree, 1) + 1
    u0 = np.zeros((n, n))
    u1 = np.zeros((n, n))
    if divergence_free:
        if degree < 2:
            raise ValueError("the divergence-free field needs degree >= 2")
        # (x^d, -d x^(d-1) y) + (0.3 y, -0.2 x)
        u0[degree, 0] = 1.0
        u1[degree - 1, 1] = -float(degree)
        u0[0, 1] = 0.3
        u1[1, 0] = -0.2
        return u0, u1
    if degree == 1:
        u0[1, 0] = 1.0
        u1[0, 1] = -1.0
    elif degree == 2:
        u0[2, 0] = 1.0
        u1[1, 1] = 1.0
    else:
        u0[degree, 0] = 1.0
        u0[1, degree - 1] = 1.0
        u1[degree - 1, 1] = 1.0
        u1[0, degree] = -1.0
        u1[2, 0] = 0.5
    u0[0, 0], u1[0, 0] = 0.1, -0.2
    return u0, u1


def _polyder2d(c: np.ndarray, axis: int) -> np.ndarray:
    d = P.polyder(c, axis=axis)
    out = np.zeros_like(c)
    out[: d.shape[0], : d.shape[1]] = d
    return out


def manufactured_polynomial(degree: int, material: Material, divergence_free: bool = False) -> ProblemData:
    """Polynomial displacement of the given degree with matching data.

    ``f = -div C eps(u)``, ``g = C eps(u) nu`` and ``u_D = u``.
    """
    if not material.is_constant:
        raise ValueError("manufactured data assume constant Lame parameters")
    lam, mu = float(material.lam), float(material.mu)
    u0, u1 = _poly_u(degree, divergence_free)
    comps = (u0, u1)
    # J[i][j] = d u_i / d x_j
    J = [[_polyder2d(c, j) for j in range(2)] for c in comps]
    eps = [[0.5 * (J[i][j] + J[j][i]) for j in range(2)] for i in range(2)]
    tr = eps[0][0] + eps[1][1]
    sig = [[2 * mu * eps[i][j] + (lam * tr if i == j else 0.0) for j in range(2)] for i in range(2)]
    fcoef = [-(_polyder2d(sig[i][0], 0) + _polyder2d(sig[i][1], 1)) for i in range(2)]

    def ev(c, x):
        return P.polyval2d(x[..., 0], x[..., 1], c)

    def u(x):
        return np.stack([ev(c, x) for c in comps], axis=-1)

    def grad(x):
        return np.stack([np.stack([ev(J[i][j], x) for j in range(2)], -1) for i in range(2)], -2)

    def sigma(x):
        return np.stack([np.stack([ev(sig[i][j], x) for j in range(2)], -1) for i in range(2)], -2)

    def f(x):
        return np.stack([ev(c, x) for c in fcoef], axis=-1)

    def g(x, normals):
        return np.einsum("...ij,...j->...i", sigma(x), normals)

    return ProblemData(material, f=f, g=g, u_d=u, grad_u_d=grad, u=u, grad_u=grad, sigma=sigma,
                       name=f"poly{degree}", f_degree=max(degree - 2, 0),
                       extra={"coefficients": comps, "degree": degree})


def zero_problem(material: Material) -> ProblemData:
    return ProblemData(material, name="zero", f_degree=0, homogeneous_dirichlet=True)
