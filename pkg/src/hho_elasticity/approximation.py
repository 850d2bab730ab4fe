"""L^2 projections onto cell and side polynomials, piecewise fields and data oscillations.

Evaluable fields are callables ``f(points)`` taking an array ``(..., 2)`` and
returning ``(...)``, ``(..., 2)`` or ``(..., 2, 2)`` for scalar, vector or
matrix rank. Coefficient blocks are stored component-major, i.e. with shape
``(M, *rank, n)``, so a flattened vector block reads ``[x-coefficients,
y-coefficients]``.
"""
from __future__ import annotations

import numpy as np
from numpy.polynomial import legendre as npleg

from .basis import ElementBasis, legendre_values
from .quadrature import quad_rule, segment_points, triangle_points


def l2_project_cell(f, basis: ElementBasis, degree: int, elements=None, quad_degree: int | None = None) -> np.ndarray:
    """Coefficients of ``Pi_T^degree f`` on the selected elements.

    Returns
    -------
    array (M, *rank, dim P_degree)
    """
    mesh = basis.mesh
    elements = np.arange(mesh.n_elements) if elements is None else np.atleast_1d(elements)
    qd = 2 * degree + 2 if quad_degree is None else quad_degree
    pts, wts = triangle_points(mesh.element_vertices(elements), quad_rule("triangle", qd))
    phi = basis.eval(pts, elements, degree)
    fv = np.asarray(f(pts), dtype=float)
    return np.einsum("mq,mq...,mqa->m...a", wts, fv, phi)


def l2_project_face(g, mesh, degree: int, sides=None, quad_degree: int | None = None) -> np.ndarray:
    """Coefficients of ``Pi_F^degree g`` in the orthonormal Legendre basis.

    Returns
    -------
    array (M, *rank, degree + 1)
    """
    sides = np.arange(mesh.n_sides) if sides is None else np.atleast_1d(sides)
    qd = 2 * degree + 2 if quad_degree is None else quad_degree
    rule = quad_rule("segment", qd)
    a = mesh.vertices[mesh.sides[sides, 0]]
    b = mesh.vertices[mesh.sides[sides, 1]]
    pts, wts = segment_points(a, b, rule)
    psi = legendre_values(np.broadcast_to(rule.points, wts.shape), degree, mesh.side_lengths[sides])
    gv = np.asarray(g(pts), dtype=float)
    return np.einsum("mq,mq...,mqa->m...a", wts, gv, psi)


class PolyField:
    """Piecewise polynomial field on all elements of a mesh.

    Parameters
    ----------
    basis : ElementBasis
    degree : int
    coefficients : array (NT, *rank, dim P_degree)
    """

    def __init__(self, basis: ElementBasis, degree: int, coefficients: np.ndarray):
        self.basis = basis
        self.degree = int(degree)
        self.coefficients = np.asarray(coefficients, dtype=float)
        n = basis.size(self.degree)
        if self.coefficients.shape[0] != basis.mesh.n_elements or self.coefficients.shape[-1] != n:
            raise ValueError("coefficient block sizes do not match the degree and mesh")

    @property
    def rank_shape(self) -> tuple:
        return self.coefficients.shape[1:-1]

    def __call__(self, points: np.ndarray, elements=None) -> np.ndarray:
        """Values ``(M, nq, *rank)`` at points ``(M, nq, 2)``."""
        phi = self.basis.eval(points, elements, self.degree)
        c = self.coefficients if elements is None else self.coefficients[np.asarray(elements)]
        return np.einsum("m...a,mqa->mq...", c, phi)

    def gradient(self, points: np.ndarray, elements=None) -> np.ndarray:
        """Gradients ``(M, nq, *rank, 2)``; last axis is the derivative direction."""
        _, dphi = self.basis.eval(points, elements, self.degree, grad=True)
        c = self.coefficients if elements is None else self.coefficients[np.asarray(elements)]
        return np.einsum("m...a,mqad->mq...d", c, dphi)

    def l2_norm(self) -> float:
        # orthonormal basis: the norm is the coefficient norm
        return float(np.sqrt(np.sum(self.coefficients ** 2)))


# ---------------------------------------------------------------------- oscillations
def cell_oscillation_squared(f, basis: ElementBasis, k: int, quad_degree: int | None = None) -> np.ndarray:
    """Per-element ``h_T^2 ||(1 - Pi_T^k) f||^2_{L^2(T)}``."""
    mesh = basis.mesh
    qd = 2 * (k + 1) + 2 if quad_degree is None else quad_degree
    elements = np.arange(mesh.n_elements)
    pts, wts = triangle_points(mesh.element_vertices(), quad_rule("triangle", qd))
    fv = np.asarray(f(pts), dtype=float)
    phi = basis.eval(pts, elements, k)
    coef = np.einsum("mq,mq...,mqa->m...a", wts, fv, phi)
    res = fv - np.einsum("m...a,mqa->mq...", coef, phi)
    sq = res.reshape(res.shape[0], res.shape[1], -1) ** 2
    return mesh.diameters ** 2 * np.einsum("mq,mqc->m", wts, sq)


def face_oscillation_squared(g, mesh, k: int, sides, quad_degree: int | None = None) -> np.ndarray:
    """Per-side ``h_F ||(1 - Pi_F^k) g||^2_{L^2(F)}`` on the given sides."""
    sides = np.atleast_1d(np.asarray(sides, dtype=np.int64))
    if sides.size == 0:
        return np.zeros(0)
    qd = 2 * (k + 1) + 2 if quad_degree is None else quad_degree
    rule = quad_rule("segment", qd)
    pts, wts = segment_points(mesh.vertices[mesh.sides[sides, 0]], mesh.vertices[mesh.sides[sides, 1]], rule)
    psi = legendre_values(np.broadcast_to(rule.points, wts.shape), k, mesh.side_lengths[sides])
    gv = np.asarray(g(pts), dtype=float)
    coef = np.einsum("mq,mq...,mqa->m...a", wts, gv, psi)
    res = gv - np.einsum("m...a,mqa->mq...", coef, psi)
    sq = res.reshape(res.shape[0], res.shape[1], -1) ** 2
    return mesh.side_lengths[sides] * np.einsum("mq,mqc->m", wts, sq)


def lobatto_nodes(npts: int) -> np.ndarray:
    """Gauss-Lobatto nodes on ``[-1, 1]`` (including both endpoints)."""
    if npts < 2:
        raise ValueError("Gauss-Lobatto rules need at least two nodes")
    inner = npleg.legroots(npleg.legder([0] * (npts - 1) + [1])) if npts > 2 else np.zeros(0)
    return np.concatenate([[-1.0], np.sort(np.real(inner)), [1.0]])


def dirichlet_oscillation_squared(u_d, mesh, k: int, sides, grad_u_d=None, quad_degree: int | None = None) -> np.ndarray:
    """Per-side ``h_F ||d/ds (u_D - I_D u_D)||^2_{L^2(F)}``.

    ``I_D`` interpolates at the ``k + 2`` Gauss-Lobatto points of each side
    (degree ``k + 1``, endpoint values kept). ``grad_u_d(points)`` returns the
    Jacobian ``(..., 2, 2)`` with ``[i, j] = d u_i / d x_j``; without it the
    tangential derivative is taken by central differences along the side.
    """
    sides = np.atleast_1d(np.asarray(sides, dtype=np.int64))
    if sides.size == 0:
        return np.zeros(0)
    qd = 2 * (k + 1) + 2 if quad_degree is None else quad_degree
    rule = quad_rule("segment", qd)
    a = mesh.vertices[mesh.sides[sides, 0]]
    b = mesh.vertices[mesh.sides[sides, 1]]
    length = mesh.side_lengths[sides]
    tangent = (b - a) / length[:, None]
    pts, wts = segment_points(a, b, rule)

    if grad_u_d is not None:
        du = np.einsum("mqij,mj->mqi", np.asarray(grad_u_d(pts), dtype=float), tangent)
    else:
        step = 1e-6 * length[:, None, None]
        du = (np.asarray(u_d(pts + step * tangent[:, None, :])) - np.asarray(u_d(pts - step * tangent[:, None, :]))) / (2 * step)

    nodes = lobatto_nodes(k + 2)
    node_pts = 0.5 * (a + b)[:, None, :] + nodes[None, :, None] * 0.5 * (b - a)[:, None, :]
    node_vals = np.asarray(u_d(node_pts), dtype=float)  # (M, k+2, 2)
    vander = npleg.legvander(nodes, k + 1)
    coef = np.linalg.solve(vander, node_vals)  # (M, k+2, 2) Legendre coefficients in s
    dcoef = npleg.legder(coef, axis=1)
    dinterp = np.einsum("qj,mjc->mqc", npleg.legvander(rule.points, k), dcoef) * (2.0 / length)[:, None, None]
    res = du - dinterp
    return length * np.einsum("mq,mqc->m", wts, res ** 2)


def oscillation(kind: str, datum, mesh, k: int, basis: ElementBasis | None = None, sides=None, grad=None) -> float:
    """Global data oscillation of a load, traction or Dirichlet datum.

    ``kind`` is ``"f"`` (cells), ``"g"`` (Neumann sides) or ``"u_D"``
    (Dirichlet sides). ``sides`` defaults to the sides carrying the matching label.
    """
    from .mesh import DIRICHLET, NEUMANN

    if kind == "f":
        basis = ElementBasis(mesh, k) if basis is None else basis
        return float(np.sqrt(cell_oscillation_squared(datum, basis, k).sum()))
    if kind == "g":
        sides = mesh.sides_with_label(NEUMANN) if sides is None else sides
        return float(np.sqrt(face_oscillation_squared(datum, mesh, k, sides).sum()))
    if kind == "u_D":
        sides = mesh.sides_with_label(DIRICHLET) if sides is None else sides
        return float(np.sqrt(dirichlet_oscillation_squared(datum, mesh, k, sides, grad).sum()))
    raise ValueError(f"unknown oscillation kind {kind!r}")


__all__ = [
    "PolyField",
    "cell_oscillation_squared",
    "dirichlet_oscillation_squared",
    "face_oscillation_squared",
    "l2_project_cell",
    "l2_project_face",
    "lobatto_nodes",
    "oscillation",
]
