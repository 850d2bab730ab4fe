"""Orthonormal hierarchical polynomial bases on triangles and sides.

Element bases start from scaled monomials ``((x - c_T) / h_T)^(a, b)`` ordered
by total degree and are orthonormalized in ``L^2(T)`` with a lower triangular
transform, so the first ``dim P_j`` functions span ``P_j(T)`` for every
``j <= degree``. Side bases are scaled Legendre polynomials.
"""
from __future__ import annotations

import numpy as np
from scipy.special import eval_legendre

from .quadrature import quad_rule, triangle_points


def dim_p(degree: int) -> int:
    """Dimension of scalar ``P_degree`` on a triangle."""
    return (degree + 1) * (degree + 2) // 2


def monomial_exponents(degree: int) -> np.ndarray:
    """Exponents ``(a, b)`` ordered by total degree, then by ``b``."""
    return np.array([(d - b, b) for d in range(degree + 1) for b in range(d + 1)], dtype=np.int64)


def _scaled_monomials(xi: np.ndarray, exps: np.ndarray, grad: bool):
    """Monomials and their gradients in the scaled variable ``xi``."""
    a = exps[:, 0]
    b = exps[:, 1]
    deg = int(exps.sum(axis=1).max()) if len(exps) else 0
    # power tables x^0 .. x^deg
    px = np.cumprod(np.concatenate([np.ones(xi.shape[:-1] + (1,)),
                                    np.repeat(xi[..., 0, None], deg, axis=-1)], axis=-1), axis=-1)
    py = np.cumprod(np.concatenate([np.ones(xi.shape[:-1] + (1,)),
                                    np.repeat(xi[..., 1, None], deg, axis=-1)], axis=-1), axis=-1)
    xa = px[..., a]
    yb = py[..., b]
    val = xa * yb
    if not grad:
        return val, None
    dx = a * px[..., np.maximum(a - 1, 0)] * yb
    dy = b * xa * py[..., np.maximum(b - 1, 0)]
    return val, np.stack([dx, dy], axis=-1)


class ElementBasis:
    """``L^2``-orthonormal basis of ``P_degree(T)`` on every element of a mesh.

    Parameters
    ----------
    mesh : Triangulation
    degree : int
        Highest polynomial degree; lower degrees are prefixes of the basis.
    """

    def __init__(self, mesh, degree: int):
        self.mesh = mesh
        self.degree = int(degree)
        self.exponents = monomial_exponents(self.degree)
        self.dim = len(self.exponents)
        self.centers = np.asarray(mesh.centroids)
        self.scales = np.asarray(mesh.diameters)
        self.transform = self._orthonormalize()

    def size(self, degree: int) -> int:
        if degree > self.degree:
            raise ValueError(f"basis only holds degree <= {self.degree}")
        return dim_p(degree)

    def _orthonormalize(self) -> np.ndarray:
        rule = quad_rule("triangle", 2 * self.degree)
        pts, wts = triangle_points(self.mesh.element_vertices(), rule)
        xi = (pts - self.centers[:, None, :]) / self.scales[:, None, None]
        m, _ = _scaled_monomials(xi, self.exponents, grad=False)
        transform = np.broadcast_to(np.eye(self.dim), (len(wts), self.dim, self.dim)).copy()
        # two Gram-Schmidt passes via Cholesky for robustness
        for _ in range(2):
            phi = m @ np.swapaxes(transform, 1, 2)
            gram = np.swapaxes(phi * wts[:, :, None], 1, 2) @ phi
            low = np.linalg.cholesky(gram)
            inv = np.tril(np.linalg.inv(low))
            transform = np.einsum("mij,mjk->mik", inv, transform)
        return transform

    def eval(self, points: np.ndarray, elements=None, degree: int | None = None, grad: bool = False):
        """Evaluate basis functions (and gradients) at physical points.

        Parameters
        ----------
        points : array (M, nq, 2)
            Points for each of the ``M`` selected elements.
        elements : array (M,), optional
            Element ids; all elements when omitted.
        degree : int, optional
            Truncate to ``P_degree``.
        grad : bool

        Returns
        -------
        values : array (M, nq, n)
        gradients : array (M, nq, n, 2), only if ``grad``
        """
        n = self.dim if degree is None else self.size(degree)
        sel = slice(None) if elements is None else np.asarray(elements)
        c = self.centers[sel]
        h = self.scales[sel]
        t = self.transform[sel][:, :n, :n]
        xi = (points - c[:, None, :]) / h[:, None, None]
        m, dm = _scaled_monomials(xi, self.exponents[:n], grad)
        tt = np.swapaxes(t, 1, 2)
        val = m @ tt
        if not grad:
            return val
        g = np.swapaxes(np.swapaxes(dm, 2, 3) @ tt[:, None], 2, 3) / h[:, None, None, None]
        return val, g

    def monomial_to_basis(self, elements=None, degree: int | None = None) -> np.ndarray:
        """Transform ``C`` with ``phi = C @ scaled_monomials``."""
        n = self.dim if degree is None else self.size(degree)
        sel = slice(None) if elements is None else np.asarray(elements)
        return self.transform[sel][:, :n, :n]


def legendre_values(s: np.ndarray, degree: int, lengths: np.ndarray) -> np.ndarray:
    """Orthonormal Legendre basis on sides of the given lengths.

    Parameters
    ----------
    s : array (..., nq)
        Parameters in ``[-1, 1]``.
    lengths : array broadcastable to ``s[..., 0]``

    Returns
    -------
    array (..., nq, degree + 1)
    """
    j = np.arange(degree + 1)
    p = eval_legendre(j, np.asarray(s)[..., None])
    scale = np.sqrt((2 * j + 1) / np.asarray(lengths, dtype=float)[..., None, None])
    return p * scale


def legendre_derivatives(s: np.ndarray, degree: int, lengths: np.ndarray) -> np.ndarray:
    """Arc-length derivatives of :func:`legendre_values`."""
    s = np.asarray(s)[..., None]
    out = np.zeros(s.shape[:-1] + (degree + 1,))
    # P_j' = sum over i = j-1, j-3, ... of (2i+1) P_i
    pv = eval_legendre(np.arange(degree + 1), s)
    for j in range(1, degree + 1):
        acc = np.zeros(s.shape[:-1])
        for i in range(j - 1, -1, -2):
            acc = acc + (2 * i + 1) * pv[..., i]
        out[..., j] = acc
    lengths = np.asarray(lengths, dtype=float)[..., None, None]
    j = np.arange(degree + 1)
    return out * np.sqrt((2 * j + 1) / lengths) * (2.0 / lengths)


def side_parameter(points: np.ndarray, sides, mesh) -> np.ndarray:
    """Parameter ``s`` in ``[-1, 1]`` of points on the given sides.

    ``s = -1`` at ``mesh.sides[f, 0]`` and ``s = 1`` at ``mesh.sides[f, 1]``.
    """
    a = mesh.vertices[mesh.sides[sides, 0]]
    b = mesh.vertices[mesh.sides[sides, 1]]
    t = b - a
    l2 = np.einsum("md,md->m", t, t)
    return 2.0 * np.einsum("mqd,md->mq", points - a[:, None, :], t) / l2[:, None] - 1.0
