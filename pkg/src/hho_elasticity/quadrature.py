"""Quadrature rules on the reference triangle and the reference segment.

Triangle rules are conical (collapsed) Gauss products: Gauss-Legendre in the
first collapsed coordinate and Gauss-Jacobi with weight ``(1 - b)`` in the
second. They have positive weights and are exact for all polynomials up to
the requested total degree. The collapsed vertex is the third reference
vertex ``(0, 1)``, which is what makes them usable for integrands with a
point singularity at a vertex (see :func:`triangle_points`).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

MAX_DEGREE = 80


class UnsupportedDegree(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    """Points and weights on a reference domain.

    For ``kind == "triangle"`` the points are reference coordinates ``(x, y)``
    in the triangle ``conv{(0,0), (1,0), (0,1)}`` and the weights sum to one,
    so a physical integral is ``area * sum(w * f(x_q))``.  For
    ``kind == "segment"`` the points are parameters ``s`` in ``[-1, 1]`` and
    the weights sum to one as well (multiply by the segment length).
    """

    kind: str
    degree: int
    points: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.weights)

    def barycentric(self) -> np.ndarray:
        if self.kind != "triangle":
            raise ValueError("barycentric coordinates only exist for triangle rules")
        x, y = self.points[:, 0], self.points[:, 1]
        return np.stack([1.0 - x - y, x, y], axis=1)


def _npoints(degree: int) -> int:
    return degree // 2 + 1


def _check_degree(degree: int) -> None:
    if not isinstance(degree, (int, np.integer)) or degree < 0 or degree > MAX_DEGREE:
        raise UnsupportedDegree(f"quadrature degree must be an integer in [0, {MAX_DEGREE}], got {degree!r}")


@lru_cache(maxsize=None)
def _segment(degree: int) -> QuadratureRule:
    n = _npoints(degree)
    s, w = roots_legendre(n)
    pts = np.ascontiguousarray(s)
    wts = np.ascontiguousarray(w / 2.0)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule("segment", degree, pts, wts)


@lru_cache(maxsize=None)
def _triangle(degree: int) -> QuadratureRule:
    n = _npoints(degree)
    a, wa = roots_legendre(n)
    b, wb = roots_jacobi(n, 1.0, 0.0)
    A, B = np.meshgrid(a, b, indexing="ij")
    x = (1.0 + A) * (1.0 - B) / 4.0
    y = (1.0 + B) / 2.0
    w = np.outer(wa, wb)
    w = w / w.sum()
    pts = np.ascontiguousarray(np.stack([x.ravel(), y.ravel()], axis=1))
    wts = np.ascontiguousarray(w.ravel())
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule("triangle", degree, pts, wts)


def quad_rule(domain_kind: str, degree: int) -> QuadratureRule:
    """Return a rule on ``"triangle"`` or ``"segment"`` exact up to ``degree``."""
    _check_degree(degree)
    if domain_kind == "triangle":
        return _triangle(int(degree))
    if domain_kind == "segment":
        return _segment(int(degree))
    raise ValueError(f"unknown domain kind {domain_kind!r}")


def triangle_points(vertices: np.ndarray, rule: QuadratureRule) -> tuple[np.ndarray, np.ndarray]:
    """Map a triangle rule onto a stack of triangles.

    Parameters
    ----------
    vertices : array (M, 3, 2)
        Triangle vertices. The rule collapses towards ``vertices[:, 2]``.
    rule : QuadratureRule

    Returns
    -------
    points : array (M, nq, 2)
    weights : array (M, nq)
        Physical weights (already multiplied by the triangle areas).
    """
    lam = rule.barycentric()
    pts = np.einsum("qv,mvd->mqd", lam, vertices)
    e1 = vertices[:, 1] - vertices[:, 0]
    e2 = vertices[:, 2] - vertices[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    return pts, area[:, None] * rule.weights[None, :]


def segment_points(a: np.ndarray, b: np.ndarray, rule: QuadratureRule) -> tuple[np.ndarray, np.ndarray]:
    """Map a segment rule onto segments ``a -> b`` of shape (M, 2)."""
    s = rule.points
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    pts = mid[:, None, :] + s[None, :, None] * half[:, None, :]
    length = np.linalg.norm(b - a, axis=1)
    return pts, length[:, None] * rule.weights[None, :]
