"""Residual-type error indicators and exact error norms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .approximation import (
    PolyField,
    cell_oscillation_squared,
    dirichlet_oscillation_squared,
    face_oscillation_squared,
)
from .mesh import DIRICHLET, INTERIOR, NEUMANN
from .quadrature import quad_rule, segment_points, triangle_points


@dataclass
class EstimateBreakdown:
    """Per-element indicator contributions and global totals.

    All per-element arrays have shape ``(NT,)``. ``jump_sides`` holds the
    per-side jump terms ``h_F ||[sigma_h] nu_F||^2`` on interior sides (zero
    elsewhere); ``jump`` is their per-element share.
    """

    volume: np.ndarray
    average: np.ndarray
    jump: np.ndarray
    neumann: np.ndarray
    dirichlet: np.ndarray
    jump_sides: np.ndarray
    osc_f: float
    osc_g: float
    osc_ud: float
    mu_max: float
    full_jumps: bool = False

    @property
    def local_eta2(self) -> np.ndarray:
        return self.volume + self.average + self.jump + self.neumann

    @property
    def local_eta_tilde2(self) -> np.ndarray:
        return self.local_eta2 + self.dirichlet

    @property
    def eta2(self) -> float:
        return float(self.volume.sum() + self.average.sum() + self.jump_sides.sum() + self.neumann.sum())

    @property
    def eta(self) -> float:
        return float(np.sqrt(self.eta2))

    @property
    def eta_tilde(self) -> float:
        return float(np.sqrt(self.eta2 + self.mu_max ** 2 * self.osc_ud ** 2))

    def indicators(self, with_dirichlet: bool = True) -> np.ndarray:
        """Refinement indicators ``eta^2(T)`` (with the Dirichlet oscillation share)."""
        return self.local_eta_tilde2 if with_dirichlet else self.local_eta2


def estimate(mesh, ops, u_h, sigma_h: PolyField, average: PolyField, problem, full_jumps: bool = False,
             quad_degree: int | None = None) -> EstimateBreakdown:
    """Compute all indicator contributions.

    Parameters
    ----------
    ops : LocalOperators
    u_h : HhoFunction
    sigma_h : PolyField
        Discrete stress.
    average : PolyField
        The nodal average of the potential reconstruction.
    full_jumps : bool
        Assign each interior side term fully to both neighbours instead of
        splitting it in half.
    """
    k = ops.k
    qd = 2 * (k + 1) + 2 if quad_degree is None else quad_degree
    lam, mu = problem.material.on(mesh)
    nt = mesh.n_elements

    pts, wts = triangle_points(mesh.element_vertices(), quad_rule("triangle", qd))
    dsig = sigma_h.gradient(pts)  # (NT, nq, 2, 2, 2)
    div = np.einsum("mqijj->mqi", dsig)
    res = np.asarray(problem.f(pts), dtype=float) + div
    volume = mesh.diameters ** 2 * np.einsum("mq,mqi->m", wts, res ** 2)

    eps_h = np.einsum("mijcn,mn->mijc", ops.Eps, u_h.local())
    eps_field = PolyField(ops.basis, k, eps_h)
    J = average.gradient(pts)
    diff = 0.5 * (J + np.swapaxes(J, -1, -2)) - eps_field(pts)
    avg = mu ** 2 * np.einsum("mq,mqij->m", wts, diff ** 2)

    rule = quad_rule("segment", qd)
    inner = np.flatnonzero(mesh.side_labels == INTERIOR)
    jump_sides = np.zeros(mesh.n_sides)
    jump = np.zeros(nt)
    if len(inner):
        a = mesh.vertices[mesh.sides[inner, 0]]
        b = mesh.vertices[mesh.sides[inner, 1]]
        spts, swts = segment_points(a, b, rule)
        tp, tm = mesh.side_elements[inner, 0], mesh.side_elements[inner, 1]
        js = np.einsum("mqij,mj->mqi", sigma_h(spts, tp) - sigma_h(spts, tm), mesh.side_normals[inner])
        term = mesh.side_lengths[inner] * np.einsum("mq,mqi->m", swts, js ** 2)
        jump_sides[inner] = term
        share = term if full_jumps else 0.5 * term
        jump += np.bincount(tp, weights=share, minlength=nt) + np.bincount(tm, weights=share, minlength=nt)

    neu = mesh.sides_with_label(NEUMANN)
    neumann = np.zeros(nt)
    osc_g = 0.0
    if len(neu):
        a = mesh.vertices[mesh.sides[neu, 0]]
        b = mesh.vertices[mesh.sides[neu, 1]]
        spts, swts = segment_points(a, b, rule)
        nrm = mesh.side_normals[neu]
        tp = mesh.side_elements[neu, 0]
        g = np.asarray(problem.g(spts, np.broadcast_to(nrm[:, None, :], spts.shape)), dtype=float)
        r = g - np.einsum("mqij,mj->mqi", sigma_h(spts, tp), nrm)
        neumann = np.bincount(tp, weights=mesh.side_lengths[neu] * np.einsum("mq,mqi->m", swts, r ** 2), minlength=nt)

        def gfun(points):
            return problem.g(points, np.broadcast_to(nrm[:, None, :], points.shape))

        osc_g = float(np.sqrt(face_oscillation_squared(gfun, mesh, k, neu, qd).sum()))

    dsides = mesh.sides_with_label(DIRICHLET)
    dirichlet = np.zeros(nt)
    mu_max = float(mu.max())
    osc_ud = 0.0
    if len(dsides) and not problem.homogeneous_dirichlet:
        osc = dirichlet_oscillation_squared(problem.u_d, mesh, k, dsides, problem.grad_u_d, qd)
        osc_ud = float(np.sqrt(osc.sum()))
        dirichlet = mu_max ** 2 * np.bincount(mesh.side_elements[dsides, 0], weights=osc, minlength=nt)

    osc_f = float(np.sqrt(cell_oscillation_squared(problem.f, ops.basis, k, qd).sum()))
    return EstimateBreakdown(volume, avg, jump, neumann, dirichlet, jump_sides, osc_f, osc_g, osc_ud,
                             mu_max, full_jumps)


# ---------------------------------------------------------------------- exact errors
def _split_towards(tri: np.ndarray, levels: int) -> list[np.ndarray]:
    """Geometric subdivision of triangles ``(M, 3, 2)`` whose vertex 0 is singular.

    Returns a list of sub-triangle stacks; the last one touches the singular
    vertex and is ordered with that vertex last (collapsed rules cluster there).
    """
    s, a, b = tri[:, 0], tri[:, 1], tri[:, 2]
    pieces = []
    for _ in range(levels):
        a2 = 0.5 * (s + a)
        b2 = 0.5 * (s + b)
        pieces.append(np.stack([a2, a, b], axis=1))
        pieces.append(np.stack([a2, b, b2], axis=1))
        a, b = a2, b2
    pieces.append(np.stack([a, b, s], axis=1))
    return pieces


def error_quadrature(mesh, degree: int, singular_points=(), levels: int = 12, singular_degree: int = 20):
    """Groups ``(elements, points (M, nq, 2), weights (M, nq))`` covering all elements.

    Elements with a vertex at a singular point are subdivided ``levels`` times
    towards it and integrated with a collapsed rule of ``singular_degree`` near it.
    """
    nt = mesh.n_elements
    special = np.zeros(nt, dtype=bool)
    corner = np.full(nt, -1)
    for sp in singular_points:
        els = mesh.elements_touching(sp)
        for e in els:
            d = np.linalg.norm(mesh.vertices[mesh.triangles[e]] - np.asarray(sp), axis=1)
            corner[e] = int(np.argmin(d))
        special[els] = True
    groups = []
    regular = np.flatnonzero(~special)
    if len(regular):
        pts, wts = triangle_points(mesh.element_vertices(regular), quad_rule("triangle", degree))
        groups.append((regular, pts, wts))
    sing = np.flatnonzero(special)
    if len(sing):
        verts = mesh.element_vertices(sing)
        c = corner[sing]
        order = np.stack([c, (c + 1) % 3, (c + 2) % 3], axis=1)
        verts = np.take_along_axis(verts, order[:, :, None], axis=1)
        pieces = _split_towards(verts, levels)
        plist, wlist = [], []
        for i, piece in enumerate(pieces):
            deg = singular_degree if i == len(pieces) - 1 else max(degree, singular_degree)
            p, w = triangle_points(piece, quad_rule("triangle", deg))
            plist.append(p)
            wlist.append(w)
        groups.append((sing, np.concatenate(plist, axis=1), np.concatenate(wlist, axis=1)))
    return groups


def exact_errors(mesh, ops, u_h, sigma_h: PolyField, problem, degree: int | None = None,
                 chunk: int = 8192) -> dict:
    """``||sigma - sigma_h||``, ``||Pi u - u_T||`` and ``||(1 - Pi_T^k) sigma||``.

    The displacement error uses the cell degree of the scheme.
    """
    if not problem.has_exact:
        raise ValueError("the problem carries no exact solution")
    k = ops.k
    deg = max(2 * (k + 1) + 4, 12) if degree is None else degree
    kc = ops.layout.k_cell
    es = eu = eb = 0.0
    for elements, pts, wts in error_quadrature(mesh, deg, problem.singular_points):
        for start in range(0, len(elements), chunk):
            sl = slice(start, start + chunk)
            el, p, w = elements[sl], pts[sl], wts[sl]
            sig = np.asarray(problem.sigma(p), dtype=float)
            es += float(np.einsum("mq,mqij->", w, (sig - sigma_h(p, el)) ** 2))
            phi = ops.basis.eval(p, el, max(k, kc))
            ps = phi[..., :ops.nG]
            csig = np.einsum("mq,mqij,mqa->mija", w, sig, ps)
            eb += float(np.einsum("mq,mqij->", w, (sig - np.einsum("mija,mqa->mqij", csig, ps)) ** 2))
            u = np.asarray(problem.u(p), dtype=float)
            cu = np.einsum("mq,mqi,mqa->mia", w, u, phi[..., :ops.layout.nc])
            eu += float(np.sum((cu - u_h.cell[el]) ** 2))
    return {"err_sigma": np.sqrt(es), "err_l2": np.sqrt(eu), "best_sigma": np.sqrt(eb)}
