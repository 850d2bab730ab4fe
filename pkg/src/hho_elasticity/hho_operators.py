"""Element-local HHO operators for planar elasticity.

Local dof layout of an element (``nc = dim P_{k_cell}``, ``nf = k + 1``)::

    [ v_T,x (nc) | v_T,y (nc) | side 0: v_F,x (nf), v_F,y (nf) | side 1 ... | side 2 ... ]

Local side ``j`` is opposite local vertex ``j``. Side polynomials use the
global side orientation, so neighbouring elements share coefficients.

Gradient convention: ``(D v)_{ij} = d v_i / d x_j``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import ElementBasis, dim_p, legendre_values
from .quadrature import quad_rule, segment_points, triangle_points

VARIANTS = ("classic", "tilde", "hdg")

# number of elements processed per vectorized batch
_CHUNK = 4096


class VariantError(ValueError):
    """Unknown stabilization variant or variant/layout mismatch."""


@dataclass(frozen=True)
class LocalDofLayout:
    """Sizes of the local cell and side blocks."""

    k: int
    variant: str

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("the potential reconstruction needs k >= 1")
        if self.variant not in VARIANTS:
            raise VariantError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")

    @property
    def k_cell(self) -> int:
        return self.k + 1 if self.variant == "hdg" else self.k

    @property
    def nc(self) -> int:
        return dim_p(self.k_cell)

    @property
    def nf(self) -> int:
        return self.k + 1

    @property
    def n_cell(self) -> int:
        return 2 * self.nc

    @property
    def n_local(self) -> int:
        return 2 * self.nc + 6 * self.nf

    def face_slice(self, j: int) -> slice:
        start = 2 * self.nc + 2 * self.nf * j
        return slice(start, start + 2 * self.nf)


def side_quadrature(mesh, k: int):
    """Points ``(NS, nq, 2)``, weights ``(NS, nq)`` and basis ``(NS, nq, k+1)`` on all sides."""
    rule = quad_rule("segment", 2 * k + 2)
    a = mesh.vertices[mesh.sides[:, 0]]
    b = mesh.vertices[mesh.sides[:, 1]]
    pts, wts = segment_points(a, b, rule)
    psi = legendre_values(np.broadcast_to(rule.points, wts.shape), k, mesh.side_lengths)
    return pts, wts, psi


class LocalOperators:
    """Reconstruction, stabilization and stiffness matrices of every element.

    Parameters
    ----------
    mesh : Triangulation
    k : int
        Side degree (and cell degree for the equal-order variants).
    variant : {"classic", "tilde", "hdg"}

    Attributes
    ----------
    R : array (NT, 2, dim P_{k+1}, N)
        Local dofs to coefficients of the potential reconstruction.
    G : array (NT, 2, 2, dim P_k, N)
        Local dofs to coefficients of the gradient reconstruction.
    Eps : array (NT, 2, 2, dim P_k, N)
        Symmetric part of ``G``.
    S : array (NT, N, N)
        Unweighted stabilization matrix of the chosen variant.
    """

    def __init__(self, mesh, k: int, variant: str = "classic"):
        self.layout = LocalDofLayout(int(k), variant)
        self.mesh = mesh
        self.k = self.layout.k
        self.variant = variant
        self.basis = ElementBasis(mesh, self.k + 1)
        self.nR = dim_p(self.k + 1)
        self.nG = dim_p(self.k)
        self.side_pts, self.side_wts, self.side_psi = side_quadrature(mesh, self.k)
        nt = mesh.n_elements
        N = self.layout.n_local
        self.R = np.empty((nt, 2, self.nR, N))
        self.G = np.empty((nt, 2, 2, self.nG, N))
        self.S = np.empty((nt, N, N))
        for start in range(0, nt, _CHUNK):
            sel = np.arange(start, min(start + _CHUNK, nt))
            self._build(sel)
        self.Eps = 0.5 * (self.G + self.G.transpose(0, 2, 1, 3, 4))

    # ------------------------------------------------------------------ build
    def _cell_integrals(self, sel):
        lay = self.layout
        rule = quad_rule("triangle", 2 * (self.k + 1))
        pts, wts = triangle_points(self.mesh.element_vertices(sel), rule)
        phi, dphi = self.basis.eval(pts, sel, grad=True)
        # D[m, j, c, a] = int d_j psi_c phi_a  (psi in P_k, phi cell basis)
        D = np.einsum("mq,mqcj,mqa->mjca", wts, dphi[:, :, :self.nG], phi[:, :, :lay.nc])
        # Sg[m, l, n, a, b] = int d_l phi_a d_n phi_b over P_{k+1}
        Sg = np.einsum("mq,mqal,mqbn->mlnab", wts, dphi, dphi)
        # Q[m, n, a, c] = int d_n phi_a psi_c
        Q = np.einsum("mq,mqan,mqc->mnac", wts, dphi, phi[:, :, :self.nG])
        # mean of gradients for the rotation constraint
        gmean = np.einsum("mq,mqan->man", wts, dphi)
        return D, Sg, Q, gmean

    def _trace_integrals(self, sel):
        """Tr[m, j, b, a] = int_{F_j} chi_b phi_a (chi side basis, phi P_{k+1})."""
        mesh = self.mesh
        sides = mesh.element_sides[sel]  # (M, 3)
        pts = self.side_pts[sides]  # (M, 3, nq, 2)
        M, _, nq, _ = pts.shape
        phi = self.basis.eval(pts.reshape(M, 3 * nq, 2), sel).reshape(M, 3, nq, self.nR)
        wts = self.side_wts[sides]
        psi = self.side_psi[sides]
        return np.einsum("mjq,mjqb,mjqa->mjba", wts, psi, phi)

    def _build(self, sel):
        mesh = self.mesh
        lay = self.layout
        k, nc, nf, nG, nR = self.k, lay.nc, lay.nf, self.nG, self.nR
        M = len(sel)
        N = lay.n_local
        D, Sg, Q, gmean = self._cell_integrals(sel)
        Tr = self._trace_integrals(sel)
        normals = mesh.element_normals[sel]  # (M, 3, 2)
        lengths = mesh.element_side_lengths[sel]  # (M, 3)

        # gradient reconstruction, tested with psi_c e_i (x) e_j
        G = np.zeros((M, 2, 2, nG, N))
        for i in range(2):
            for j in range(2):
                G[:, i, j, :, i * nc:(i + 1) * nc] = -D[:, j]
                for f in range(3):
                    col = lay.face_slice(f).start + i * nf
                    G[:, i, j, :, col:col + nf] += normals[:, f, j, None, None] * Tr[:, f, :, :nG].transpose(0, 2, 1)
        Eps = 0.5 * (G + G.transpose(0, 2, 1, 3, 4))

        # potential reconstruction with three Lagrange multipliers
        h2 = mesh.diameters[sel] ** 2
        n2 = 2 * nR
        K = np.zeros((M, n2 + 3, n2 + 3))
        # eps(phi_a e_i) : eps(phi_b e_l) = (delta_il grad phi_a . grad phi_b + d_l phi_a d_i phi_b) / 2
        lap = Sg[:, 0, 0] + Sg[:, 1, 1]
        for i in range(2):
            for l in range(2):
                blk = 0.5 * Sg[:, l, i]
                if i == l:
                    blk = blk + 0.5 * lap
                K[:, i * nR:(i + 1) * nR, l * nR:(l + 1) * nR] = blk
        K[:, :n2, :n2] *= h2[:, None, None]
        rhs = np.zeros((M, n2 + 3, N))
        for i in range(2):
            # sum_n Q_n[a, :] . Eps[i, n]
            rhs[:, i * nR:(i + 1) * nR] = np.einsum("mnac,mncx->max", Q, Eps[:, i]) * h2[:, None, None]
        # mean value constraints: r_{i,0} = v_{i,0}
        for i in range(2):
            K[:, n2 + i, i * nR] = 1.0
            K[:, i * nR, n2 + i] = 1.0
            rhs[:, n2 + i, i * nc] = 1.0
        # rotation constraint: int (d_0 R_1 - d_1 R_0) = sum_F int_F (nu_0 v_F1 - nu_1 v_F0)
        rot = np.concatenate([-gmean[:, :, 1], gmean[:, :, 0]], axis=1)
        K[:, n2 + 2, :n2] = rot
        K[:, :n2, n2 + 2] = rot
        for f in range(3):
            s = lay.face_slice(f).start
            # int_F chi_0 = sqrt(|F|), higher Legendre modes integrate to zero
            rhs[:, n2 + 2, s + nf] += normals[:, f, 0] * np.sqrt(lengths[:, f])
            rhs[:, n2 + 2, s] -= normals[:, f, 1] * np.sqrt(lengths[:, f])
        R = np.linalg.solve(K, rhs)[:, :n2].reshape(M, 2, nR, N)

        # difference operators
        cell = np.zeros((M, 2, nR, N))
        for i in range(2):
            cell[:, i, :nc, i * nc:(i + 1) * nc] = np.eye(nc)
        deltaT = (cell - R)[:, :, :nG]  # Pi_T^k (v_T - R v), (M, 2, nG, N)
        faces = np.zeros((M, 3, 2, nf, N))
        for f in range(3):
            s = lay.face_slice(f).start
            for i in range(2):
                faces[:, f, i, :, s + i * nf:s + (i + 1) * nf] = np.eye(nf)
        traceR = np.einsum("mjba,mian->mjibn", Tr, R)
        deltaTF = faces - traceR  # Pi_F^k (v_F - R v|_F)
        hF = lengths[:, :, None, None, None]

        def face_form(w):
            w2 = (w / np.sqrt(hF)).reshape(M, -1, N)
            return np.swapaxes(w2, 1, 2) @ w2

        if self.variant == "classic":
            w = deltaTF - np.einsum("mjbc,micn->mjibn", Tr[:, :, :, :nG], deltaT)
            S = face_form(w)
        elif self.variant == "tilde":
            hT2 = h2[:, None, None]
            S = np.einsum("micn,micp->mnp", deltaT, deltaT) / hT2 + face_form(deltaTF)
        else:
            w = faces - np.einsum("mjbc,micn->mjibn", Tr[:, :, :, :nc], cell[:, :, :nc])
            S = face_form(w)

        self.R[sel] = R
        self.G[sel] = G
        self.S[sel] = 0.5 * (S + S.transpose(0, 2, 1))

    # ------------------------------------------------------------------ queries
    def stiffness(self, lam, mu) -> np.ndarray:
        """Local stiffness matrices ``(NT, N, N)`` for per-element ``lam``, ``mu``."""
        return local_stiffness(self.Eps, self.S, lam, mu)

    def trace_of_strain(self) -> np.ndarray:
        """``(NT, nG, N)`` coefficients of ``tr(eps_h v)``."""
        return self.Eps[:, 0, 0] + self.Eps[:, 1, 1]

    def local_vectors(self, cell_coef: np.ndarray, side_coef: np.ndarray) -> np.ndarray:
        """Gather global cell ``(NT, 2, nc)`` and side ``(NS, 2, nf)`` blocks into ``(NT, N)``."""
        lay = self.layout
        nt = self.mesh.n_elements
        out = np.empty((nt, lay.n_local))
        out[:, :lay.n_cell] = cell_coef.reshape(nt, -1)
        out[:, lay.n_cell:] = side_coef[self.mesh.element_sides].reshape(nt, -1)
        return out


def local_stiffness(Eps: np.ndarray, S: np.ndarray, lam, mu) -> np.ndarray:
    """``2 mu Eps^T Eps + lam tr^T tr + mu S`` (orthonormal basis, identity mass)."""
    nt = Eps.shape[0]
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (nt,))
    mu = np.broadcast_to(np.asarray(mu, dtype=float), (nt,))
    e2 = Eps.reshape(nt, -1, Eps.shape[-1])
    ee = np.swapaxes(e2, 1, 2) @ e2
    tr = Eps[:, 0, 0] + Eps[:, 1, 1]
    tt = np.swapaxes(tr, 1, 2) @ tr
    A = 2.0 * mu[:, None, None] * ee + lam[:, None, None] * tt + mu[:, None, None] * S
    return 0.5 * (A + A.transpose(0, 2, 1))


def local_stabilization(mesh, k: int, variant: str) -> np.ndarray:
    """Unweighted stabilization matrices of the given variant."""
    return LocalOperators(mesh, k, variant).S


def interpolate(v, mesh, k: int, variant: str = "classic", basis: ElementBasis | None = None,
                quad_degree: int | None = None):
    """Cell and side coefficients of ``I v``.

    Returns
    -------
    cell : array (NT, 2, dim P_{k_cell})
    side : array (NS, 2, k + 1)
        Includes Dirichlet sides.
    """
    from .approximation import l2_project_cell, l2_project_face

    lay = LocalDofLayout(k, variant)
    basis = ElementBasis(mesh, k + 1) if basis is None else basis
    qd = 2 * (k + 1) + 4 if quad_degree is None else quad_degree
    cell = l2_project_cell(v, basis, lay.k_cell, quad_degree=qd)
    side = l2_project_face(v, mesh, k, quad_degree=qd)
    return cell, side


def hho_norms(local: np.ndarray, ops: LocalOperators, mu=1.0) -> dict:
    """Discrete norms of a local coefficient array ``(NT, N)``.

    Returns a dict with ``h`` (the norm built from the piecewise strain of the
    cell part and scaled side-cell differences), ``s`` (weighted
    stabilization seminorm), ``s_hat`` (tilde seminorm), ``strain`` (the
    ``L^2`` norm of ``eps_h``) and ``a_h`` for unit ``lambda = 0``.
    """
    mesh = ops.mesh
    lay = ops.layout
    nt = mesh.n_elements
    mu = np.broadcast_to(np.asarray(mu, dtype=float), (nt,))
    # ||eps_pw(v_T)||^2 and side differences
    rule = quad_rule("triangle", 2 * lay.k_cell)
    pts, wts = triangle_points(mesh.element_vertices(), rule)
    _, dphi = ops.basis.eval(pts, None, lay.k_cell, grad=True)
    vT = local[:, :lay.n_cell].reshape(nt, 2, lay.nc)
    J = np.einsum("mia,mqad->mqid", vT, dphi)
    eps = 0.5 * (J + J.transpose(0, 1, 3, 2))
    h2 = np.einsum("mq,mqij->m", wts, eps ** 2)
    sides = mesh.element_sides
    spts = ops.side_pts[sides]
    M, _, nq, _ = spts.shape
    phi = ops.basis.eval(spts.reshape(M, 3 * nq, 2), None, lay.k_cell).reshape(M, 3, nq, lay.nc)
    vF = local[:, lay.n_cell:].reshape(nt, 3, 2, lay.nf)
    diff = np.einsum("mjib,mjqb->mjqi", vF, ops.side_psi[sides]) - np.einsum("mia,mjqa->mjqi", vT, phi)
    h2 += np.einsum("mjq,mjqi->m", ops.side_wts[sides] / mesh.element_side_lengths[:, :, None], diff ** 2)

    s_local = np.einsum("mn,mnp,mp->m", local, ops.S, local)
    eps_h = np.einsum("mijcn,mn->mijc", ops.Eps, local)
    strain = np.sum(eps_h ** 2)
    tilde = LocalOperators(mesh, lay.k, "tilde").S if ops.variant != "tilde" else ops.S
    s_hat = np.einsum("mn,mnp,mp->m", local, tilde, local)
    return {
        "h": float(np.sqrt(h2.sum())),
        "s": float(np.sqrt(np.sum(mu * s_local))),
        "s_hat": float(np.sqrt(s_hat.sum())),
        "strain": float(np.sqrt(strain)),
        "a_h": float(np.sqrt(np.sum(2 * mu * np.sum(eps_h ** 2, axis=(1, 2, 3)) + mu * s_local))),
    }
