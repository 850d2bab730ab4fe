"""Global dofs, assembly, static condensation, sparse SPD solve and post-processing."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .approximation import PolyField, l2_project_face
from .hho_operators import LocalOperators
from .mesh import DIRICHLET, NEUMANN
from .problem import ProblemData

try:  # optional, faster sparse Cholesky
    from sksparse.cholmod import CholmodNotPositiveDefiniteError, cholesky as _cholmod
except ImportError:  # pragma: no cover - exercised when scikit-sparse is absent
    _cholmod = None
    CholmodNotPositiveDefiniteError = None

SOLVER_TOLERANCE = 1e-12


class NotPositiveDefiniteError(RuntimeError):
    """The assembled matrix failed a symmetric positive definite factorization."""


class DofMap:
    """Global numbering of cell blocks and non-Dirichlet side blocks.

    Unknowns are ordered as all cell blocks (element by element) followed by
    all free side blocks (side by side). Dirichlet sides never get an index.
    """

    def __init__(self, mesh, k: int, variant: str = "classic"):
        from .hho_operators import LocalDofLayout

        self.mesh = mesh
        self.layout = LocalDofLayout(k, variant)
        self.k = k
        self.variant = variant
        free = mesh.side_labels != DIRICHLET
        self.free_sides = np.flatnonzero(free)
        self.dirichlet_sides = np.flatnonzero(~free)
        self.side_index = np.full(mesh.n_sides, -1, dtype=np.int64)
        self.side_index[self.free_sides] = np.arange(len(self.free_sides))
        lay = self.layout
        self.n_cell_dofs = mesh.n_elements * lay.n_cell
        self.n_face_dofs = len(self.free_sides) * 2 * lay.nf

    @property
    def ndof(self) -> int:
        return self.n_cell_dofs + self.n_face_dofs

    def face_local_to_global(self) -> np.ndarray:
        """``(NT, 6 nf)`` indices into the face unknowns, ``-1`` on Dirichlet sides."""
        lay = self.layout
        idx = self.side_index[self.mesh.element_sides]  # (NT, 3)
        base = idx[:, :, None] * (2 * lay.nf) + np.arange(2 * lay.nf)
        base[idx < 0] = -1
        return base.reshape(len(idx), -1)

    def local_to_global(self) -> np.ndarray:
        """``(NT, N)`` indices into the full unknown vector."""
        lay = self.layout
        nt = self.mesh.n_elements
        cell = np.arange(nt)[:, None] * lay.n_cell + np.arange(lay.n_cell)
        face = self.face_local_to_global()
        face = np.where(face >= 0, face + self.n_cell_dofs, -1)
        return np.hstack([cell, face])


def count_dofs(mesh, k: int, variant: str = "classic") -> int:
    return DofMap(mesh, k, variant).ndof


@dataclass
class HhoFunction:
    """Cell blocks ``(NT, 2, nc)`` and side blocks ``(NS, 2, nf)`` of a discrete function.

    Dirichlet side blocks hold the prescribed values.
    """

    dofmap: DofMap
    cell: np.ndarray
    side: np.ndarray
    residual: float = 0.0
    factorization: str = ""

    def local(self) -> np.ndarray:
        mesh = self.dofmap.mesh
        nt = mesh.n_elements
        return np.hstack([self.cell.reshape(nt, -1), self.side[mesh.element_sides].reshape(nt, -1)])

    def vector(self) -> np.ndarray:
        """Unknown vector over cell and free side blocks."""
        dm = self.dofmap
        return np.concatenate([self.cell.ravel(), self.side[dm.free_sides].ravel()])


@dataclass
class LinearSystem:
    """Symmetric sparse system with the data to recover a full solution."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofmap: DofMap
    condensed: bool
    dirichlet: np.ndarray  # (NS, 2, nf) prescribed side blocks (zero elsewhere)
    recover_matrix: np.ndarray | None = None  # A_cc^{-1} A_cf, (NT, nC, nF)
    recover_vector: np.ndarray | None = None  # A_cc^{-1} b_c, (NT, nC)


def dirichlet_blocks(mesh, problem: ProblemData, k: int) -> np.ndarray:
    """Side blocks ``Pi_F^k u_D`` on Dirichlet sides, zero elsewhere."""
    nf = k + 1
    out = np.zeros((mesh.n_sides, 2, nf))
    dsides = mesh.sides_with_label(DIRICHLET)
    if len(dsides) and not problem.homogeneous_dirichlet:
        out[dsides] = l2_project_face(problem.u_d, mesh, k, dsides, quad_degree=2 * k + 6)
    return out


def load_vector(ops: LocalOperators, problem: ProblemData) -> np.ndarray:
    """Local right-hand sides ``(NT, N)``: volume load on cells, tractions on Neumann sides."""
    from .approximation import l2_project_cell

    mesh = ops.mesh
    lay = ops.layout
    nt = mesh.n_elements
    b = np.zeros((nt, lay.n_local))
    b[:, :lay.n_cell] = l2_project_cell(problem.f, ops.basis, lay.k_cell,
                                        quad_degree=2 * (lay.k_cell + 1) + 2).reshape(nt, -1)
    nsides = mesh.sides_with_label(NEUMANN)
    if len(nsides):
        normals = mesh.side_normals[nsides]
        qd = 2 * (ops.k + 1) + 2

        def g(points):
            return problem.g(points, np.broadcast_to(normals[:, None, :], points.shape))

        gb = l2_project_face(g, mesh, ops.k, nsides, quad_degree=qd).reshape(len(nsides), -1)
        elems = mesh.side_elements[nsides, 0]
        local_j = np.argmax(mesh.element_sides[elems] == nsides[:, None], axis=1)
        for j in range(3):
            sel = local_j == j
            sl = lay.face_slice(j)
            b[elems[sel], sl] += gb[sel]
    return b


def assemble(mesh, problem: ProblemData, k: int, variant: str = "classic", condense: bool = True,
             ops: LocalOperators | None = None) -> LinearSystem:
    """Assemble the discrete problem, eliminating Dirichlet sides and optionally cells."""
    ops = LocalOperators(mesh, k, variant) if ops is None else ops
    dm = DofMap(mesh, k, variant)
    lay = ops.layout
    lam, mu = problem.material.on(mesh)
    A = ops.stiffness(lam, mu)
    b = load_vector(ops, problem)
    uD = dirichlet_blocks(mesh, problem, k)
    uD_local = np.zeros_like(b)
    uD_local[:, lay.n_cell:] = uD[mesh.element_sides].reshape(mesh.n_elements, -1)
    b -= np.einsum("mnp,mp->mn", A, uD_local)

    if not condense:
        l2g = dm.local_to_global()
        mat, rhs = _scatter(A, b, l2g, dm.ndof)
        return LinearSystem(mat, rhs, dm, False, uD)

    nC = lay.n_cell
    Acc = A[:, :nC, :nC]
    Acf = A[:, :nC, nC:]
    Afc = A[:, nC:, :nC]
    Aff = A[:, nC:, nC:]
    sol = np.linalg.solve(Acc, np.concatenate([Acf, b[:, :nC, None]], axis=2))
    X, y = sol[:, :, :-1], sol[:, :, -1]
    K = Aff - np.einsum("mfc,mcg->mfg", Afc, X)
    r = b[:, nC:] - np.einsum("mfc,mc->mf", Afc, y)
    mat, rhs = _scatter(K, r, dm.face_local_to_global(), dm.n_face_dofs)
    return LinearSystem(mat, rhs, dm, True, uD, X, y)


def _scatter(A: np.ndarray, b: np.ndarray, l2g: np.ndarray, n: int):
    valid = l2g >= 0
    rows = np.broadcast_to(l2g[:, :, None], A.shape)
    cols = np.broadcast_to(l2g[:, None, :], A.shape)
    keep = valid[:, :, None] & valid[:, None, :]
    mat = sp.coo_matrix((A[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    mat = (0.5 * (mat + mat.T)).tocsr()
    mat.sum_duplicates()
    rhs = np.bincount(l2g[valid], weights=b[valid], minlength=n)
    return mat, rhs


class _Factor:
    """Sparse SPD factorization with a positive-pivot check."""

    def __init__(self, matrix: sp.spmatrix):
        matrix = sp.csc_matrix(matrix)
        if _cholmod is not None:
            try:
                self._f = _cholmod(matrix, mode="simplicial")
            except CholmodNotPositiveDefiniteError as exc:
                raise NotPositiveDefiniteError(str(exc)) from exc
            # simplicial mode computes L D L^T, which does not fail on indefinite input
            d = self._f.D()
            if np.any(d <= 0) or not np.all(np.isfinite(d)):
                raise NotPositiveDefiniteError("nonpositive pivot in the symmetric factorization")
            self._solve = self._f
            self.method = "cholmod"
            return
        try:
            lu = spla.splu(matrix, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                           options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise NotPositiveDefiniteError(f"factorization failed: {exc}") from exc
        d = lu.U.diagonal()
        if np.any(lu.perm_r != lu.perm_c) or np.any(d <= 0) or not np.all(np.isfinite(d)):
            raise NotPositiveDefiniteError("nonpositive pivot in the symmetric factorization")
        self._solve = lu.solve
        self.method = "superlu"

    def __call__(self, rhs: np.ndarray) -> np.ndarray:
        return np.asarray(self._solve(rhs)).ravel()


def solve_linear(matrix: sp.spmatrix, rhs: np.ndarray, tol: float = SOLVER_TOLERANCE, max_refine: int = 3):
    """Direct SPD solve with iterative refinement.

    Returns ``(x, relative residual, factorization name)``; raises
    :class:`NotPositiveDefiniteError` if the symmetric factorization fails.
    """
    if matrix.shape[0] == 0:
        return np.zeros(0), 0.0, "none"
    fac = _Factor(matrix)
    x = fac(rhs)
    nb = np.linalg.norm(rhs)
    if nb == 0.0:
        return x, 0.0, fac.method
    res = np.linalg.norm(rhs - matrix @ x) / nb
    for _ in range(max_refine):
        if res <= tol:
            break
        x = x + fac(rhs - matrix @ x)
        res = np.linalg.norm(rhs - matrix @ x) / nb
    return x, float(res), fac.method


def solve(system: LinearSystem) -> HhoFunction:
    """Solve the assembled system and expand to a full :class:`HhoFunction`."""
    dm = system.dofmap
    mesh = dm.mesh
    lay = dm.layout
    x, res, method = solve_linear(system.matrix, system.rhs)
    side = system.dirichlet.copy()
    nt = mesh.n_elements
    if system.condensed:
        side[dm.free_sides] = x.reshape(len(dm.free_sides), 2, lay.nf)
        l2g = dm.face_local_to_global()
        face_local = np.where(l2g >= 0, x[np.maximum(l2g, 0)], 0.0)
        cell = system.recover_vector - np.einsum("mcf,mf->mc", system.recover_matrix, face_local)
        cell = cell.reshape(nt, 2, lay.nc)
    else:
        cell = x[:dm.n_cell_dofs].reshape(nt, 2, lay.nc)
        side[dm.free_sides] = x[dm.n_cell_dofs:].reshape(len(dm.free_sides), 2, lay.nf)
    return HhoFunction(dm, cell, side, res, method)


def solve_problem(mesh, problem: ProblemData, k: int, variant: str = "classic", condense: bool = True,
                  ops: LocalOperators | None = None):
    """Convenience wrapper returning ``(u_h, ops)``."""
    ops = LocalOperators(mesh, k, variant) if ops is None else ops
    return solve(assemble(mesh, problem, k, variant, condense, ops)), ops


# ---------------------------------------------------------------------- post-processing
def strain_coefficients(u_h: HhoFunction, ops: LocalOperators) -> np.ndarray:
    """``(NT, 2, 2, dim P_k)`` coefficients of ``eps_h u_h``."""
    return np.einsum("mijcn,mn->mijc", ops.Eps, u_h.local())


def discrete_stress(u_h: HhoFunction, ops: LocalOperators, material) -> PolyField:
    """``sigma_h = C eps_h u_h`` as a matrix-valued field of degree ``k``."""
    lam, mu = material.on(ops.mesh)
    eps = strain_coefficients(u_h, ops)
    tr = eps[:, 0, 0] + eps[:, 1, 1]
    sig = 2.0 * mu[:, None, None, None] * eps
    sig[:, 0, 0] += lam[:, None] * tr
    sig[:, 1, 1] += lam[:, None] * tr
    return PolyField(ops.basis, ops.k, sig)


def potential_field(u_h: HhoFunction, ops: LocalOperators) -> PolyField:
    """Potential reconstruction ``R u_h`` of degree ``k + 1``."""
    return PolyField(ops.basis, ops.k + 1, np.einsum("mian,mn->mia", ops.R, u_h.local()))


# ---------------------------------------------------------------------- nodal averaging
def lagrange_barycentric(p: int) -> np.ndarray:
    """Barycentric lattice ``(n, 3)`` of the degree-``p`` Lagrange nodes."""
    return np.array([(p - s, s - l, l) for s in range(p + 1) for l in range(s + 1)], dtype=float) / p


class ConformingField:
    """Continuous piecewise ``P_p`` vector field stored by global Lagrange node values.

    Attributes
    ----------
    nodes : array (n_nodes, 2)
    values : array (n_nodes, 2)
    element_nodes : array (NT, n_local)
    dirichlet : bool array (n_nodes,)
    """

    def __init__(self, mesh, degree: int, nodes, values, element_nodes, dirichlet):
        self.mesh = mesh
        self.degree = degree
        self.nodes = nodes
        self.values = values
        self.element_nodes = element_nodes
        self.dirichlet = dirichlet
        self.local_barycentric = lagrange_barycentric(degree)

    def to_polyfield(self, basis) -> PolyField:
        """Expand into the orthonormal element basis of matching degree."""
        pts = self.nodes[self.element_nodes]  # (NT, n, 2)
        V = basis.eval(pts, None, self.degree)  # (NT, n, nb)
        vals = self.values[self.element_nodes]  # (NT, n, 2)
        coef = np.linalg.solve(V, vals)  # (NT, nb, 2)
        return PolyField(basis, self.degree, coef.transpose(0, 2, 1))


def lagrange_nodes(mesh, p: int):
    """Global Lagrange nodes of degree ``p``.

    Returns ``(nodes, element_nodes, node_sides)`` where ``node_sides`` lists
    for each node on a side interior the side id (``-1`` otherwise).
    """
    lam = lagrange_barycentric(p)
    n_local = len(lam)
    tri = mesh.triangles
    nt, nv, ns = mesh.n_elements, mesh.n_vertices, mesh.n_sides
    n_int = (p - 1) * (p - 2) // 2
    elem_nodes = np.empty((nt, n_local), dtype=np.int64)
    coords = np.einsum("lv,mvd->mld", lam, mesh.element_vertices())
    ip = np.rint(lam * p).astype(int)
    int_counter = np.zeros(nt, dtype=np.int64)
    for a, (i0, i1, i2) in enumerate(ip):
        zero = [j for j, v in enumerate((i0, i1, i2)) if v == 0]
        if max(i0, i1, i2) == p:
            elem_nodes[:, a] = tri[:, int(np.argmax((i0, i1, i2)))]
        elif len(zero) == 1:
            j = zero[0]
            side = mesh.element_sides[:, j]
            start = mesh.vertices[mesh.sides[side, 0]]
            end = mesh.vertices[mesh.sides[side, 1]]
            t = np.einsum("md,md->m", coords[:, a] - start, end - start) / mesh.side_lengths[side] ** 2
            m = np.rint(t * p).astype(np.int64)
            elem_nodes[:, a] = nv + side * (p - 1) + (m - 1)
        else:
            elem_nodes[:, a] = nv + ns * (p - 1) + np.arange(nt) * n_int + int_counter
            int_counter += 1
    n_nodes = nv + ns * (p - 1) + nt * n_int
    nodes = np.zeros((n_nodes, 2))
    nodes[elem_nodes.ravel()] = coords.reshape(-1, 2)
    node_sides = np.full(n_nodes, -1, dtype=np.int64)
    if p > 1:
        node_sides[nv:nv + ns * (p - 1)] = np.repeat(np.arange(ns), p - 1)
    return nodes, elem_nodes, node_sides


def nodal_average(potential: PolyField, mesh, u_d=None) -> ConformingField:
    """Average the values of ``potential`` at the Lagrange nodes of ``P_{k+1}``.

    Nodes on Dirichlet sides take the point values of ``u_d`` (zero if ``None``).
    """
    p = potential.degree
    nodes, elem_nodes, node_sides = lagrange_nodes(mesh, p)
    nt, n_local = elem_nodes.shape
    pts = nodes[elem_nodes]
    vals = potential(pts)  # (NT, n_local, 2)
    flat = elem_nodes.ravel()
    cnt = np.bincount(flat, minlength=len(nodes))
    out = np.stack([np.bincount(flat, weights=vals[..., c].ravel(), minlength=len(nodes)) for c in range(2)], -1)
    out /= cnt[:, None]

    dsides = mesh.sides_with_label(DIRICHLET)
    dirichlet = np.zeros(len(nodes), dtype=bool)
    dirichlet[mesh.sides[dsides].ravel()] = True
    dirichlet |= np.isin(node_sides, dsides)
    if np.any(dirichlet):
        out[dirichlet] = 0.0 if u_d is None else np.asarray(u_d(nodes[dirichlet]), dtype=float)
    return ConformingField(mesh, p, nodes, out, elem_nodes, dirichlet)
