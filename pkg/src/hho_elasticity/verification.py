"""Self-checks of the discretization: operator identities, stabilization and patch tests.

The checks evaluate test functions with plain monomials written out here
rather than with the orthonormal bases used by the solver.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .approximation import PolyField, l2_project_cell
from .basis import legendre_values, monomial_exponents
from .estimator import estimate, exact_errors
from .hho_operators import LocalOperators, interpolate
from .mesh import build_initial_mesh, uniform_refine
from .problem import Material, manufactured_polynomial
from .quadrature import quad_rule, segment_points, triangle_points
from .system import (
    ConformingField,
    discrete_stress,
    lagrange_nodes,
    nodal_average,
    potential_field,
    solve_problem,
)


@dataclass
class CheckResult:
    name: str
    value: float
    tol: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<58s} {self.value:10.3e}  (tol {self.tol:.1e}) {self.detail}"


def _check(name, value, tol, detail="") -> CheckResult:
    return CheckResult(name, float(value), float(tol), bool(value <= tol), detail)


def verification_meshes() -> dict:
    """Three small meshes with different shapes."""
    return {
        "square": uniform_refine(build_initial_mesh("unit_square"), 1),
        "lshape": build_initial_mesh("lshape"),
        "cooks": uniform_refine(build_initial_mesh("cooks"), 1),
    }


# ---------------------------------------------------------------------- monomial test functions
def _monomial_derivatives(x, exps):
    """Values, gradients and Hessians of monomials ``x^a y^b`` at points ``(..., 2)``."""
    a = exps[:, 0].astype(float)
    b = exps[:, 1].astype(float)
    X = x[..., 0, None]
    Y = x[..., 1, None]

    def pw(base, e):
        return np.where(e >= 0, base ** np.maximum(e, 0), 0.0)

    val = pw(X, a) * pw(Y, b)
    gx = a * pw(X, a - 1) * pw(Y, b)
    gy = b * pw(X, a) * pw(Y, b - 1)
    hxx = a * (a - 1) * pw(X, a - 2) * pw(Y, b)
    hxy = a * b * pw(X, a - 1) * pw(Y, b - 1)
    hyy = b * (b - 1) * pw(X, a) * pw(Y, b - 2)
    grad = np.stack([gx, gy], -1)
    hess = np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)
    return val, grad, hess


def _div_eps(hess):
    """``div eps(m e_i)`` with shape ``(..., 2 [i], n [test], 2 [component])``."""
    lap = hess[..., 0, 0] + hess[..., 1, 1]  # (..., n)
    out = np.empty(hess.shape[:-3] + (2, hess.shape[-3], 2))
    for i in range(2):
        for m in range(2):
            out[..., i, :, m] = 0.5 * ((i == m) * lap + hess[..., :, m, i])
    return out


def _eps_test(grad):
    """``eps(m e_i)`` with shape ``(..., 2 [i], n, 2, 2)``."""
    out = np.zeros(grad.shape[:-2] + (2, grad.shape[-2], 2, 2))
    for i in range(2):
        for m in range(2):
            for n in range(2):
                out[..., i, :, m, n] = 0.5 * ((i == m) * grad[..., n] + (i == n) * grad[..., m])
    return out


def _scaled(points, mesh):
    return (points - mesh.centroids[:, None, :]) / mesh.diameters[:, None, None]


# ---------------------------------------------------------------------- operator identities
def reconstruction_residual(mesh, ops: LocalOperators) -> tuple[float, float]:
    """Relative residuals of the potential reconstruction's variational identity and moments.

    Every unit local dof vector is tested against all vector monomials of
    degree ``k + 1``.
    """
    k = ops.k
    lay = ops.layout
    nt, N = mesh.n_elements, lay.n_local
    exps = monomial_exponents(k + 1)
    rule = quad_rule("triangle", 2 * k + 4)
    pts, wts = triangle_points(mesh.element_vertices(), rule)
    h = mesh.diameters
    _, g, H = _monomial_derivatives(_scaled(pts, mesh), exps)
    g = g / h[:, None, None, None]
    H = H / (h ** 2)[:, None, None, None, None]
    eps_t = _eps_test(g)  # (M, q, 2, n, 2, 2)
    div_t = _div_eps(H)  # (M, q, 2, n, 2)

    phi, dphi = ops.basis.eval(pts, None, k + 1, grad=True)
    epsR = np.einsum("mian,mqad->mqidn", ops.R, dphi)
    epsR = 0.5 * (epsR + np.swapaxes(epsR, 2, 3))
    lhs = np.einsum("mq,mqabx,mqitab->mitx", wts, epsR, eps_t)
    # cell term (v_T, div eps(phi))
    vT = np.zeros((nt, len(wts[0]), 2, N))
    for c in range(2):
        vT[:, :, c, c * lay.nc:(c + 1) * lay.nc] = phi[:, :, :lay.nc]
    cellterm = np.einsum("mq,mqcx,mqitc->mitx", wts, vT, div_t)
    # side terms (v_F, eps(phi) nu_T)
    srule = quad_rule("segment", 2 * k + 4)
    sideterm = np.zeros_like(lhs)
    for j in range(3):
        s = mesh.element_sides[:, j]
        a = mesh.vertices[mesh.sides[s, 0]]
        b = mesh.vertices[mesh.sides[s, 1]]
        spts, swts = segment_points(a, b, srule)
        psi = legendre_values(np.broadcast_to(srule.points, swts.shape), k, mesh.side_lengths[s])
        _, gs, _ = _monomial_derivatives(_scaled(spts, mesh), exps)
        eps_s = _eps_test(gs / h[:, None, None, None])
        nu = mesh.element_normals[:, j]
        tr = np.einsum("mqitab,mb->mqita", eps_s, nu)
        vF = np.zeros((nt, len(swts[0]), 2, N))
        start = lay.face_slice(j).start
        for c in range(2):
            vF[:, :, c, start + c * lay.nf:start + (c + 1) * lay.nf] = psi
        sideterm += np.einsum("mq,mqcx,mqitc->mitx", swts, vF, tr)
    res = lhs + cellterm - sideterm
    scale = np.abs(lhs) + np.abs(cellterm) + np.abs(sideterm)
    rel = np.abs(res).max() / max(scale.max(), 1e-300)

    # moments: int R v = int v_T and the rotation moment
    int_R = np.einsum("mq,mqa,mian->min", wts, phi, ops.R)
    int_T = np.einsum("mq,mqcx->mcx", wts, vT)
    rot_R = np.einsum("mq,mqa,man->mn", wts, dphi[..., 0], ops.R[:, 1]) - np.einsum("mq,mqa,man->mn", wts, dphi[..., 1], ops.R[:, 0])
    rot_F = np.zeros((nt, N))
    for j in range(3):
        s = mesh.element_sides[:, j]
        nu = mesh.element_normals[:, j]
        start = lay.face_slice(j).start
        # int_F chi_0 = sqrt(|F|)
        rot_F[:, start + lay.nf] += nu[:, 0] * np.sqrt(mesh.side_lengths[s])
        rot_F[:, start] -= nu[:, 1] * np.sqrt(mesh.side_lengths[s])
    mom = max(np.abs(int_R - int_T).max() / max(np.abs(int_T).max(), 1e-300),
              np.abs(rot_R - rot_F).max() / max(np.abs(rot_F).max(), 1e-300))
    return float(rel), float(mom)


def random_polynomial(degree: int, rng, scale: float = 1.0):
    """Random vector polynomial of the given degree (and its Jacobian)."""
    exps = monomial_exponents(degree)
    coef = rng.standard_normal((2, len(exps)))

    def v(x):
        val, _, _ = _monomial_derivatives(np.asarray(x) / scale, exps)
        return np.einsum("...t,it->...i", val, coef)

    def jac(x):
        _, g, _ = _monomial_derivatives(np.asarray(x) / scale, exps)
        return np.einsum("...td,it->...id", g, coef) / scale

    return v, jac


def commuting_diagram_error(mesh, ops: LocalOperators, rng) -> float:
    """``max |eps_h I v - Pi_T^k eps(v)|`` relative, for random ``v`` of degree ``k + 2``."""
    k = ops.k
    scale = float(np.abs(mesh.vertices).max())
    v, jac = random_polynomial(k + 2, rng, scale)
    cell, side = interpolate(v, mesh, k, ops.variant, ops.basis)
    loc = ops.local_vectors(cell, side)
    eps_h = np.einsum("mijcn,mn->mijc", ops.Eps, loc)

    def eps(x):
        J = jac(x)
        return 0.5 * (J + np.swapaxes(J, -1, -2))

    ref = l2_project_cell(eps, ops.basis, k, quad_degree=2 * k + 6)
    return float(np.abs(eps_h - ref).max() / np.abs(ref).max())


def best_approximation_orthogonality(mesh, ops: LocalOperators, rng) -> float:
    """Relative size of ``(eps(v - R I v), eps(phi))_T`` for ``phi`` in ``P_{k+1}(T)^2``."""
    k = ops.k
    scale = float(np.abs(mesh.vertices).max())
    v, jac = random_polynomial(k + 3, rng, scale)
    cell, side = interpolate(v, mesh, k, ops.variant, ops.basis)
    loc = ops.local_vectors(cell, side)
    Rc = np.einsum("mian,mn->mia", ops.R, loc)
    pts, wts = triangle_points(mesh.element_vertices(), quad_rule("triangle", 2 * k + 8))
    _, dphi = ops.basis.eval(pts, None, k + 1, grad=True)
    J = jac(pts) - np.einsum("mia,mqad->mqid", Rc, dphi)
    e = 0.5 * (J + np.swapaxes(J, -1, -2))
    _, g, _ = _monomial_derivatives(_scaled(pts, mesh), monomial_exponents(k + 1))
    et = _eps_test(g / mesh.diameters[:, None, None, None])
    ip = np.einsum("mq,mqab,mqitab->mit", wts, e, et)
    Jv = jac(pts)
    ev = 0.5 * (Jv + np.swapaxes(Jv, -1, -2))
    nv = np.sqrt(np.einsum("mq,mqab->m", wts, ev ** 2))
    nt_ = np.sqrt(np.einsum("mq,mqitab->mit", wts, et ** 2))
    denom = nv[:, None, None] * nt_
    mask = nt_ > 0
    return float(np.max(np.abs(ip[mask]) / denom[mask]))


def operator_suite(ks=(1, 2, 3, 4, 5), seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    for name, mesh in verification_meshes().items():
        for k in ks:
            ops = LocalOperators(mesh, k, "classic")
            out.append(_check(f"commuting diagram k={k} {name}", commuting_diagram_error(mesh, ops, rng), 1e-11))
            rel, mom = reconstruction_residual(mesh, ops)
            out.append(_check(f"reconstruction identity k={k} {name}", rel, 1e-11))
            out.append(_check(f"reconstruction moments k={k} {name}", mom, 1e-11))
            out.append(_check(f"best-approximation orthogonality k={k} {name}",
                              best_approximation_orthogonality(mesh, ops, rng), 1e-10))
    return out


# ---------------------------------------------------------------------- stabilization
def interpolate_piecewise(field: PolyField, mesh, k: int, variant: str, basis):
    """Interpolation of a piecewise polynomial field (traces from the ``T+`` side)."""
    from .hho_operators import LocalDofLayout

    lay = LocalDofLayout(k, variant)
    qd = 2 * (field.degree + k) + 2
    pts, wts = triangle_points(mesh.element_vertices(), quad_rule("triangle", qd))
    vals = field(pts)
    phi = basis.eval(pts, None, lay.k_cell)
    cell = np.einsum("mq,mqi,mqa->mia", wts, vals, phi)
    rule = quad_rule("segment", qd)
    spts, swts = segment_points(mesh.vertices[mesh.sides[:, 0]], mesh.vertices[mesh.sides[:, 1]], rule)
    svals = field(spts, mesh.side_elements[:, 0])
    psi = legendre_values(np.broadcast_to(rule.points, swts.shape), k, mesh.side_lengths)
    side = np.einsum("mq,mqi,mqa->mia", swts, svals, psi)
    return cell, side


def random_conforming(mesh, degree: int, basis, rng) -> PolyField:
    """Continuous piecewise polynomial with random Lagrange nodal values."""
    nodes, elem_nodes, _ = lagrange_nodes(mesh, degree)
    vals = rng.standard_normal((len(nodes), 2))
    cf = ConformingField(mesh, degree, nodes, vals, elem_nodes, np.zeros(len(nodes), dtype=bool))
    return cf.to_polyfield(basis)


def kernel_value(mesh, ops: LocalOperators, rng) -> float:
    """``s(I v, I v) / ||eps_pw(v)||^2`` for a random conforming piecewise ``P_{k+1}`` field."""
    field = random_conforming(mesh, ops.k + 1, ops.basis, rng)
    cell, side = interpolate_piecewise(field, mesh, ops.k, ops.variant, ops.basis)
    loc = ops.local_vectors(cell, side)
    s = np.einsum("mn,mnp,mp->", loc, ops.S, loc)
    pts, wts = triangle_points(mesh.element_vertices(), quad_rule("triangle", 2 * ops.k + 2))
    J = field.gradient(pts)
    e = 0.5 * (J + np.swapaxes(J, -1, -2))
    scale = np.einsum("mq,mqab->", wts, e ** 2)
    return float(abs(s) / scale)


def equivalence_band(mesh, k: int, rtol: float = 1e-9) -> tuple[float, float]:
    """Extreme generalized eigenvalues of ``s_tilde_T`` against ``s_T`` over all elements.

    Both forms are restricted to the range of the classic stabilization.
    Returns ``(nan, nan)`` if the kernels differ.
    """
    S = LocalOperators(mesh, k, "classic").S
    St = LocalOperators(mesh, k, "tilde").S
    w, V = np.linalg.eigh(S)
    lo, hi = np.inf, -np.inf
    for m in range(mesh.n_elements):
        keep = w[m] > rtol * w[m, -1]
        Q = V[m][:, keep] / np.sqrt(w[m, keep])
        Qk = V[m][:, ~keep]
        if np.abs(Qk.T @ St[m] @ Qk).max(initial=0.0) > rtol * np.abs(St[m]).max():
            return float("nan"), float("nan")
        r = np.linalg.eigvalsh(Q.T @ St[m] @ Q)
        lo, hi = min(lo, r[0]), max(hi, r[-1])
    return float(lo), float(hi)


def stabilization_suite(ks=(1, 2, 3), levels: int = 4, seed: int = 1) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    meshes = verification_meshes()
    for variant in ("classic", "tilde", "hdg"):
        for name, mesh in meshes.items():
            for k in ks:
                ops = LocalOperators(mesh, k, variant)
                out.append(_check(f"kernel {variant} k={k} {name}", kernel_value(mesh, ops, rng), 1e-11))
    for k in ks:
        mesh = build_initial_mesh("lshape")
        lows, highs = [], []
        for _ in range(levels + 1):
            lo, hi = equivalence_band(mesh, k)
            lows.append(lo)
            highs.append(hi)
            mesh = uniform_refine(mesh)
        spread = max(max(lows) / min(lows), max(highs) / min(highs))
        spread = np.inf if np.isnan(spread) else spread
        detail = f"band min {min(lows):.3g} max {max(highs):.3g}"
        out.append(_check(f"equivalence band drift k={k}", spread, 2.0, detail))
    return out


# ---------------------------------------------------------------------- patch tests
def patch_test(k: int, degree: int, variant: str, material: Material | None = None, mesh=None) -> dict:
    """Solve a manufactured polynomial problem and report relative errors."""
    material = Material(1.0, 1.0) if material is None else material
    mesh = uniform_refine(build_initial_mesh("unit_square"), 1) if mesh is None else mesh
    problem = manufactured_polynomial(degree, material)
    u_h, ops = solve_problem(mesh, problem, k, variant)
    sigma_h = discrete_stress(u_h, ops, material)
    avg = nodal_average(potential_field(u_h, ops), mesh, problem.u_d).to_polyfield(ops.basis)
    est = estimate(mesh, ops, u_h, sigma_h, avg, problem)
    err = exact_errors(mesh, ops, u_h, sigma_h, problem)
    pts, wts = triangle_points(mesh.element_vertices(), quad_rule("triangle", 2 * degree + 2))
    norm = float(np.sqrt(np.einsum("mq,mqij->", wts, problem.sigma(pts) ** 2)))
    return {"err": err["err_sigma"] / norm, "eta": est.eta_tilde / norm, "residual": u_h.residual,
            "factorization": u_h.factorization}


def patch_suite(ks=(1, 2, 3), variants=("classic", "hdg")) -> list[CheckResult]:
    out = []
    for variant in variants:
        for k in ks:
            for d in range(1, k + 2):
                r = patch_test(k, d, variant)
                out.append(_check(f"patch stress error {variant} k={k} d={d}", r["err"], 1e-9))
                out.append(_check(f"patch estimator {variant} k={k} d={d}", r["eta"], 1e-8))
    return out


SUITES = {"operators": operator_suite, "stabilization": stabilization_suite, "patch": patch_suite}


def run_suite(name: str, k: int | None = None) -> tuple[list[CheckResult], float]:
    """Run a named suite (restricted to one ``k`` if given); returns results and seconds."""
    if name not in SUITES and name != "all":
        raise ValueError(f"unknown suite {name!r}")
    names = list(SUITES) if name == "all" else [name]
    t0 = time.perf_counter()
    results = []
    for n in names:
        results += SUITES[n]() if k is None else SUITES[n](ks=(k,))
    return results, time.perf_counter() - t0
