"""Adaptive and uniform refinement loops, convergence histories and empirical rates."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .estimator import estimate, exact_errors
from .hho_operators import VARIANTS, LocalOperators
from .mesh import build_initial_mesh, refine_nvb, uniform_refine
from .problem import Material, ProblemData, cooks_problem, lame_from_young_poisson, lshape_problem
from .system import assemble, count_dofs, discrete_stress, nodal_average, potential_field, solve


def doerfler_mark(indicators, theta: float = 0.5) -> np.ndarray:
    """Minimal set of elements carrying a ``theta`` fraction of the total.

    Elements are sorted by decreasing indicator with ties broken by increasing
    id; the shortest prefix whose sum reaches ``theta`` times the total is
    returned (sorted by id). All-zero indicators give the empty set.
    """
    eta = np.asarray(indicators, dtype=float)
    if np.any(eta < 0) or not np.all(np.isfinite(eta)):
        raise ValueError("indicators must be finite and nonnegative")
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    total = eta.sum()
    if total == 0.0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((np.arange(len(eta)), -eta))
    csum = np.cumsum(eta[order])
    # guard against round-off in the cumulative sum for theta = 1
    n = int(np.searchsorted(csum, theta * total * (1.0 - 1e-14), side="left")) + 1
    return np.sort(order[:min(n, len(eta))])


@dataclass
class RunConfig:
    """Configuration of one convergence run."""

    benchmark: str = "lshape"
    k: int = 1
    variant: str = "classic"
    mode: str = "adaptive"
    theta: float = 0.5
    E: float | None = 1e5
    nu: float | None = 0.4999
    lam: float | None = None
    mu: float | None = None
    max_ndof: int = 200_000
    max_levels: int = 40
    max_time: float | None = None
    full_jumps: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.mode not in ("adaptive", "uniform"):
            raise ValueError("mode must be 'adaptive' or 'uniform'")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError("theta must lie in (0, 1]")
        if (self.lam is None) != (self.mu is None):
            raise ValueError("give both lambda and mu, or neither")

    def material(self) -> Material:
        if self.lam is not None:
            return Material(float(self.lam), float(self.mu))
        return Material(*lame_from_young_poisson(self.E, self.nu))


@dataclass
class LevelRecord:
    level: int
    ndof: int
    elements: int
    eta: float
    eta_tilde: float
    err_sigma: float | None = None
    err_l2: float | None = None
    best_sigma: float | None = None
    eff_index: float | None = None
    osc_f: float = 0.0
    osc_g: float = 0.0
    osc_ud: float = 0.0
    residual: float = 0.0
    h_min_singular: float | None = None
    h_max: float = 0.0
    times: dict = field(default_factory=dict)
    factorization: str = ""


@dataclass
class ConvergenceHistory:
    config: RunConfig
    levels: list = field(default_factory=list)
    meshes: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name) for r in self.levels], dtype=float)

    @property
    def ndof(self) -> np.ndarray:
        return self.column("ndof")

    @property
    def estimator_name(self) -> str:
        return "eta_tilde"

    def as_dict(self) -> dict:
        return {"config": asdict(self.config), "levels": [asdict(r) for r in self.levels]}


def benchmark_problem(name: str, material: Material) -> ProblemData:
    if name == "lshape":
        return lshape_problem(material)
    if name == "cooks":
        return cooks_problem(material)
    if name in ("square", "unit_square"):
        from .problem import manufactured_polynomial
        return manufactured_polynomial(3, material)
    raise ValueError(f"no default problem for benchmark {name!r}")


def solve_level(mesh, problem: ProblemData, k: int, variant: str = "classic", full_jumps: bool = False):
    """SOLVE and ESTIMATE on one mesh; returns a dict of fields and timings."""
    times = {}
    t0 = time.perf_counter()
    ops = LocalOperators(mesh, k, variant)
    times["operators"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    system = assemble(mesh, problem, k, variant, True, ops)
    times["assemble"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    u_h = solve(system)
    times["solve"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    sigma_h = discrete_stress(u_h, ops, problem.material)
    pot = potential_field(u_h, ops)
    avg = nodal_average(pot, mesh, None if problem.homogeneous_dirichlet else problem.u_d).to_polyfield(ops.basis)
    est = estimate(mesh, ops, u_h, sigma_h, avg, problem, full_jumps)
    times["estimate"] = time.perf_counter() - t0
    out = {"ops": ops, "u_h": u_h, "sigma_h": sigma_h, "estimate": est, "system": system, "times": times}
    if problem.has_exact:
        t0 = time.perf_counter()
        out["errors"] = exact_errors(mesh, ops, u_h, sigma_h, problem)
        times["errors"] = time.perf_counter() - t0
    return out


def run_afem(config: RunConfig, mesh=None, problem: ProblemData | None = None, keep_meshes: bool = False,
             callback=None) -> ConvergenceHistory:
    """Run SOLVE, ESTIMATE, MARK, REFINE until a stop criterion is met.

    The loop stops when the next mesh would exceed ``max_ndof`` unknowns, after
    ``max_levels`` levels, when ``max_time`` seconds have elapsed, or when
    all indicators vanish.
    """
    material = config.material()
    mesh = build_initial_mesh(config.benchmark) if mesh is None else mesh
    problem = benchmark_problem(config.benchmark, material) if problem is None else problem
    history = ConvergenceHistory(config)
    start = time.perf_counter()
    for level in range(config.max_levels):
        res = solve_level(mesh, problem, config.k, config.variant, config.full_jumps)
        est = res["estimate"]
        err = res.get("errors", {})
        eta_t = est.eta_tilde
        rec = LevelRecord(level, res["u_h"].dofmap.ndof, mesh.n_elements, est.eta, eta_t,
                          err.get("err_sigma"), err.get("err_l2"), err.get("best_sigma"),
                          eta_t / err["err_sigma"] if err and err["err_sigma"] > 0 else None,
                          est.osc_f, est.osc_g, est.osc_ud, res["u_h"].residual,
                          _h_min_singular(mesh, problem), mesh.h_max, res["times"],
                          res["u_h"].factorization)
        history.levels.append(rec)
        if keep_meshes:
            history.meshes.append(mesh)
        if callback is not None:
            callback(rec, mesh, res)
        if level + 1 >= config.max_levels:
            break
        if config.max_time is not None and time.perf_counter() - start > config.max_time:
            break
        if config.mode == "uniform":
            new = uniform_refine(mesh)
        else:
            marked = doerfler_mark(est.indicators(), config.theta)
            if marked.size == 0:
                break
            new = refine_nvb(mesh, marked)
        if count_dofs(new, config.k, config.variant) > config.max_ndof:
            break
        mesh = new
    if not keep_meshes:
        history.meshes.append(mesh)
    return history


def _h_min_singular(mesh, problem):
    if not problem.singular_points:
        return None
    els = mesh.elements_touching(problem.singular_points[0])
    return float(mesh.diameters[els].min()) if len(els) else None


def compute_rates(ndof, values, last: int = 3):
    """Empirical convergence rates against ``ndof``.

    Returns ``(per_level, slope)``: ``per_level[l]`` is the rate between
    levels ``l - 1`` and ``l`` (``nan`` at level 0 or where a value is not
    positive) and ``slope`` is the least-squares rate over the last ``last``
    levels with positive values.
    """
    n = np.asarray(ndof, dtype=float)
    q = np.asarray(values, dtype=float)
    if len(n) < 2:
        raise ValueError("need at least two levels")
    per = np.full(len(n), np.nan)
    ok = (q > 0) & np.isfinite(q)
    for i in range(1, len(n)):
        if ok[i] and ok[i - 1] and n[i] != n[i - 1]:
            per[i] = -np.log(q[i] / q[i - 1]) / np.log(n[i] / n[i - 1])
    idx = np.flatnonzero(ok)[-last:]
    slope = fit_rate(n[idx], q[idx]) if len(idx) >= 2 else np.nan
    return per, slope


def fit_rate(ndof, values) -> float:
    """Least-squares rate ``r`` in ``values ~ C ndof^(-r)``."""
    x = np.log(np.asarray(ndof, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    return float(-np.polyfit(x, y, 1)[0])


def tail_rate(ndof, values, span: float = 10.0) -> float:
    """Least-squares rate over the levels with ``ndof >= ndof[-1] / span``."""
    n = np.asarray(ndof, dtype=float)
    sel = n >= n[-1] / span
    return fit_rate(n[sel], np.asarray(values, dtype=float)[sel])
