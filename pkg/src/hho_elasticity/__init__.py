"""Hybrid high-order discretization of planar linear elasticity with adaptive refinement."""

__version__ = "0.1.0"

from .afem import ConvergenceHistory, RunConfig, compute_rates, doerfler_mark, run_afem, tail_rate
from .estimator import EstimateBreakdown, estimate, exact_errors
from .hho_operators import VARIANTS, LocalOperators, interpolate
from .mesh import (
    DIRICHLET,
    INTERIOR,
    NEUMANN,
    MeshError,
    Triangulation,
    build_initial_mesh,
    read_mesh,
    refine_nvb,
    uniform_refine,
    write_mesh,
)
from .problem import (
    Material,
    ProblemData,
    cooks_problem,
    lame_from_young_poisson,
    lshape_problem,
    manufactured_polynomial,
)
from .system import (
    HhoFunction,
    NotPositiveDefiniteError,
    assemble,
    discrete_stress,
    nodal_average,
    potential_field,
    solve,
    solve_problem,
)

__all__ = [
    "__version__",
    "ConvergenceHistory", "RunConfig", "compute_rates", "doerfler_mark", "run_afem", "tail_rate",
    "EstimateBreakdown", "estimate", "exact_errors",
    "VARIANTS", "LocalOperators", "interpolate",
    "DIRICHLET", "INTERIOR", "NEUMANN", "MeshError", "Triangulation", "build_initial_mesh", "read_mesh",
    "refine_nvb", "uniform_refine", "write_mesh",
    "Material", "ProblemData", "cooks_problem", "lame_from_young_poisson", "lshape_problem",
    "manufactured_polynomial",
    "HhoFunction", "NotPositiveDefiniteError", "assemble", "discrete_stress", "nodal_average",
    "potential_field", "solve", "solve_problem",
]
