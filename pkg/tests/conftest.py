import numpy as np
import pytest

from hho_elasticity.mesh import build_initial_mesh, refine_nvb, uniform_refine


@pytest.fixture(scope="session")
def square_mesh():
    return uniform_refine(build_initial_mesh("unit_square"), 1)


@pytest.fixture(scope="session")
def lshape_mesh():
    return build_initial_mesh("lshape")


@pytest.fixture(scope="session")
def graded_mesh():
    """L-shape mesh refined locally towards the reentrant corner (non-uniform sizes)."""
    mesh = uniform_refine(build_initial_mesh("lshape"), 1)
    for _ in range(3):
        mesh = refine_nvb(mesh, mesh.elements_touching((0.0, 0.0)))
    return mesh


@pytest.fixture(scope="session")
def cooks_mesh():
    return uniform_refine(build_initial_mesh("cooks"), 2)


def random_triangles(rng, n):
    """Random nondegenerate triangles ``(n, 3, 2)``."""
    out = []
    while len(out) < n:
        t = rng.uniform(-2, 2, (3, 2))
        e1, e2 = t[1] - t[0], t[2] - t[0]
        if abs(e1[0] * e2[1] - e1[1] * e2[0]) > 0.1:
            out.append(t)
    return np.array(out)


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Record one summary line per acceptance criterion (printed at the end of the run)."""

    def record(criterion, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  criterion {criterion}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
