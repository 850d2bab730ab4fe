from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hho_elasticity.afem import (
    RunConfig,
    benchmark_problem,
    compute_rates,
    doerfler_mark,
    fit_rate,
    run_afem,
    tail_rate,
)
from hho_elasticity.problem import Material
from hho_elasticity.system import count_dofs


def brute_force_min_size(eta, theta):
    total = eta.sum()
    # theta * total > 0 mathematically, so the empty set never qualifies
    for n in range(1, len(eta) + 1):
        for sub in combinations(range(len(eta)), n):
            if eta[list(sub)].sum() >= theta * total * (1 - 1e-14):
                return n
    return len(eta)


@given(st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=9), st.floats(0.05, 1.0))
@settings(max_examples=80, deadline=None)
def test_doerfler_is_minimal(values, theta):
    eta = np.array(values)
    marked = doerfler_mark(eta, theta)
    if eta.sum() == 0:
        assert marked.size == 0
        return
    assert eta[marked].sum() >= theta * eta.sum() * (1 - 1e-14)
    assert len(marked) == brute_force_min_size(eta, theta)
    assert np.all(np.diff(marked) > 0)


def test_doerfler_ties_prefer_low_ids():
    np.testing.assert_array_equal(doerfler_mark(np.ones(6), 0.5), [0, 1, 2])
    np.testing.assert_array_equal(doerfler_mark(np.array([1.0, 3.0, 3.0, 1.0]), 0.5), [1, 2])
    np.testing.assert_array_equal(doerfler_mark(np.array([1.0, 3.0, 3.0, 1.0]), 0.3), [1])


def test_doerfler_theta_one_marks_all_nonzero():
    eta = np.array([0.1, 0.0, 0.3, 0.2])
    np.testing.assert_array_equal(doerfler_mark(eta, 1.0), [0, 2, 3])


@pytest.mark.parametrize("bad", [[-1.0, 2.0], [np.nan, 1.0], [np.inf]])
def test_doerfler_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        doerfler_mark(np.array(bad))


@pytest.mark.parametrize("theta", [0.0, 1.5])
def test_doerfler_rejects_theta(theta):
    with pytest.raises(ValueError):
        doerfler_mark(np.ones(3), theta)


@given(st.floats(0.1, 3.0), st.floats(1e-3, 1e3))
def test_rates_of_power_law(rate, c):
    ndof = np.array([100, 400, 1600, 6400, 25600.0])
    vals = c * ndof ** -rate
    per, slope = compute_rates(ndof, vals)
    assert np.isnan(per[0])
    np.testing.assert_allclose(per[1:], rate, rtol=1e-9)
    assert slope == pytest.approx(rate, rel=1e-9)
    assert fit_rate(ndof, vals) == pytest.approx(rate, rel=1e-9)
    assert tail_rate(ndof, vals) == pytest.approx(rate, rel=1e-9)


def test_tail_rate_uses_last_decade():
    ndof = np.array([10, 100, 1000, 3000, 10000.0])
    vals = np.array([1.0, 1.0, 1.0, 3000 ** -0.5 * 1000 ** 0.5, 10000 ** -0.5 * 1000 ** 0.5])
    assert tail_rate(ndof, vals) == pytest.approx(0.5, rel=1e-9)


def test_rates_skip_missing_values():
    per, slope = compute_rates([1, 2, 4], [np.nan, 1.0, 0.5])
    assert np.isnan(per[1]) and per[2] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        compute_rates([1], [1.0])


@pytest.mark.parametrize("kwargs", [dict(k=0), dict(variant="x"), dict(mode="greedy"), dict(theta=0.0),
                                    dict(lam=1.0)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        RunConfig(**kwargs)


def test_config_material():
    assert RunConfig(lam=2.0, mu=3.0).material() == Material(2.0, 3.0)
    mat = RunConfig(E=1e5, nu=0.3).material()
    assert mat.mu == pytest.approx(1e5 / 2.6)


def test_benchmark_problem_names():
    mat = Material(1.0, 1.0)
    assert benchmark_problem("lshape", mat).name == "lshape"
    assert benchmark_problem("cooks", mat).name == "cooks"
    assert benchmark_problem("square", mat).has_exact
    with pytest.raises(ValueError):
        benchmark_problem("disk", mat)


def test_uniform_run_stops_at_max_ndof():
    cfg = RunConfig(benchmark="lshape", mode="uniform", k=1, max_ndof=3000)
    hist = run_afem(cfg, keep_meshes=True)
    assert hist.ndof[-1] <= 3000
    from hho_elasticity.mesh import uniform_refine

    assert count_dofs(uniform_refine(hist.meshes[-1]), 1) > 3000
    assert np.all(np.diff(hist.column("elements")) > 0)
    np.testing.assert_allclose(hist.column("elements")[1:] / hist.column("elements")[:-1], 4.0)
    d = hist.as_dict()
    assert d["config"]["mode"] == "uniform" and len(d["levels"]) == len(hist.levels)


def test_adaptive_run_levels_and_callback():
    seen = []
    cfg = RunConfig(benchmark="lshape", k=1, max_levels=5, lam=10.0, mu=1.0)
    hist = run_afem(cfg, callback=lambda rec, mesh, res: seen.append(rec.level))
    assert seen == [0, 1, 2, 3, 4]
    eff = hist.column("eff_index")
    assert np.all(np.isfinite(eff)) and np.all(eff > 0)
    h = hist.column("h_min_singular")
    assert np.all(np.diff(h) <= 0) and h[-1] < h[0]
    assert all(r.factorization for r in hist.levels)


def test_run_without_exact_solution():
    hist = run_afem(RunConfig(benchmark="cooks", k=1, max_levels=3))
    assert np.all(np.isnan(hist.column("err_sigma")))
    assert np.all(hist.column("eta") > 0)
    assert len(hist.meshes) == 1


def test_time_budget_stops_early():
    hist = run_afem(RunConfig(benchmark="lshape", k=1, max_levels=30, max_time=0.0))
    assert len(hist.levels) == 1


def test_runs_are_deterministic():
    cfg = RunConfig(benchmark="lshape", k=1, max_levels=4)
    a = run_afem(cfg)
    b = run_afem(cfg)
    np.testing.assert_array_equal(a.column("eta_tilde"), b.column("eta_tilde"))
    np.testing.assert_array_equal(a.meshes[-1].triangles, b.meshes[-1].triangles)
