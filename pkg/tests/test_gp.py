import math

import numpy as np
import pytest

from epictrl.exceptions import GPError
from epictrl.gp import (
    GpProblem,
    Monomial,
    Posynomial,
    dump_problem,
    evaluate,
    grid_oracle,
    load_problem,
    problem_from_dict,
    problem_to_dict,
    random_gp,
    solution_to_dict,
    solve,
    to_convex,
    var,
)

x, y = var("x"), var("y")


def test_evaluate_examples():
    p = 2 * x * y**-1 + 3 * x**0.5
    assert evaluate(p, {"x": 4.0, "y": 2.0}) == pytest.approx(4.0 + 6.0)
    assert (x * y)({"x": 2.0, "y": 3.0}) == 6.0
    assert evaluate(5.0, {}) == 5.0
    with pytest.raises(GPError):
        evaluate(x, {"x": 0.0})


def test_monomial_algebra():
    m = (3 * x**2) / (x * y)
    assert m == Monomial(3.0, {"x": 1.0, "y": -1.0})
    assert (1 / x) == Monomial(1.0, {"x": -1.0})
    assert len((x + y) * (x + 1)) == 4
    with pytest.raises(GPError):
        Monomial(-1.0)
    with pytest.raises(GPError):
        Posynomial([])


def test_problem_validation():
    with pytest.raises(GPError):
        GpProblem(("x",), x * y)
    with pytest.raises(GPError):
        GpProblem(("x", "x"), x)
    with pytest.raises(GPError):
        GpProblem(("x",), x, bounds={"x": (2.0, 1.0)})
    with pytest.raises(GPError):
        GpProblem(("x", "y"), x, eq=(x + y,))


def test_convex_transform_exact():
    rng = np.random.default_rng(99)
    for _ in range(1000):
        gp = random_gp(rng)
        cgp = to_convex(gp)
        pt = {k: float(np.exp(rng.uniform(-2, 2))) for k in gp.variables}
        ly = np.array([math.log(pt[k]) for k in gp.variables])
        assert cgp.objective_value(ly) == pytest.approx(math.log(evaluate(gp.objective, pt)), abs=1e-12)
        vals = cgp.constraint_values(ly)
        for i, p in enumerate(gp.ineq):
            assert vals[i] == pytest.approx(math.log(evaluate(p, pt)), abs=1e-12)


def test_convexity_of_log_form():
    rng = np.random.default_rng(5)
    for _ in range(200):
        cgp = to_convex(random_gp(rng))
        nv = len(cgp.variables)
        a, b = rng.normal(size=nv), rng.normal(size=nv)
        lam = rng.random()
        mid = cgp.objective_value(lam * a + (1 - lam) * b)
        assert mid <= lam * cgp.objective_value(a) + (1 - lam) * cgp.objective_value(b) + 1e-12


def test_trivial_solves():
    sol = solve(GpProblem(("x",), x + 1 / x, bounds={"x": (0.1, 10.0)}))
    assert sol.optimal
    assert sol.objective_value == pytest.approx(2.0, rel=1e-7)
    assert sol.values["x"] == pytest.approx(1.0, rel=1e-3)
    sol = solve(GpProblem(("x", "y"), 1 / (x * y), ineq=(x + y,)))
    assert sol.optimal and sol.objective_value == pytest.approx(4.0, rel=1e-7)
    sol = solve(GpProblem(("x", "y"), x + y, eq=(x * y,), bounds={"x": (0.01, 100.0), "y": (0.01, 100.0)}))
    assert sol.objective_value == pytest.approx(2.0, rel=1e-7)
    assert sol.kkt_residual < 1e-6


def test_infeasible():
    sol = solve(GpProblem(("x",), x, ineq=(2 * x,), bounds={"x": (1.0, 5.0)}))
    assert sol.status == "infeasible"


def test_against_grid_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(10):
        gp = random_gp(rng, 2)
        sol, ora = solve(gp), grid_oracle(gp, step=2e-3)
        assert sol.optimal and ora.feasible
        assert sol.objective_value <= ora.objective_value * (1 + 1e-7)
        assert abs(sol.objective_value - ora.objective_value) / ora.objective_value < 1e-2


def test_rescaling_invariance():
    rng = np.random.default_rng(17)
    for _ in range(10):
        gp = random_gp(rng)
        scaled = GpProblem(gp.variables, gp.objective * 1000.0, gp.ineq, gp.eq, gp.bounds)
        a, b = solve(gp), solve(scaled)
        assert b.objective_value == pytest.approx(1000.0 * a.objective_value, rel=1e-6)


def test_json_round_trip(tmp_path):
    gp = GpProblem(
        ("x", ("v", 1)),
        x + 2 * var(("v", 1)) ** -1.5,
        ineq=(0.5 * x * var(("v", 1)),),
        eq=(Monomial(2.0, {"x": 1.0}),),
        bounds={"x": (0.1, 3.0)},
    )
    back = problem_from_dict(problem_to_dict(gp))
    assert problem_to_dict(back) == problem_to_dict(gp)
    dump_problem(gp, tmp_path / "p.json")
    assert problem_to_dict(load_problem(tmp_path / "p.json")) == problem_to_dict(gp)
    d = solution_to_dict(solve(gp))
    assert d["status"] == "optimal"
    assert len(d["values"]) == 2
