"""Self-check suites behind ``epictrl validate``.

Each suite returns a report ``{"suite", "passed", "checks": [...]}`` where
every check records its measured value and the tolerance it was held to.
"""

from __future__ import annotations

import time

import numpy as np

from .allocation import optimize, reference_problem, uniform_allocation
from .gp import grid_oracle, random_gp, solve
from .graph import StaticGraph, adjacency, karate
from .simulate import SimConfig, master_equation_marginals, mean_field_ode, simulate_batch
from .spectral import build_A1, build_static, lambda_max, model_threshold, stability_matrix
from .temporal import AsisModel, EpidemicParams, MarkovTemporalNet, REFERENCE_RATES, markov_karate

__all__ = ["SUITES", "run_suite", "cycle_pair_net"]


def _check(name, passed, value=None, tolerance=None, **extra):
    out = {"name": name, "passed": bool(passed), "value": value, "tolerance": tolerance}
    out.update(extra)
    return out


def cycle_pair_net(pi: float = 1.0) -> MarkovTemporalNet:
    """4-cycle whose two perfect matchings alternate at rate ``pi``."""
    a = StaticGraph.from_edges(4, [(0, 1), (2, 3)])
    b = StaticGraph.from_edges(4, [(1, 2), (0, 3)])
    return MarkovTemporalNet((a, b), np.array([[0.0, pi], [pi, 0.0]]))


def suite_thresholds(quick: bool = False):
    checks = []
    g = karate()
    lam = lambda_max(adjacency(g), 1e-14)
    static = MarkovTemporalNet((g,), np.zeros((1, 1)))
    for d in (0.5, 1.0, 2.0):
        bc = model_threshold(static, d, tol=1e-12)
        rel = abs(bc - d / lam) / (d / lam)
        checks.append(_check(f"static threshold delta={d}", rel <= 1e-6, rel, 1e-6))
    asis = AsisModel.homogeneous(g, 3.0, 2.0)
    bc = model_threshold(asis, 1.0, tol=1e-12)
    rel = abs(bc - 2.0 / lam) / (2.0 / lam)
    checks.append(_check("adaptive threshold phi=3 psi=2", rel <= 1e-6, rel, 1e-6))
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(5 if quick else 20):
        n = int(rng.integers(3, 8))
        edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.5]
        gg = StaticGraph.from_edges(n, edges)
        L = int(rng.choice([2, 4]))
        pi = rng.uniform(0.1, 2.0, (L, L))
        ep = EpidemicParams(rng.uniform(0.1, 1.0, n), rng.uniform(0.2, 1.5, n))
        lam1 = lambda_max(build_A1(MarkovTemporalNet((gg,) * L, pi), ep), 1e-13)
        worst = max(worst, abs(lam1 - lambda_max(build_static(gg, ep), 1e-13)))
    checks.append(_check("identical configurations collapse", worst <= 1e-8, worst, 1e-8))
    mk = markov_karate(**REFERENCE_RATES)
    deltas = (0.5, 1.0) if quick else (0.25, 0.5, 1.0, 1.5, 2.0)
    bcs = [model_threshold(mk, d, tol=1e-9) for d in deltas]
    checks.append(_check("markov karate threshold increasing", all(np.diff(bcs) > 0), bcs))
    checks.append(_check("markov karate above static line", all(b > d / lam for b, d in zip(bcs, deltas)), bcs))
    return checks


def suite_gp_oracle(quick: bool = False):
    rng = np.random.default_rng(4)
    checks = []
    for k in range(5 if quick else 20):
        gp = random_gp(rng)
        sol = solve(gp)
        ora = grid_oracle(gp)
        rel = abs(sol.objective_value - ora.objective_value) / abs(ora.objective_value)
        checks.append(_check(f"random gp {k}", sol.optimal and rel <= 1e-2, rel, 1e-2, status=sol.status))
    return checks


def suite_master_equation(quick: bool = False):
    checks = []
    net = cycle_pair_net(1.0)
    ep = EpidemicParams.homogeneous(4, 0.5, 1.0)
    lam = lambda_max(build_A1(net, ep), 1e-13)
    T = 20.0
    ts = np.linspace(T / 2, T, 41)
    marg = master_equation_marginals(net, ep, np.concatenate([[0.0], ts]), (1, 1, 1, 1))[1:]
    slope = -np.polyfit(ts, np.log(marg.sum(axis=1)), 1)[0]
    checks.append(_check("exact decay rate vs bound", slope >= 0.95 * abs(lam), slope, 0.95 * abs(lam), lambda_max=lam))
    path = StaticGraph.from_edges(3, [(0, 1), (1, 2)])
    rng = np.random.default_rng(5)
    worst = -np.inf
    for _ in range(5 if quick else 20):
        ep3 = EpidemicParams(rng.uniform(0.1, 2.0, 3), rng.uniform(0.2, 2.0, 3))
        x0 = tuple(int(v) for v in rng.integers(0, 2, 3)) if rng.random() < 0.8 else (1, 1, 1)
        tg = np.linspace(0, 3, 13)
        exact = master_equation_marginals(MarkovTemporalNet((path,), np.zeros((1, 1))), ep3, tg, x0)
        mf = mean_field_ode(build_static(path, ep3), np.array(x0, float), tg)
        worst = max(worst, float(np.max(exact - mf)))
    checks.append(_check("mean field dominates exact marginals", worst <= 1e-9, worst, 1e-9))
    return checks


def suite_allocation(quick: bool = False):
    checks = []
    for kind in ("markov", "amei", "asis"):
        prob = reference_problem(kind)
        res = optimize(prob)
        uni = uniform_allocation(prob)
        cert = res.lambda_max_check <= -res.lambda_star + 1e-6
        checks.append(_check(f"{kind} certificate", cert, res.lambda_max_check, -res.lambda_star + 1e-6))
        checks.append(_check(f"{kind} budget", res.total_spend <= prob.budget + 1e-6, res.total_spend, prob.budget))
        checks.append(_check(f"{kind} beats uniform", res.lambda_star >= uni.lambda_star, res.lambda_star, uni.lambda_star))
    return checks


def suite_simulation(quick: bool = False):
    runs = 20_000 if quick else 100_000
    checks = []
    tg = np.array([0.5, 1.0, 2.0])
    cases = [
        ("single edge", MarkovTemporalNet((StaticGraph.from_edges(2, [(0, 1)]),), np.zeros((1, 1))), EpidemicParams.homogeneous(2, 1.0, 1.0), (1, 0)),
        ("alternating 4-cycle", cycle_pair_net(1.0), EpidemicParams.homogeneous(4, 1.0, 1.0), (1, 0, 0, 0)),
        ("adaptive triangle", AsisModel.homogeneous(StaticGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)]), 1.5, 0.8), EpidemicParams.homogeneous(3, 2.0, 1.0), (1, 0, 0)),
    ]
    for name, model, ep, x0 in cases:
        res = simulate_batch(model, ep, SimConfig(2.0, 2024, x0), runs, tg)
        mc = res.states.mean(axis=0)
        se = np.maximum(res.states.std(axis=0) / np.sqrt(runs), 1e-12)
        z = float(np.max(np.abs(mc - master_equation_marginals(model, ep, tg, x0)) / se))
        checks.append(_check(f"{name} marginals", z <= 3.0, z, 3.0))
    return checks


SUITES = {
    "thresholds": suite_thresholds,
    "gp-oracle": suite_gp_oracle,
    "master-equation": suite_master_equation,
    "allocation": suite_allocation,
    "simulation": suite_simulation,
}


def run_suite(name: str, quick: bool = False) -> dict:
    if name not in SUITES:
        raise KeyError(name)
    t0 = time.perf_counter()
    checks = SUITES[name](quick)
    return {
        "suite": name,
        "passed": all(c["passed"] for c in checks),
        "checks": checks,
        "seconds": round(time.perf_counter() - t0, 3),
    }
