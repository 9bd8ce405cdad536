"""Budget-constrained tuning of infection, recovery and cutting rates.

Each allocator turns ``maximize lambda s.t. M v <= -lambda v`` (``M`` the
stability matrix of the model, ``v > 0``) plus a budget and box constraints
into a geometric program.  Any feasible point certifies
``lambda_max(M) <= -lambda`` because ``M`` is Metzler.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import GPError, InfeasibleError, ModelError
from .gp import GpProblem, GpSolution, Monomial, Posynomial, solve
from .spectral import build_A1, build_A2, build_A3, lambda_max, model_threshold
from .temporal import (
    REFERENCE_RATES,
    AmeiNet,
    AsisModel,
    EpidemicParams,
    MarkovTemporalNet,
    abar_matrix,
    amei_karate,
    asis_karate,
    markov_karate,
)

__all__ = [
    "CostModel",
    "normalize_costs",
    "BudgetedProblem",
    "AllocationResult",
    "optimize_markov",
    "optimize_amei",
    "optimize_asis",
    "optimize",
    "uniform_allocation",
    "MarkovAllocator",
    "AmeiAllocator",
    "AsisAllocator",
    "reference_problem",
]

V_FLOOR = 1e-12
LAMBDA_FLOOR = 1e-10


@dataclass(frozen=True)
class CostModel:
    """``cost(x) = offset + scale * u(x) ** -shape`` with ``u`` the GP variable.

    ``u = x`` for infection-rate costs and ``u = hat - x`` for recovery and
    cutting costs.  ``offset`` is negative by construction, so it is folded
    into the budget's right-hand side when the GP is built.
    """

    kind: str
    shape: float
    lower: float
    upper: float
    offset: float
    scale: float
    hat: float | None = None

    def gp_variable(self, x):
        x = np.asarray(x, dtype=float)
        return x if self.kind == "infection" else self.hat - x

    def __call__(self, x):
        return self.offset + self.scale * self.gp_variable(x) ** (-self.shape)

    def inverse(self, cost):
        """Rate whose cost equals ``cost`` (inside the feasible interval)."""
        u = ((np.asarray(cost, dtype=float) - self.offset) / self.scale) ** (-1.0 / self.shape)
        return u if self.kind == "infection" else self.hat - u

    def gp_bounds(self) -> tuple[float, float]:
        if self.kind == "infection":
            return self.lower, self.upper
        return self.hat - self.upper, self.hat - self.lower


_KINDS = {"infection", "recovery", "cutting"}


def normalize_costs(kind: str, shape: float, hat: float | None, bounds) -> CostModel:
    """Fix the two constants of a cost curve from its endpoint values.

    ``infection``: cost 1/2 at the lower rate and 0 at the upper rate.
    ``recovery``: cost 0 at the lower rate and 1/2 at the upper rate.
    ``cutting``: cost 0 at the lower rate and 1 at the upper rate.
    """
    if kind not in _KINDS:
        raise ModelError(f"unknown cost kind {kind!r}")
    lo, hi = (float(b) for b in bounds)
    if not (0 < lo < hi) or not math.isfinite(hi):
        raise ModelError(f"degenerate or invalid interval [{lo}, {hi}]")
    if not shape > 0:
        raise ModelError("shape exponent must be positive")
    if kind == "infection":
        scale = 0.5 / (lo**-shape - hi**-shape)
        return CostModel(kind, float(shape), lo, hi, -scale * hi**-shape, scale)
    if hat is None or not hat > hi:
        raise ModelError(f"shift constant must exceed the upper rate {hi}")
    top = 0.5 if kind == "recovery" else 1.0
    scale = top / ((hat - hi) ** -shape - (hat - lo) ** -shape)
    return CostModel(kind, float(shape), lo, hi, -scale * (hat - lo) ** -shape, scale, float(hat))


@dataclass(frozen=True)
class BudgetedProblem:
    """Model plus cost curves and budget.

    For Markovian and AMEI models ``costs`` holds ``infection`` and
    ``recovery`` curves; for the adaptive model a ``cutting`` curve and
    ``params`` carries the fixed infection and recovery rates.
    """

    model: object
    costs: dict
    budget: float
    params: EpidemicParams | None = None

    def __post_init__(self):
        if not math.isfinite(self.budget) or self.budget < 0:
            raise ModelError("budget must be a nonnegative finite number")
        needed = {"cutting"} if isinstance(self.model, AsisModel) else {"infection", "recovery"}
        if set(self.costs) != needed:
            raise ModelError(f"{type(self.model).__name__} needs cost curves {sorted(needed)}")
        if isinstance(self.model, AsisModel) and self.params is None:
            raise ModelError("adaptive model needs fixed infection/recovery rates")
        n = self.model.n
        top = n * sum(c(c.lower if c.kind == "infection" else c.upper) for c in self.costs.values())
        if self.budget > top + 1e-9:
            raise ModelError(f"budget {self.budget} exceeds the full-protection cost {top}")

    @property
    def n(self) -> int:
        return self.model.n


@dataclass
class AllocationResult:
    beta_star: np.ndarray | None
    delta_star: np.ndarray | None
    phi_star: np.ndarray | None
    lambda_star: float
    spend: np.ndarray
    total_spend: float
    solver: GpSolution | None
    lambda_max_check: float = float("nan")
    eigvec: np.ndarray | None = field(default=None, repr=False)
    spend_by_kind: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        return self.solver.status if self.solver is not None else "optimal"

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else [float(x) for x in a]

        return {
            "lambda_star": float(self.lambda_star),
            "rates": {"beta": arr(self.beta_star), "delta": arr(self.delta_star), "phi": arr(self.phi_star)},
            "spend": arr(self.spend),
            "total_spend": float(self.total_spend),
            "status": self.status,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def write_spend_csv(self, path) -> None:
        kinds = sorted(self.spend_by_kind)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node", *kinds, "total"])
            for i, tot in enumerate(self.spend):
                w.writerow([i, *(f"{self.spend_by_kind[k][i]:.17g}" for k in kinds), f"{tot:.17g}"])


# ---------------------------------------------------------------- assembly


def _budget_constraint(costs, groups, budget, n):
    """``sum_i scale * u_i^-shape <= budget - n * sum(offsets)`` as ``posy <= 1``."""
    rhs = budget - n * sum(c.offset for c, _ in zip(costs, groups))
    terms = []
    for c, names in zip(costs, groups):
        for name in names:
            terms.append(Monomial(c.scale / rhs, {name: -c.shape}))
    return Posynomial(terms)


def _eigen_row(num_terms, denom_coeff, v_name):
    """``(sum of monomials) / (denom_coeff * v) <= 1``."""
    inv = Monomial(1.0 / denom_coeff, {v_name: -1.0})
    return Posynomial([t * inv for t in num_terms])


def _solve_checked(gp, feas_tol, opt_tol):
    sol = solve(gp, feas_tol=feas_tol, opt_tol=opt_tol)
    if sol.status == "infeasible":
        raise InfeasibleError(
            "allocation problem is infeasible: no rates within budget reach a positive decay rate",
            certificate={"phase1_value": sol.phase1_value},
        )
    return sol


def _clip(x, lo, hi):
    return np.clip(np.asarray(x, dtype=float), lo, hi)


def _rate_model(problem: BudgetedProblem):
    f, g = problem.costs["infection"], problem.costs["recovery"]
    return f, g


def optimize_markov(problem: BudgetedProblem, *, feas_tol: float = 1e-8, opt_tol: float = 1e-8) -> AllocationResult:
    """Optimal infection/recovery rates on a Markovian temporal network."""
    net = problem.model
    if not isinstance(net, MarkovTemporalNet):
        raise ModelError("optimize_markov needs a MarkovTemporalNet")
    if problem.budget == 0:
        return _natural_rates(problem)
    f, g = _rate_model(problem)
    n, L = net.n, net.L
    pi = net.rates
    hat = g.hat
    names_b = [("beta", i) for i in range(n)]
    names_d = [("dtil", i) for i in range(n)]
    names_v = [[("v", l, i) for i in range(n)] for l in range(L)]
    lam = "lam"
    ineq = []
    for l, cfg in enumerate(net.configs):
        nbrs = [cfg.neighbors(i) for i in range(n)]
        for i in range(n):
            v_li = names_v[l][i]
            terms = [Monomial(pi[k, l], {names_v[k][i]: 1.0}) for k in range(L) if k != l and pi[k, l] > 0]
            terms += [Monomial(1.0, {names_b[i]: 1.0, names_v[l][j]: 1.0}) for j in nbrs[i]]
            terms += [Monomial(1.0, {names_d[i]: 1.0, v_li: 1.0}), Monomial(1.0, {lam: 1.0, v_li: 1.0})]
            ineq.append(_eigen_row(terms, hat - pi[l, l], v_li))
    ineq.append(_budget_constraint([f, g], [names_b, names_d], problem.budget, n))
    lam_hi = hat + float(np.max(-np.diag(pi))) + 1.0
    bounds = {name: f.gp_bounds() for name in names_b}
    bounds.update({name: g.gp_bounds() for name in names_d})
    bounds.update({name: (V_FLOOR, 1.0) for row in names_v for name in row})
    bounds[lam] = (LAMBDA_FLOOR, lam_hi)
    variables = tuple(names_b + names_d + [nm for row in names_v for nm in row] + [lam])
    gp = GpProblem(variables, Monomial(1.0, {lam: -1.0}), tuple(ineq), (), bounds)
    sol = _solve_checked(gp, feas_tol, opt_tol)
    beta = _clip([sol.values[k] for k in names_b], f.lower, f.upper)
    delta = _clip([hat - sol.values[k] for k in names_d], g.lower, g.upper)
    vvec = np.array([sol.values[k] for row in names_v for k in row])
    check = lambda_max(build_A1(net, EpidemicParams(beta, delta)), 1e-12)
    return _rate_result(f, g, beta, delta, sol, check, vvec)


def optimize_amei(problem: BudgetedProblem, *, feas_tol: float = 1e-8, opt_tol: float = 1e-8) -> AllocationResult:
    """Sub-optimal rates for an AMEI network via its time-averaged matrix."""
    net = problem.model
    if not isinstance(net, AmeiNet):
        raise ModelError("optimize_amei needs an AmeiNet")
    if problem.budget == 0:
        return _natural_rates(problem)
    f, g = _rate_model(problem)
    n = net.n
    abar = abar_matrix(net)
    hat = g.hat
    names_b = [("beta", i) for i in range(n)]
    names_d = [("dtil", i) for i in range(n)]
    names_v = [("v", i) for i in range(n)]
    lam = "lam"
    ineq = []
    for i in range(n):
        terms = [Monomial(abar[i, j], {names_b[i]: 1.0, names_v[j]: 1.0}) for j in range(n) if abar[i, j] > 0]
        terms += [Monomial(1.0, {names_d[i]: 1.0, names_v[i]: 1.0}), Monomial(1.0, {lam: 1.0, names_v[i]: 1.0})]
        ineq.append(_eigen_row(terms, hat, names_v[i]))
    ineq.append(_budget_constraint([f, g], [names_b, names_d], problem.budget, n))
    bounds = {name: f.gp_bounds() for name in names_b}
    bounds.update({name: g.gp_bounds() for name in names_d})
    bounds.update({name: (V_FLOOR, 1.0) for name in names_v})
    bounds[lam] = (LAMBDA_FLOOR, hat + 1.0)
    gp = GpProblem(tuple(names_b + names_d + names_v + [lam]), Monomial(1.0, {lam: -1.0}), tuple(ineq), (), bounds)
    sol = _solve_checked(gp, feas_tol, opt_tol)
    beta = _clip([sol.values[k] for k in names_b], f.lower, f.upper)
    delta = _clip([hat - sol.values[k] for k in names_d], g.lower, g.upper)
    vvec = np.array([sol.values[k] for k in names_v])
    check = lambda_max(build_A2(net, EpidemicParams(beta, delta), abar), 1e-12)
    return _rate_result(f, g, beta, delta, sol, check, vvec)


def _rate_result(f, g, beta, delta, sol, check, vvec):
    fb, gd = f(beta), g(delta)
    spend = fb + gd
    return AllocationResult(
        beta_star=beta,
        delta_star=delta,
        phi_star=None,
        lambda_star=1.0 / sol.objective_value,
        spend=spend,
        total_spend=float(spend.sum()),
        solver=sol,
        lambda_max_check=check,
        eigvec=vvec,
        spend_by_kind={"infection": fb, "recovery": gd},
    )


def optimize_asis(problem: BudgetedProblem, *, feas_tol: float = 1e-8, opt_tol: float = 1e-8) -> AllocationResult:
    """Cutting rates for the adaptive SIS model."""
    m = problem.model
    if not isinstance(m, AsisModel):
        raise ModelError("optimize_asis needs an AsisModel")
    if problem.budget == 0:
        return _natural_rates(problem)
    h = problem.costs["cutting"]
    ep = problem.params
    n = m.n
    g0 = m.g0
    hat = h.hat
    nbrs = [g0.neighbors(i) for i in range(n)]
    names_t = [("ptil", i) for i in range(n)]
    names_p = [("vp", i) for i in range(n)]
    names_q = {(i, j): ("vq", i, j) for i in range(n) for j in nbrs[i]}
    lam = "lam"
    ineq = []
    for i in range(n):
        inflow = [Monomial(ep.beta[i], {names_q[(k, i)]: 1.0}) for k in nbrs[i]]
        ineq.append(_eigen_row(inflow + [Monomial(1.0, {lam: 1.0, names_p[i]: 1.0})], ep.delta[i], names_p[i]))
        for j in nbrs[i]:
            psi = m.psi[(min(i, j), max(i, j))]
            vq = names_q[(i, j)]
            terms = [Monomial(psi, {names_p[i]: 1.0})] + inflow
            terms += [Monomial(1.0, {names_t[i]: 1.0, vq: 1.0}), Monomial(1.0, {lam: 1.0, vq: 1.0})]
            ineq.append(_eigen_row(terms, ep.delta[i] + hat + psi, vq))
    ineq.append(_budget_constraint([h], [names_t], problem.budget, n))
    bounds = {name: h.gp_bounds() for name in names_t}
    bounds.update({name: (V_FLOOR, 1.0) for name in names_p})
    bounds.update({name: (V_FLOOR, 1.0) for name in names_q.values()})
    bounds[lam] = (LAMBDA_FLOOR, float(np.max(ep.delta)) + 1.0)
    variables = tuple(names_t + names_p + list(names_q.values()) + [lam])
    gp = GpProblem(variables, Monomial(1.0, {lam: -1.0}), tuple(ineq), (), bounds)
    sol = _solve_checked(gp, feas_tol, opt_tol)
    phi = _clip([hat - sol.values[k] for k in names_t], h.lower, h.upper)
    vvec = np.array([sol.values[k] for k in names_p] + [sol.values[k] for k in names_q.values()])
    check = lambda_max(build_A3(m.with_phi(phi), ep), 1e-12)
    spend = h(phi)
    return AllocationResult(
        beta_star=None,
        delta_star=None,
        phi_star=phi,
        lambda_star=1.0 / sol.objective_value,
        spend=spend,
        total_spend=float(spend.sum()),
        solver=sol,
        lambda_max_check=check,
        eigvec=vvec,
        spend_by_kind={"cutting": spend},
    )


def _natural_rates(problem: BudgetedProblem) -> AllocationResult:
    """Zero budget: the only affordable point is the natural-rate corner."""
    model, n = problem.model, problem.n
    if isinstance(model, AsisModel):
        h = problem.costs["cutting"]
        phi = np.full(n, h.lower)
        mat = build_A3(model.with_phi(phi), problem.params)
        beta = delta = None
        kinds = {"cutting": np.zeros(n)}
    else:
        f, g = _rate_model(problem)
        beta, delta, phi = np.full(n, f.upper), np.full(n, g.lower), None
        ep = EpidemicParams(beta, delta)
        mat = build_A1(model, ep) if isinstance(model, MarkovTemporalNet) else build_A2(model, ep)
        # cost curves vanish at the natural rates by construction
        kinds = {"infection": np.zeros(n), "recovery": np.zeros(n)}
    lam, vec = _perron(mat)
    if not -lam > 0:
        raise InfeasibleError(
            "zero budget and the natural rates give no positive decay rate",
            certificate={"lambda_max": lam},
        )
    spend = sum(kinds.values())
    return AllocationResult(beta, delta, phi, -lam, spend, float(spend.sum()), None, lam, vec, kinds)


def _perron(mat):
    w, v = np.linalg.eig(np.asarray(mat))
    k = int(np.argmax(w.real))
    vec = np.abs(v[:, k].real)
    return lambda_max(mat, 1e-12), vec / vec.max()


def optimize(problem: BudgetedProblem, **kw) -> AllocationResult:
    if isinstance(problem.model, MarkovTemporalNet):
        return optimize_markov(problem, **kw)
    if isinstance(problem.model, AmeiNet):
        return optimize_amei(problem, **kw)
    if isinstance(problem.model, AsisModel):
        return optimize_asis(problem, **kw)
    raise ModelError(f"no allocator for {type(problem.model).__name__}")


def uniform_allocation(problem: BudgetedProblem) -> AllocationResult:
    """Equal spend per node; split evenly between the two rates when there are two."""
    n = problem.n
    share = problem.budget / n
    model = problem.model
    if isinstance(model, AsisModel):
        h = problem.costs["cutting"]
        phi = np.full(n, float(_clip(h.inverse(share), h.lower, h.upper)))
        lam = lambda_max(build_A3(model.with_phi(phi), problem.params), 1e-12)
        spend = h(phi)
        return AllocationResult(None, None, phi, -lam, spend, float(spend.sum()), None, lam, spend_by_kind={"cutting": spend})
    f, g = _rate_model(problem)
    beta = np.full(n, float(_clip(f.inverse(share / 2), f.lower, f.upper)))
    delta = np.full(n, float(_clip(g.inverse(share / 2), g.lower, g.upper)))
    ep = EpidemicParams(beta, delta)
    mat = build_A1(model, ep) if isinstance(model, MarkovTemporalNet) else build_A2(model, ep)
    lam = lambda_max(mat, 1e-12)
    fb, gd = f(beta), g(delta)
    return AllocationResult(
        beta, delta, None, -lam, fb + gd, float((fb + gd).sum()), None, lam, spend_by_kind={"infection": fb, "recovery": gd}
    )


# ---------------------------------------------------------------- estimators


class _AllocatorBase(BaseEstimator):
    def _result_attrs(self, res: AllocationResult):
        self.result_ = res
        self.lambda_ = res.lambda_star
        self.spend_ = res.spend
        return self

    def score(self, model, y=None) -> float:
        """Certified decay rate ``-lambda_max`` at the fitted rates."""
        check_is_fitted(self, "result_")
        return -self.result_.lambda_max_check


class MarkovAllocator(_AllocatorBase):
    """Budgeted vaccination/antidote allocation on a Markovian temporal network.

    ``delta_hat`` defaults to twice the upper recovery rate.
    """

    def __init__(self, budget=1.0, beta_bounds=(0.8, 1.0), delta_bounds=(0.05, 0.06), q=0.1, r=0.1, delta_hat=None, feas_tol=1e-8, opt_tol=1e-8):
        self.budget = budget
        self.beta_bounds = beta_bounds
        self.delta_bounds = delta_bounds
        self.q = q
        self.r = r
        self.delta_hat = delta_hat
        self.feas_tol = feas_tol
        self.opt_tol = opt_tol

    def _problem(self, model) -> BudgetedProblem:
        hat = 2.0 * self.delta_bounds[1] if self.delta_hat is None else self.delta_hat
        costs = {
            "infection": normalize_costs("infection", self.q, None, self.beta_bounds),
            "recovery": normalize_costs("recovery", self.r, hat, self.delta_bounds),
        }
        return BudgetedProblem(model, costs, float(self.budget))

    def fit(self, model, y=None):
        if not isinstance(model, MarkovTemporalNet):
            raise ModelError("MarkovAllocator.fit needs a MarkovTemporalNet")
        res = optimize_markov(self._problem(model), feas_tol=self.feas_tol, opt_tol=self.opt_tol)
        self.beta_, self.delta_ = res.beta_star, res.delta_star
        return self._result_attrs(res)


class AmeiAllocator(MarkovAllocator):
    """Same cost setup as :class:`MarkovAllocator`, for AMEI networks."""

    def fit(self, model, y=None):
        if not isinstance(model, AmeiNet):
            raise ModelError("AmeiAllocator.fit needs an AmeiNet")
        res = optimize_amei(self._problem(model), feas_tol=self.feas_tol, opt_tol=self.opt_tol)
        self.beta_, self.delta_ = res.beta_star, res.delta_star
        return self._result_attrs(res)


class AsisAllocator(_AllocatorBase):
    """Cutting-rate allocation for the adaptive SIS model (``phi_hat`` defaults to 100x the upper rate)."""

    def __init__(self, budget=1.0, beta=0.2, delta=1.0, phi_bounds=(0.5, 1.5), s=1.0, phi_hat=None, feas_tol=1e-8, opt_tol=1e-8):
        self.budget = budget
        self.beta = beta
        self.delta = delta
        self.phi_bounds = phi_bounds
        self.s = s
        self.phi_hat = phi_hat
        self.feas_tol = feas_tol
        self.opt_tol = opt_tol

    def _problem(self, model) -> BudgetedProblem:
        hat = 100.0 * self.phi_bounds[1] if self.phi_hat is None else self.phi_hat
        ep = EpidemicParams(np.broadcast_to(self.beta, (model.n,)), np.broadcast_to(self.delta, (model.n,)))
        costs = {"cutting": normalize_costs("cutting", self.s, hat, self.phi_bounds)}
        return BudgetedProblem(model, costs, float(self.budget), ep)

    def fit(self, model, y=None):
        if not isinstance(model, AsisModel):
            raise ModelError("AsisAllocator.fit needs an AsisModel")
        res = optimize_asis(self._problem(model), feas_tol=self.feas_tol, opt_tol=self.opt_tol)
        self.phi_ = res.phi_star
        return self._result_attrs(res)


# ---------------------------------------------------------------- reference settings


def reference_problem(kind: str, budget: float | None = None) -> BudgetedProblem:
    """The karate-based reference instances.

    ``markov`` / ``amei``: natural recovery 0.05, natural infection rate at
    the Markovian threshold, 20 % improvement range, ``q = r = 0.1``,
    ``delta_hat`` twice the top recovery rate.  ``asis``: ``delta = 1``,
    ``psi = 2``, cutting rates in ``[0.5, 1.5]``, ``phi_hat = 150``,
    ``s = 1`` and the infection rate at the threshold for the lowest
    cutting rate.  Budget defaults to ``n / 2``.
    """
    if kind in ("markov", "amei"):
        d_lo = REFERENCE_RATES["p1"] / 2
        d_hi = 1.2 * d_lo
        mk = markov_karate(**REFERENCE_RATES)
        b_hi = model_threshold(mk, d_lo)
        costs = {
            "infection": normalize_costs("infection", 0.1, None, (0.8 * b_hi, b_hi)),
            "recovery": normalize_costs("recovery", 0.1, 2 * d_hi, (d_lo, d_hi)),
        }
        model = mk if kind == "markov" else amei_karate(**REFERENCE_RATES)
        return BudgetedProblem(model, costs, model.n / 2 if budget is None else budget)
    if kind == "asis":
        lo, hi = 0.5, 1.5
        model = asis_karate(lo, 2.0)
        beta = model_threshold(model, 1.0)
        ep = EpidemicParams.homogeneous(model.n, beta, 1.0)
        costs = {"cutting": normalize_costs("cutting", 1.0, 100 * hi, (lo, hi))}
        return BudgetedProblem(model, costs, model.n / 2 if budget is None else budget, ep)
    raise ModelError(f"unknown reference instance {kind!r}")
