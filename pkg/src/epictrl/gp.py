"""Geometric programming: posynomial algebra, log-space transform and a
barrier-method solver.

A GP is solved in the variables ``y = log x``, where every posynomial
``f`` becomes the convex log-sum-exp ``F(y) = log sum_k exp(a_k . y + b_k)``
and every monomial equality becomes an affine equation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from numbers import Real

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.sparse as sp

from .exceptions import GPError

__all__ = [
    "Monomial",
    "Posynomial",
    "var",
    "evaluate",
    "GpProblem",
    "GpSolution",
    "ConvexGP",
    "to_convex",
    "solve",
    "grid_oracle",
    "OracleResult",
    "problem_to_dict",
    "problem_from_dict",
    "dump_problem",
    "load_problem",
    "solution_to_dict",
    "random_gp",
]


class Monomial:
    """``coeff * prod_v x_v ** exponents[v]`` with ``coeff > 0``."""

    __slots__ = ("coeff", "exponents")

    def __init__(self, coeff: float = 1.0, exponents: dict | None = None):
        coeff = float(coeff)
        if not coeff > 0 or not math.isfinite(coeff):
            raise GPError(f"monomial coefficient must be positive and finite, got {coeff}")
        exps = {}
        for k, a in (exponents or {}).items():
            a = float(a)
            if not math.isfinite(a):
                raise GPError(f"exponent of {k!r} is not finite")
            if a != 0.0:
                exps[k] = a
        self.coeff = coeff
        self.exponents = exps

    @property
    def variables(self) -> set:
        return set(self.exponents)

    def __mul__(self, other):
        if isinstance(other, Real):
            return Monomial(self.coeff * other, self.exponents)
        if isinstance(other, Monomial):
            exps = dict(self.exponents)
            for k, a in other.exponents.items():
                exps[k] = exps.get(k, 0.0) + a
            return Monomial(self.coeff * other.coeff, exps)
        if isinstance(other, Posynomial):
            return other * self
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Real):
            return Monomial(self.coeff / other, self.exponents)
        if isinstance(other, Monomial):
            return self * other**-1
        return NotImplemented

    def __rtruediv__(self, other):
        if isinstance(other, Real):
            return Monomial(other, {}) * self**-1
        return NotImplemented

    def __pow__(self, p):
        p = float(p)
        return Monomial(self.coeff**p, {k: a * p for k, a in self.exponents.items()})

    def __add__(self, other):
        return Posynomial([self]) + other

    __radd__ = __add__

    def __call__(self, x: dict) -> float:
        return evaluate(self, x)

    def __repr__(self):
        body = "*".join(f"{k}^{a:g}" for k, a in sorted(self.exponents.items(), key=lambda t: str(t[0])))
        return f"{self.coeff:g}" + (f"*{body}" if body else "")

    def __eq__(self, other):
        return isinstance(other, Monomial) and self.coeff == other.coeff and self.exponents == other.exponents

    __hash__ = None


class Posynomial:
    """Non-empty sum of monomials."""

    __slots__ = ("terms",)

    def __init__(self, terms):
        terms = tuple(Monomial(1.0, {}) * t if isinstance(t, Monomial) else t for t in terms)
        if not terms:
            raise GPError("a posynomial needs at least one term")
        if not all(isinstance(t, Monomial) for t in terms):
            raise GPError("posynomial terms must be monomials")
        self.terms = terms

    @property
    def variables(self) -> set:
        return set().union(*(t.variables for t in self.terms))

    def __add__(self, other):
        if isinstance(other, Real):
            if other == 0:
                return self
            return Posynomial(self.terms + (Monomial(other),))
        if isinstance(other, Monomial):
            return Posynomial(self.terms + (other,))
        if isinstance(other, Posynomial):
            return Posynomial(self.terms + other.terms)
        return NotImplemented

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, (Real, Monomial)):
            return Posynomial([t * other for t in self.terms])
        if isinstance(other, Posynomial):
            return Posynomial([a * b for a in self.terms for b in other.terms])
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (Real, Monomial)):
            return Posynomial([t / other for t in self.terms])
        return NotImplemented

    def __call__(self, x: dict) -> float:
        return evaluate(self, x)

    def __len__(self):
        return len(self.terms)

    def __repr__(self):
        return " + ".join(repr(t) for t in self.terms)


def var(name) -> Monomial:
    """The monomial ``x_name``."""
    return Monomial(1.0, {name: 1.0})


def _as_posynomial(p) -> Posynomial:
    if isinstance(p, Posynomial):
        return p
    if isinstance(p, Monomial):
        return Posynomial([p])
    if isinstance(p, Real):
        return Posynomial([Monomial(p)])
    raise GPError(f"expected a posynomial, got {type(p).__name__}")


def evaluate(p, x: dict) -> float:
    """Value of a monomial or posynomial at a positive assignment."""
    total = 0.0
    for t in _as_posynomial(p).terms:
        val = t.coeff
        for k, a in t.exponents.items():
            xv = x[k]
            if not xv > 0:
                raise GPError(f"variable {k!r} must be positive, got {xv}")
            val *= xv**a
        total += val
    return total


@dataclass(frozen=True)
class GpProblem:
    """``minimize objective`` s.t. ``ineq[i] <= 1``, ``eq[j] == 1`` and
    optional boxes ``bounds[v] = (lo, hi)``."""

    variables: tuple
    objective: Posynomial
    ineq: tuple = ()
    eq: tuple = ()
    bounds: dict = field(default_factory=dict)

    def __post_init__(self):
        names = tuple(self.variables)
        if len(set(names)) != len(names):
            raise GPError("duplicate variable names")
        known = set(names)
        obj = _as_posynomial(self.objective)
        ineq = tuple(_as_posynomial(p) for p in self.ineq)
        eq = tuple(self.eq)
        for m in eq:
            if not isinstance(m, Monomial):
                raise GPError("equality constraints must be monomials")
        used = obj.variables.union(*(p.variables for p in ineq), *(m.variables for m in eq))
        if used - known:
            raise GPError(f"unregistered variables: {sorted(map(str, used - known))[:5]}")
        bounds = {}
        for k, (lo, hi) in dict(self.bounds).items():
            if k not in known:
                raise GPError(f"bound on unregistered variable {k!r}")
            if not (0 < lo <= hi < math.inf):
                raise GPError(f"invalid box for {k!r}: [{lo}, {hi}]")
            bounds[k] = (float(lo), float(hi))
        object.__setattr__(self, "variables", names)
        object.__setattr__(self, "objective", obj)
        object.__setattr__(self, "ineq", ineq)
        object.__setattr__(self, "eq", eq)
        object.__setattr__(self, "bounds", bounds)


@dataclass
class GpSolution:
    values: dict
    objective_value: float
    status: str
    kkt_residual: float
    iterations: int = 0
    phase1_value: float = float("nan")
    duality_gap: float = float("nan")
    max_violation: float = float("nan")

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


# ---------------------------------------------------------------- convex form


@dataclass
class _LseBlock:
    """Stack of log-sum-exp functions sharing one sparse term matrix."""

    E: sp.csr_matrix  # terms x variables
    b: np.ndarray  # log coefficients per term
    seg: np.ndarray  # owning function of each term (sorted)
    starts: np.ndarray  # first term of each function
    m: int

    @classmethod
    def build(cls, rows, nvar):
        data, ri, ci, b, seg = [], [], [], [], []
        t = 0
        for f, terms in enumerate(rows):
            for coeff_log, cols in terms:
                for c, a in cols.items():
                    ri.append(t)
                    ci.append(c)
                    data.append(a)
                b.append(coeff_log)
                seg.append(f)
                t += 1
        E = sp.csr_matrix((data, (ri, ci)), shape=(t, nvar))
        seg = np.asarray(seg, dtype=np.intp)
        starts = np.searchsorted(seg, np.arange(len(rows))) if len(rows) else np.zeros(0, dtype=np.intp)
        return cls(E, np.asarray(b, dtype=float), seg, starts, len(rows))

    def values(self, y, need_weights=False):
        if self.m == 0:
            return (np.zeros(0), np.zeros(0)) if need_weights else np.zeros(0)
        z = self.E @ y + self.b
        zmax = np.maximum.reduceat(z, self.starts)
        w = np.exp(z - zmax[self.seg])
        s = np.add.reduceat(w, self.starts)
        f = zmax + np.log(s)
        if need_weights:
            return f, w / s[self.seg]
        return f

    def derivatives(self, y):
        """Values, gradients (m x nvar dense) and the term weights."""
        f, p = self.values(y, need_weights=True)
        P = sp.csr_matrix((p, (self.seg, np.arange(len(p)))), shape=(self.m, len(p)))
        G = (P @ self.E).toarray()
        return f, G, p

    def augment(self, col_values):
        """Add a new last column with value ``col_values[f]`` for every term of function ``f``."""
        extra = sp.csr_matrix(np.asarray(col_values, dtype=float)[self.seg][:, None])
        E = sp.hstack([self.E, extra], format="csr")
        return _LseBlock(E, self.b.copy(), self.seg, self.starts, self.m)

    def pad(self, ncols):
        E = sp.hstack([self.E, sp.csr_matrix((self.E.shape[0], ncols))], format="csr")
        return _LseBlock(E, self.b.copy(), self.seg, self.starts, self.m)


@dataclass
class ConvexGP:
    """Log-space form: minimise ``F0(y)`` s.t. ``F_i(y) <= 0``, ``A y = c``.

    Box bounds are appended to the inequalities as single-term rows, after
    the ``n_user_ineq`` rows that come from the posynomial constraints.
    """

    variables: tuple
    objective: _LseBlock
    ineq: _LseBlock
    A_eq: np.ndarray
    b_eq: np.ndarray
    n_user_ineq: int
    lower: np.ndarray
    upper: np.ndarray

    def objective_value(self, y) -> float:
        return float(self.objective.values(y)[0])

    def constraint_values(self, y) -> np.ndarray:
        return self.ineq.values(y)


def _posy_rows(p: Posynomial, index: dict):
    return [(math.log(t.coeff), {index[k]: a for k, a in t.exponents.items()}) for t in p.terms]


def to_convex(gp: GpProblem) -> ConvexGP:
    """Exact log-space reformulation of a GP."""
    index = {k: i for i, k in enumerate(gp.variables)}
    nv = len(index)
    rows = [_posy_rows(p, index) for p in gp.ineq]
    lower = np.full(nv, -np.inf)
    upper = np.full(nv, np.inf)
    for k, (lo, hi) in gp.bounds.items():
        i = index[k]
        lower[i], upper[i] = math.log(lo), math.log(hi)
        rows.append([(-math.log(hi), {i: 1.0})])
        rows.append([(math.log(lo), {i: -1.0})])
    A = np.zeros((len(gp.eq), nv))
    c = np.zeros(len(gp.eq))
    for r, m in enumerate(gp.eq):
        for k, a in m.exponents.items():
            A[r, index[k]] = a
        c[r] = -math.log(m.coeff)
    return ConvexGP(
        variables=gp.variables,
        objective=_LseBlock.build([_posy_rows(gp.objective, index)], nv),
        ineq=_LseBlock.build(rows, nv),
        A_eq=A,
        b_eq=c,
        n_user_ineq=len(gp.ineq),
        lower=lower,
        upper=upper,
    )


# ---------------------------------------------------------------- barrier method


@dataclass
class _Centering:
    y: np.ndarray
    newton_steps: int
    converged: bool
    grad_norm: float


def _solve_newton(H, g, A):
    """Newton direction for ``min`` with Hessian ``H`` subject to ``A dy = 0``."""
    n = H.shape[0]
    scale = max(1.0, float(np.max(np.abs(np.diag(H)))))
    boost = 0.0
    for _ in range(30):
        Hb = H + boost * np.eye(n) if boost else H
        try:
            if A.shape[0] == 0:
                c = scipy.linalg.cho_factor(Hb, check_finite=False)
                dy = -scipy.linalg.cho_solve(c, g, check_finite=False)
                if np.all(np.isfinite(dy)):
                    return dy
            else:
                k = A.shape[0]
                kkt = np.block([[Hb, A.T], [A, np.zeros((k, k))]])
                sol = np.linalg.solve(kkt, np.concatenate([-g, np.zeros(k)]))
                if np.all(np.isfinite(sol)):
                    return sol[:n]
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            pass
        boost = max(1e-12 * scale, boost * 10.0)
    raise GPError("Newton system could not be solved")


def _center(obj: _LseBlock, ineq: _LseBlock, A, y, t, *, relax=0.0, stop=None, max_steps=200, eps=1e-10):
    """Minimise ``t F0(y) - sum log(relax - F_i(y))`` from a strictly feasible ``y``."""
    alpha, shrink = 0.01, 0.5

    def merit(yv):
        f = ineq.values(yv) - relax
        if np.any(f >= 0) or not np.all(np.isfinite(f)):
            return math.inf
        return t * float(obj.values(yv)[0]) - float(np.sum(np.log(-f)))

    phi = merit(y)
    gnorm = math.inf
    for step in range(1, max_steps + 1):
        f0, g0, p0 = obj.derivatives(y)
        f, G, p = ineq.derivatives(y)
        f = f - relax
        inv = 1.0 / (-f)
        grad = t * g0[0] + G.T @ inv
        # Hessian: t*H0 + sum_i [H_i/(-f_i) + g_i g_i^T / f_i^2]
        E0 = obj.E
        H = t * ((E0.T.multiply(p0) @ E0).toarray() - np.outer(g0[0], g0[0]))
        if ineq.m:
            wt = p * inv[ineq.seg]
            H += (ineq.E.T.multiply(wt) @ ineq.E).toarray()
            H += (G.T * (inv**2 - inv)) @ G
        H = 0.5 * (H + H.T)
        dy = _solve_newton(H, grad, A)
        dec2 = float(-grad @ dy)
        resid = grad
        if A.shape[0]:
            nu = np.linalg.lstsq(A.T, -grad, rcond=None)[0]
            resid = grad + A.T @ nu
        gnorm = float(np.max(np.abs(resid)))
        # below the rounding level of the merit itself no further progress is measurable
        if dec2 / 2.0 <= max(eps, 64 * np.finfo(float).eps * abs(phi)):
            return _Centering(y, step, True, gnorm)
        s = 1.0
        while True:
            y_new = y + s * dy
            phi_new = merit(y_new)
            if phi_new <= phi - alpha * s * dec2:
                break
            s *= shrink
            if s < 1e-14:
                return _Centering(y, step, False, gnorm)
        y, phi = y_new, phi_new
        if stop is not None and stop(y):
            return _Centering(y, step, True, gnorm)
    return _Centering(y, max_steps, False, gnorm)


def _start_point(cgp: ConvexGP) -> np.ndarray:
    nv = len(cgp.variables)
    y = np.zeros(nv)
    boxed = np.isfinite(cgp.lower)
    y[boxed] = 0.5 * (cgp.lower[boxed] + cgp.upper[boxed])
    if cgp.A_eq.shape[0]:
        r = cgp.b_eq - cgp.A_eq @ y
        y = y + np.linalg.lstsq(cgp.A_eq, r, rcond=None)[0]
    return y


def _phase_one(cgp: ConvexGP, y0, feas_tol, max_newton):
    """Minimise the largest constraint value; returns ``(y, s_star, steps)``."""
    f0 = cgp.constraint_values(y0)
    if cgp.ineq.m == 0 or np.max(f0) < 0:
        return y0, float(np.max(f0)) if len(f0) else -math.inf, 0
    nv = len(y0)
    # variables (y, s): constraints F_i(y) - s <= 0 and -s - 1 <= 0
    ineq = cgp.ineq.augment(np.full(cgp.ineq.m, -1.0))
    floor = _LseBlock.build([[(-1.0, {nv: -1.0})]], nv + 1)
    ineq = _LseBlock(
        sp.vstack([ineq.E, floor.E], format="csr"),
        np.concatenate([ineq.b, floor.b]),
        np.concatenate([ineq.seg, floor.seg + ineq.m]),
        np.concatenate([ineq.starts, floor.starts + ineq.E.shape[0]]),
        ineq.m + 1,
    )
    obj = _LseBlock.build([[(0.0, {nv: 1.0})]], nv + 1)
    A = np.hstack([cgp.A_eq, np.zeros((cgp.A_eq.shape[0], 1))])
    z = np.concatenate([y0, [max(float(np.max(f0)), 0.0) + 1.0]])
    t, m = 1.0, ineq.m
    steps = 0

    def feasible(zv):
        return float(np.max(cgp.constraint_values(zv[:nv]))) < 0.0

    while True:
        res = _center(obj, ineq, A, z, t, stop=feasible, max_steps=max_newton)
        z = res.y
        steps += res.newton_steps
        s_now = float(np.max(cgp.constraint_values(z[:nv])))
        if s_now < 0.0:
            return z[:nv], s_now, steps
        if m / t < 0.1 * feas_tol or steps > 50 * max_newton:
            return z[:nv], s_now, steps
        # certified infeasible: the phase-I lower bound exceeds the tolerance
        if s_now - m / t > feas_tol and res.converged:
            return z[:nv], s_now - m / t, steps
        t *= 10.0


def solve(gp: GpProblem, feas_tol: float = 1e-8, opt_tol: float = 1e-8, *, max_newton: int = 200, max_stages: int = 40) -> GpSolution:
    """Solve a GP by phase I followed by log-barrier path following.

    The barrier weight grows tenfold per stage until the duality-gap bound
    ``m / t`` on the log objective drops below ``opt_tol`` (a relative bound
    on the objective itself).  Deterministic: no randomness anywhere.
    """
    cgp = to_convex(gp)
    nv = len(gp.variables)
    if nv == 0:
        raise GPError("problem has no variables")
    y0 = _start_point(cgp)
    y, s_star, steps = _phase_one(cgp, y0, feas_tol, max_newton)
    relax = 0.0
    if s_star >= 0.0:
        if s_star > math.log1p(feas_tol):
            return _make_solution(gp, cgp, y, "infeasible", math.nan, steps, s_star, math.nan)
        # feasible set without interior (within tolerance): widen by half the tolerance
        relax = min(math.log1p(feas_tol), s_star + 0.5 * math.log1p(feas_tol))
    m = max(cgp.ineq.m, 1)
    t = 1.0
    gap = math.inf
    kkt = math.nan
    status = "max-iterations"
    for _ in range(max_stages):
        res = _center(cgp.objective, cgp.ineq, cgp.A_eq, y, t, relax=relax, max_steps=max_newton)
        y = res.y
        steps += res.newton_steps
        gap = m / t
        if gap < opt_tol:
            kkt = max(_stationarity(cgp, y, t), gap)
            status = "optimal" if res.converged and kkt < 1e-6 else "max-iterations"
            break
        t *= 10.0
    sol = _make_solution(gp, cgp, y, status, kkt, steps, s_star, gap)
    return sol


def _stationarity(cgp: ConvexGP, y, t: float, active_tol: float = 1e-7) -> float:
    """Scaled Lagrangian gradient norm at ``y``.

    Barrier multipliers ``1 / (t * -F_i)`` are kept where ``F_i`` is well
    resolved; for rows within ``active_tol`` of zero they are dominated by
    rounding, so those are re-fitted by nonnegative least squares.
    """
    _, g0, _ = cgp.objective.derivatives(y)
    g0 = g0[0]
    f, G, _ = cgp.ineq.derivatives(y)
    near = f > -active_tol
    base = g0 + G[~near].T @ (1.0 / (t * -f[~near]))
    cols = [G[near].T]
    if cgp.A_eq.shape[0]:
        cols += [cgp.A_eq.T, -cgp.A_eq.T]
    M = np.hstack(cols)
    r = base
    if M.shape[1]:
        mu, _ = scipy.optimize.nnls(M, -base, maxiter=50 * M.shape[1])
        r = base + M @ mu
    return float(np.max(np.abs(r)) / (1.0 + np.max(np.abs(g0))))


def _make_solution(gp, cgp, y, status, kkt, steps, s_star, gap):
    values = {k: float(math.exp(v)) for k, v in zip(gp.variables, y)}
    fvals = cgp.constraint_values(y)
    viol = float(np.max(np.expm1(fvals))) if len(fvals) else -math.inf
    return GpSolution(
        values=values,
        objective_value=float(math.exp(cgp.objective_value(y))),
        status=status,
        kkt_residual=float(kkt),
        iterations=int(steps),
        phase1_value=float(s_star),
        duality_gap=float(gap),
        max_violation=viol,
    )


# ---------------------------------------------------------------- grid oracle


@dataclass
class OracleResult:
    feasible: bool
    values: dict | None
    objective_value: float
    points_evaluated: int


def _lattice(lo, hi, step):
    k = max(1, int(math.floor((hi - lo) / step + 1e-9)))
    return lo + step * np.arange(k + 1)


def grid_oracle(gp: GpProblem, boxes: dict | None = None, step: float = 1e-3, *, max_points: int = 4_000_000) -> OracleResult:
    """Brute-force search on a lattice in ``log x`` with spacing ``step``.

    When the full lattice would exceed ``max_points`` the search runs
    coarse-to-fine: exhaustive on a coarser lattice, then again on a window
    of two coarse cells around the best feasible point, shrinking the
    spacing until it reaches ``step``.  Every stage is plain enumeration.
    """
    if len(gp.variables) > 4:
        raise GPError("grid oracle supports at most 4 variables")
    boxes = dict(gp.bounds if boxes is None else boxes)
    names = gp.variables
    if set(boxes) != set(names):
        raise GPError("grid oracle needs a finite box for every variable")
    lo = np.array([math.log(boxes[k][0]) for k in names])
    hi = np.array([math.log(boxes[k][1]) for k in names])
    d = len(names)
    full_points = np.prod([len(_lattice(a, b, step)) for a, b in zip(lo, hi)])
    h = step
    if full_points > max_points:
        per_axis = max(3, int(max_points ** (1.0 / d)))
        h = max(step, float(np.max(hi - lo)) / (per_axis - 1))
    evaluated = 0
    best = None
    cur_lo, cur_hi = lo.copy(), hi.copy()
    while True:
        axes = [_lattice(a, b, h) for a, b in zip(cur_lo, cur_hi)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        evaluated += len(pts)
        obj, ok = _eval_lattice(gp, names, pts, h)
        if np.any(ok):
            k = int(np.argmin(np.where(ok, obj, np.inf)))
            if best is None or obj[k] <= best[1]:
                best = (pts[k].copy(), float(obj[k]))
        if h <= step * (1 + 1e-12):
            break
        if best is None:
            # nothing feasible on the coarse lattice; refine the whole box
            h = max(step, h / 4.0)
            if np.prod([len(_lattice(a, b, h)) for a, b in zip(cur_lo, cur_hi)]) > 8 * max_points:
                break
            continue
        centre = best[0]
        cur_lo = np.maximum(lo, centre - 2 * h)
        cur_hi = np.minimum(hi, centre + 2 * h)
        h = max(step, h / 8.0)
    if best is None:
        return OracleResult(False, None, math.inf, evaluated)
    return OracleResult(True, {k: float(math.exp(v)) for k, v in zip(names, best[0])}, best[1], evaluated)


def _eval_lattice(gp, names, pts, h):
    x = np.exp(pts)
    cols = {k: x[:, i] for i, k in enumerate(names)}

    def ev(p):
        total = np.zeros(len(pts))
        for t in _as_posynomial(p).terms:
            val = np.full(len(pts), t.coeff)
            for k, a in t.exponents.items():
                val = val * cols[k] ** a
            total += val
        return total

    ok = np.ones(len(pts), dtype=bool)
    for p in gp.ineq:
        ok &= ev(p) <= 1.0
    for m in gp.eq:
        width = 0.5 * h * sum(abs(a) for a in m.exponents.values())
        ok &= np.abs(np.log(ev(m))) <= width + 1e-12
    return ev(gp.objective), ok


# ---------------------------------------------------------------- JSON dump


def _mono_to_dict(m: Monomial) -> dict:
    return {"c": m.coeff, "a": {str(k): v for k, v in m.exponents.items()}}


def _mono_from_dict(d: dict) -> Monomial:
    return Monomial(d["c"], d.get("a", {}))


def problem_to_dict(gp: GpProblem) -> dict:
    return {
        "variables": [str(v) for v in gp.variables],
        "objective": [_mono_to_dict(t) for t in gp.objective.terms],
        "ineq": [[_mono_to_dict(t) for t in p.terms] for p in gp.ineq],
        "eq": [_mono_to_dict(m) for m in gp.eq],
        "bounds": {str(k): list(v) for k, v in gp.bounds.items()},
    }


def problem_from_dict(data: dict) -> GpProblem:
    try:
        return GpProblem(
            variables=tuple(data["variables"]),
            objective=Posynomial([_mono_from_dict(t) for t in data["objective"]]),
            ineq=tuple(Posynomial([_mono_from_dict(t) for t in p]) for p in data.get("ineq", [])),
            eq=tuple(_mono_from_dict(m) for m in data.get("eq", [])),
            bounds={k: tuple(v) for k, v in data.get("bounds", {}).items()},
        )
    except (KeyError, TypeError) as exc:
        raise GPError(f"malformed GP problem: {exc}") from None


def dump_problem(gp: GpProblem, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(problem_to_dict(gp), fh, indent=1)
        fh.write("\n")


def load_problem(path) -> GpProblem:
    with open(path, encoding="utf-8") as fh:
        return problem_from_dict(json.load(fh))


def solution_to_dict(sol: GpSolution) -> dict:
    def num(v):
        return None if not math.isfinite(v) else float(v)

    return {
        "status": sol.status,
        "objective_value": num(sol.objective_value),
        "values": {str(k): float(v) for k, v in sol.values.items()},
        "kkt_residual": num(sol.kkt_residual),
        "duality_gap": num(sol.duality_gap),
        "phase1_value": num(sol.phase1_value),
        "max_violation": num(sol.max_violation),
        "iterations": sol.iterations,
    }


def random_gp(rng: np.random.Generator, nvar: int | None = None) -> GpProblem:
    """Random small GP with boxes ``[0.1, 10]`` and a nonempty interior.

    Objective and constraints get 1-3 terms with exponents in ``[-2, 2]``;
    each constraint is scaled to equal 1/2 at a random interior point.
    """
    nvar = int(rng.integers(1, 4)) if nvar is None else nvar
    names = tuple(f"x{k}" for k in range(nvar))

    def posy(nterms):
        terms = []
        for _ in range(nterms):
            expo = {k: float(np.round(rng.uniform(-2, 2), 2)) for k in names if rng.random() < 0.8}
            terms.append(Monomial(float(np.round(rng.uniform(0.2, 3.0), 3)), expo))
        return Posynomial(terms)

    anchor = {k: float(np.exp(rng.uniform(np.log(0.2), np.log(5.0)))) for k in names}
    ineq = []
    for _ in range(int(rng.integers(1, 3))):
        p = posy(int(rng.integers(1, 4)))
        ineq.append(p * Monomial(0.5 / evaluate(p, anchor), {}))
    return GpProblem(names, posy(int(rng.integers(1, 4))), tuple(ineq), (), {k: (0.1, 10.0) for k in names})
