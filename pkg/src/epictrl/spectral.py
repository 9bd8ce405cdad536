"""Stability matrices, Metzler spectral abscissa and epidemic thresholds."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import BracketError, SpectralError
from .graph import StaticGraph, adjacency
from .temporal import (
    AmeiNet,
    AsisModel,
    EpidemicParams,
    MarkovTemporalNet,
    abar_matrix,
)

__all__ = [
    "MetzlerMatrix",
    "lambda_max",
    "lambda_max_dense",
    "build_static",
    "build_A1",
    "build_A2",
    "build_A3",
    "asis_q_index",
    "stability_matrix",
    "AmeiMargin",
    "ExtinctionReport",
    "kappa",
    "amei_margin",
    "amei_extinct",
    "threshold_beta",
    "model_threshold",
    "ThresholdCurve",
    "EpidemicThreshold",
]


class MetzlerMatrix(np.ndarray):
    """Square float array with nonnegative off-diagonal entries."""

    def __new__(cls, entries, *, atol: float = 0.0):
        arr = np.array(entries, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise SpectralError("Metzler matrix must be square")
        if arr.shape[0] == 0:
            raise SpectralError("Metzler matrix must have positive dimension")
        off = arr - np.diag(np.diag(arr))
        if np.any(off < -atol):
            raise SpectralError("off-diagonal entries must be nonnegative")
        return arr.view(cls)

    @property
    def dim(self) -> int:
        return self.shape[0]


_RATE_WINDOW = 25


def lambda_max_dense(m) -> float:
    """Largest real part of the spectrum via LAPACK (Hessenberg + shifted QR)."""
    a = np.asarray(m, dtype=float)
    if a.size == 0:
        raise SpectralError("empty matrix")
    return float(np.max(np.linalg.eigvals(a).real))


def lambda_max(m, tol: float = 1e-10, *, return_info: bool = False):
    """Spectral abscissa of a Metzler matrix.

    Power iteration on ``m + s I`` (``s = max|m_ii| + 1``) from the all-ones
    vector, stopped once the Collatz-Wielandt bounds
    ``min (Nx)_i/x_i <= rho <= max (Nx)_i/x_i`` are within ``tol``.  Falls
    back to the dense eigensolver after ``100 * dim`` iterations, when the
    iterate loses positivity (reducible input), or earlier when the measured
    contraction of the bounds says the dense solve is cheaper.
    """
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise SpectralError("lambda_max needs a non-empty square matrix")
    if not 0 < tol <= 1e-2:
        raise SpectralError("tol must lie in (0, 1e-2]")
    n = a.shape[0]
    shift = float(np.max(np.abs(np.diag(a)))) + 1.0
    nmat = a + shift * np.eye(n)
    x = np.ones(n)
    eps_floor = 64 * np.finfo(float).eps
    value, method, its = None, "power", 0
    width_mark = None
    for its in range(1, 100 * n + 1):
        y = nmat @ x
        if np.min(x) < 1e-250 or np.min(y) <= 0.0:
            break
        ratios = y / x
        lo, hi = float(ratios.min()), float(ratios.max())
        width = hi - lo
        goal = max(tol, eps_floor * hi)
        if width <= goal:
            value = 0.5 * (lo + hi) - shift
            break
        # bail out early when the observed contraction predicts more work
        # than a dense solve (about 10 n matrix-vector products)
        if its % _RATE_WINDOW == 0:
            if width_mark is not None and width_mark > 0 and width > 0:
                rate = (width / width_mark) ** (1.0 / _RATE_WINDOW)
                if rate >= 1.0 or math.log(goal / width) / math.log(rate) > max(10 * n, 200):
                    break
            width_mark = width
        x = y / np.max(y)
    if value is None:
        value, method = lambda_max_dense(a), "dense"
    if return_info:
        return value, {"method": method, "iterations": its}
    return value


# ---------------------------------------------------------------- matrices


def _check_dims(n: int, ep: EpidemicParams):
    if ep.n != n:
        raise SpectralError(f"epidemic parameters have {ep.n} nodes, network has {n}")


def build_static(g, ep: EpidemicParams) -> MetzlerMatrix:
    """``B A - D`` for a static graph (or an adjacency-like matrix)."""
    a = adjacency(g) if isinstance(g, StaticGraph) else np.asarray(g, dtype=float)
    _check_dims(a.shape[0], ep)
    return MetzlerMatrix(ep.beta[:, None] * a - np.diag(ep.delta))


def build_A1(net: MarkovTemporalNet, ep: EpidemicParams) -> MetzlerMatrix:
    """Block matrix of the switched linear upper bound, dimension ``n L``.

    Block row ``l`` holds configuration ``l``; the off-diagonal block in
    row ``l``, column ``k`` is ``rates[k, l] * I``.
    """
    n, L = net.n, net.L
    _check_dims(n, ep)
    out = np.kron(net.rates.T, np.eye(n))
    for l, g in enumerate(net.configs):
        sl = slice(l * n, (l + 1) * n)
        out[sl, sl] += ep.beta[:, None] * adjacency(g) - np.diag(ep.delta)
    return MetzlerMatrix(out)


def build_A2(net: AmeiNet, ep: EpidemicParams, abar=None) -> MetzlerMatrix:
    abar = abar_matrix(net) if abar is None else abar
    _check_dims(net.n, ep)
    return MetzlerMatrix(ep.beta[:, None] * abar - np.diag(ep.delta))


def asis_q_index(g0: StaticGraph) -> dict:
    """Position of each ordered pair ``(i, j)`` among the edge moments.

    Ordering is by ``i`` ascending, then neighbour ``j`` ascending; indices
    are offset by ``n`` (the node block comes first).
    """
    idx = {}
    k = g0.n
    for i in range(g0.n):
        for j in g0.neighbors(i):
            idx[(i, j)] = k
            k += 1
    return idx


def build_A3(m: AsisModel, ep: EpidemicParams) -> MetzlerMatrix:
    """Closed moment matrix of the adaptive SIS model, size ``n + sum(deg)``."""
    g0 = m.g0
    n = g0.n
    _check_dims(n, ep)
    qidx = asis_q_index(g0)
    dim = n + len(qidx)
    out = np.zeros((dim, dim))
    nbrs = [g0.neighbors(i) for i in range(n)]
    for i in range(n):
        out[i, i] = -ep.delta[i]
        for k in nbrs[i]:
            out[i, qidx[(k, i)]] += ep.beta[i]
    for (i, j), r in qidx.items():
        psi = m.psi[(min(i, j), max(i, j))]
        out[r, i] += psi
        for k in nbrs[i]:
            out[r, qidx[(k, i)]] += ep.beta[i]
        out[r, r] -= ep.delta[i] + m.phi[i] + psi
    return MetzlerMatrix(out)


def stability_matrix(model, ep: EpidemicParams) -> MetzlerMatrix:
    """Dispatch to the matrix matching the model type."""
    if isinstance(model, StaticGraph):
        return build_static(model, ep)
    if isinstance(model, MarkovTemporalNet):
        return build_A1(model, ep)
    if isinstance(model, AmeiNet):
        return build_A2(model, ep)
    if isinstance(model, AsisModel):
        return build_A3(model, ep)
    raise SpectralError(f"unsupported model type {type(model).__name__}")


# ---------------------------------------------------------------- AMEI margin


def _log_kappa(s, n, b, d):
    s = np.asarray(s, dtype=float)
    return math.log(n) + s / b - ((b * s + d) / b**2) * np.log1p(b * s / d)


def kappa(s, n: int, b: float, d: float):
    """``n exp(s/b) ((bs+d)/d)^(-(bs+d)/b^2)``, evaluated in log space."""
    if b <= 0 or d <= 0:
        raise SpectralError("kappa needs b > 0 and d > 0")
    return np.exp(_log_kappa(s, n, b, d))


def _kappa_inverse_one(n, b, d) -> float:
    if n == 1:
        return 0.0
    lo, hi = 0.0, 1.0
    while _log_kappa(hi, n, b, d) >= 0.0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise SpectralError("could not bracket kappa^-1(1)")
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _log_kappa(mid, n, b, d) >= 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class AmeiMargin:
    """Quantities entering the AMEI extinction test.

    ``flag`` is ``None`` for the regular case, ``"deterministic-edge limit"``
    when every stationary activation is 0 or 1, ``"no margin available"``
    when the maximisation interval is empty and ``"unbounded"`` when the
    sign-pattern matrix is already stable (the margin is then infinite).
    """

    b: float
    d: float
    c: float
    kappa_inv_1: float
    tau: float
    lambda_sign: float
    s_upper: float = float("nan")
    s_star: float = float("nan")
    flag: str | None = None


@dataclass(frozen=True)
class ExtinctionReport:
    extinct: bool
    lambda_max: float
    tau: float
    margin: AmeiMargin

    def __bool__(self) -> bool:
        return self.extinct


def _golden_max(f, a, b, width):
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while b - a > width:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def amei_margin(
    net: AmeiNet,
    ep: EpidemicParams,
    *,
    grid: int = 1024,
    width: float = 1e-10,
    lam_tol: float = 1e-12,
    abar=None,
) -> AmeiMargin:
    """Safety margin ``tau`` for the AMEI extinction test.

    ``b`` is the largest infection rate and ``d`` the largest weighted
    activation variance ``max_i sum_j beta_i beta_j abar_ij (1 - abar_ij)``.
    """
    abar = abar_matrix(net) if abar is None else abar
    _check_dims(net.n, ep)
    n = net.n
    b = float(np.max(ep.beta))
    if b <= 0:
        raise SpectralError("amei_margin needs max(beta) > 0")
    var = np.outer(ep.beta, ep.beta) * abar * (1.0 - abar)
    d = float(np.max(var.sum(axis=1)))
    sgn = (abar > 0).astype(float)
    lam_sign = lambda_max(ep.beta[:, None] * sgn - np.diag(ep.delta), lam_tol)
    if d <= 0.0:
        return AmeiMargin(b, 0.0, float("nan"), 0.0, 0.0, lam_sign, flag="deterministic-edge limit")
    kinv = _kappa_inverse_one(n, b, d)
    c = lam_sign - kinv
    upper = float(np.min(ep.delta)) + (abs(c) - c) / 2.0
    if upper <= kinv:
        return AmeiMargin(b, d, c, kinv, float("-inf"), lam_sign, upper, flag="no margin available")
    if lam_sign < 0:
        return AmeiMargin(b, d, c, kinv, float("inf"), lam_sign, upper, flag="unbounded")

    def objective(s):
        k = kappa(s, n, b, d)
        return -(s + c * k) / (1.0 - k)

    s_grid = kinv + (upper - kinv) * np.arange(1, grid + 1) / grid
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.array([objective(s) for s in s_grid])
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    k = int(np.argmax(vals))
    a_lo = s_grid[k - 1] if k > 0 else kinv + 0.5 * (s_grid[0] - kinv)
    a_hi = s_grid[min(k + 1, grid - 1)]
    s_best, v_best = s_grid[k], vals[k]
    if a_hi > a_lo:
        s_ref, v_ref = _golden_max(objective, a_lo, a_hi, width)
        if np.isfinite(v_ref) and v_ref > v_best:
            s_best, v_best = s_ref, v_ref
    return AmeiMargin(b, d, c, kinv, float(v_best), lam_sign, upper, float(s_best))


def amei_extinct(net: AmeiNet, ep: EpidemicParams, tol: float = 1e-10) -> ExtinctionReport:
    """Check ``lambda_max(B abar - D) < tau`` and report both sides."""
    margin = amei_margin(net, ep) if np.max(ep.beta) > 0 else None
    lam = lambda_max(build_A2(net, ep), tol)
    if margin is None:
        margin = AmeiMargin(0.0, 0.0, float("nan"), 0.0, 0.0, lam, flag="deterministic-edge limit")
    tau = margin.tau
    return ExtinctionReport(bool(lam < tau), lam, tau, margin)


# ---------------------------------------------------------------- thresholds


def threshold_beta(evaluator: Callable[[float], float], target: float = 0.0, lo: float = 0.0, hi: float = 1.0, tol: float = 1e-10) -> float:
    """Bisection for the crossing ``evaluator(beta) = target``.

    ``evaluator`` must be nondecreasing with ``evaluator(lo) < target <=
    evaluator(hi)``.
    """
    f_lo, f_hi = evaluator(lo) - target, evaluator(hi) - target
    if not (f_lo < 0 <= f_hi):
        raise BracketError(
            f"no sign change on [{lo}, {hi}]: f(lo)-target={f_lo:.6g}, f(hi)-target={f_hi:.6g}",
            f_lo,
            f_hi,
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if evaluator(mid) - target < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _evaluator(model, delta, lam_tol):
    """``beta -> lambda-value`` for homogeneous rates, and its target."""
    n = model.n
    if isinstance(model, AmeiNet):
        abar = abar_matrix(model)

        def f(beta):
            ep = EpidemicParams.homogeneous(n, beta, delta)
            lam = lambda_max(build_A2(model, ep, abar), lam_tol)
            margin = amei_margin(model, ep, abar=abar) if beta > 0 else None
            if margin is None or margin.flag == "deterministic-edge limit":
                return lam
            return lam - margin.tau

        return f

    def f(beta):
        ep = EpidemicParams.homogeneous(n, beta, delta)
        return lambda_max(stability_matrix(model, ep), lam_tol)

    return f


def model_threshold(model, delta: float, *, tol: float = 1e-10, lam_tol: float = 1e-12, hi: float | None = None, beta_max: float = 1e6) -> float:
    """Homogeneous infection-rate threshold of ``model`` at recovery rate ``delta``."""
    f = _evaluator(model, delta, lam_tol)
    lo = 0.0 if not isinstance(model, AmeiNet) else 1e-12
    hi = delta if hi is None else hi
    while f(hi) < 0:
        lo, hi = hi, 2.0 * hi
        if hi > beta_max:
            raise BracketError(f"no threshold below beta={beta_max}")
    return threshold_beta(f, 0.0, lo, hi, tol)


@dataclass(frozen=True)
class ThresholdCurve:
    points: tuple

    def __post_init__(self):
        ds = [p[0] for p in self.points]
        if any(b <= a for a, b in zip(ds, ds[1:])):
            raise SpectralError("delta values must be strictly increasing")

    @property
    def deltas(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def betas(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])


class EpidemicThreshold(BaseEstimator):
    """Threshold curve ``beta_c(delta)`` for any supported network model.

    ``fit(model)`` evaluates every recovery rate in ``deltas`` and stores the
    result in ``curve_``; failed brackets become NaN with a warning.
    """

    def __init__(self, deltas=(1.0,), tol: float = 1e-10, lam_tol: float = 1e-12):
        self.deltas = deltas
        self.tol = tol
        self.lam_tol = lam_tol

    def fit(self, model, y=None):
        deltas = np.atleast_1d(np.asarray(self.deltas, dtype=float))
        if np.any(deltas <= 0):
            raise SpectralError("recovery rates must be positive")
        betas = []
        for d in deltas:
            try:
                betas.append(model_threshold(model, float(d), tol=self.tol, lam_tol=self.lam_tol))
            except BracketError as exc:
                warnings.warn(f"delta={d}: {exc}", RuntimeWarning, stacklevel=2)
                betas.append(float("nan"))
        self.beta_c_ = np.array(betas)
        self.curve_ = ThresholdCurve(tuple(zip(deltas.tolist(), self.beta_c_.tolist())))
        return self

    def predict(self, deltas=None) -> np.ndarray:
        """Thresholds at the fitted recovery rates (``deltas`` must match them)."""
        from sklearn.utils.validation import check_is_fitted

        check_is_fitted(self, "beta_c_")
        if deltas is not None and not np.allclose(np.atleast_1d(deltas), self.curve_.deltas):
            raise ValueError("predict only reports the fitted recovery rates; refit for new ones")
        return self.beta_c_
