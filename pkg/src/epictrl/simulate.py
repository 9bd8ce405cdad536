"""Exact stochastic simulation, master-equation oracle and mean-field ODE.

The Gillespie kernels recompute every rate after each event and draw
from the bundled SplitMix64 generator, so a given seed reproduces the
same event sequence on any platform.

Master-equation state layout: node ``i`` is bit ``i`` of the low word,
the network state (configuration index, or edge bits for the adaptive
model) occupies the high bits.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numba import njit
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import ModelError, SizeCapError
from .rng import next_double, stream_key
from .temporal import (
    AmeiNet,
    AsisModel,
    EpidemicParams,
    MarkovTemporalNet,
    _reachability,
    amei_to_markov,
    stationary_distribution,
)

__all__ = [
    "SimConfig",
    "Trajectory",
    "MetastableEstimate",
    "BatchResult",
    "Simulator",
    "gillespie_markov",
    "gillespie_amei",
    "gillespie_asis",
    "simulate_batch",
    "master_equation_marginals",
    "mean_field_ode",
    "metastable_count",
    "MetastableEstimator",
    "EVENT_KINDS",
]

EVENT_KINDS = ("recover", "infect", "switch", "pair", "cut", "reconnect")
RECOVER, INFECT, SWITCH, PAIR, CUT, RECONNECT = range(6)
MASTER_CAP = 4096
# sampled states (runs x grid points x nodes, one byte each) and event log length
STATE_CAP = 2**28
EVENT_CAP_MAX = 10**8


@dataclass(frozen=True)
class SimConfig:
    """Run settings.  ``net0`` is a configuration index (Markov), a sequence of
    0-based pair states (AMEI, in pair order) or a collection of active
    initial-graph edges (adaptive); ``None`` draws it from the stationary
    law, or starts from the full initial graph for the adaptive model."""

    horizon: float
    seed: int
    x0: tuple
    net0: object = None

    def __post_init__(self):
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ModelError("horizon must be finite and positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ModelError("seed must fit in 64 unsigned bits")
        x0 = tuple(int(v) for v in self.x0)
        if any(v not in (0, 1) for v in x0):
            raise ModelError("x0 entries must be 0 or 1")
        object.__setattr__(self, "x0", x0)


@dataclass
class Trajectory:
    events: list
    t_grid: np.ndarray
    states: np.ndarray
    truncated: bool = False

    @property
    def prevalence(self) -> np.ndarray:
        return self.states.sum(axis=1)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time", "prevalence"])
            for t, y in zip(self.t_grid, self.prevalence):
                w.writerow([f"{t:.17g}", int(y)])

    def write_events(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for t, kind, payload in self.events:
                fh.write(json.dumps({"time": t, "kind": kind, "payload": list(payload)}) + "\n")


@dataclass(frozen=True)
class MetastableEstimate:
    y_star: float
    stderr: float
    survived_fraction: float
    runs: int


@dataclass
class BatchResult:
    """Per-run samples: ``states`` (runs, len(t_grid), n), time integral of
    prevalence over ``[window_start, horizon]`` and survival at window start."""

    t_grid: np.ndarray
    states: np.ndarray
    integral: np.ndarray
    alive: np.ndarray
    window_start: float
    horizon: float
    events: np.ndarray = field(default=None, repr=False)


# ---------------------------------------------------------------- kernels


@njit(cache=True)
def _exp_draw(st, rate):
    return -math.log(1.0 - next_double(st)) / rate


@njit(cache=True)
def _pick(st, rates, total):
    u = next_double(st) * total
    acc = 0.0
    last = -1
    for k in range(rates.shape[0]):
        if rates[k] > 0.0:
            acc += rates[k]
            last = k
            if u < acc:
                return k
    return last


@njit(cache=True)
def _record(ev_t, ev_k, ev_a, ev_b, count, t, kind, a, b):
    if count < ev_t.shape[0]:
        ev_t[count] = t
        ev_k[count] = kind
        ev_a[count] = a
        ev_b[count] = b
    return count + 1


@njit(cache=True)
def _advance(x, t, t_next, horizon, t_grid, gi, out, w0, integ):
    """Fill grid samples in ``[t, t_next)`` and add to the window integral."""
    stop = min(t_next, horizon)
    fill = t_next if t_next < horizon else np.inf
    while gi < t_grid.shape[0] and t_grid[gi] < fill:
        out[gi, :] = x
        gi += 1
    lo = max(t, w0)
    if stop > lo:
        integ += x.sum() * (stop - lo)
    return gi, integ


@njit(cache=True)
def _markov_run(st, x, l, beta, delta, ptr, ei, ej, pi, horizon, t_grid, out, w0, ev_t, ev_k, ev_a, ev_b):
    n = x.shape[0]
    L = pi.shape[0]
    rates = np.empty(n + L)
    cnt = np.empty(n)
    t = 0.0
    gi = 0
    integ = 0.0
    alive = x.sum() > 0 if w0 <= 0.0 else False
    nev = 0
    while True:
        cnt[:] = 0.0
        for e in range(ptr[l], ptr[l + 1]):
            a, b = ei[e], ej[e]
            cnt[a] += x[b]
            cnt[b] += x[a]
        for i in range(n):
            rates[i] = delta[i] if x[i] else beta[i] * cnt[i]
        for k in range(L):
            rates[n + k] = pi[l, k] if k != l else 0.0
        total = rates.sum()
        t_next = t + _exp_draw(st, total) if total > 0.0 else np.inf
        if t < w0 <= t_next:
            alive = x.sum() > 0
        gi, integ = _advance(x, t, t_next, horizon, t_grid, gi, out, w0, integ)
        if t_next >= horizon:
            break
        t = t_next
        k = _pick(st, rates, total)
        if k < n:
            x[k] = 1 - x[k]
            nev = _record(ev_t, ev_k, ev_a, ev_b, nev, t, INFECT if x[k] else RECOVER, k, -1)
        else:
            l = k - n
            nev = _record(ev_t, ev_k, ev_a, ev_b, nev, t, SWITCH, l, -1)
    return integ, alive, nev


@njit(cache=True)
def _markov_batch(seed, run0, x0, init, beta, delta, ptr, ei, ej, pi, horizon, t_grid, w0, out, integ, alive, ev_t, ev_k, ev_a, ev_b):
    R = out.shape[0]
    st = np.empty(1, np.uint64)
    nev = 0
    for r in range(R):
        st[0] = stream_key(seed, np.uint64(run0 + r))
        l = _pick(st, init, init.sum())
        x = x0.copy()
        integ[r], alive[r], nev = _markov_run(st, x, l, beta, delta, ptr, ei, ej, pi, horizon, t_grid, out[r], w0, ev_t, ev_k, ev_a, ev_b)
    return nev


@njit(cache=True)
def _amei_run(st, x, h, beta, delta, pa, pb, Q, act, horizon, t_grid, out, w0, ev_t, ev_k, ev_a, ev_b):
    n = x.shape[0]
    P = pa.shape[0]
    M = Q.shape[1]
    rates = np.empty(n + P)
    cnt = np.empty(n)
    t = 0.0
    gi = 0
    integ = 0.0
    alive = x.sum() > 0 if w0 <= 0.0 else False
    nev = 0
    row = np.empty(M)
    while True:
        cnt[:] = 0.0
        for p in range(P):
            if act[p, h[p]]:
                cnt[pa[p]] += x[pb[p]]
                cnt[pb[p]] += x[pa[p]]
        for i in range(n):
            rates[i] = delta[i] if x[i] else beta[i] * cnt[i]
        for p in range(P):
            rates[n + p] = -Q[p, h[p], h[p]]
        total = rates.sum()
        t_next = t + _exp_draw(st, total) if total > 0.0 else np.inf
        if t < w0 <= t_next:
            alive = x.sum() > 0
        gi, integ = _advance(x, t, t_next, horizon, t_grid, gi, out, w0, integ)
        if t_next >= horizon:
            break
        t = t_next
        k = _pick(st, rates, total)
        if k < n:
            x[k] = 1 - x[k]
            nev = _record(ev_t, ev_k, ev_a, ev_b, nev, t, INFECT if x[k] else RECOVER, k, -1)
        else:
            p = k - n
            for s in range(M):
                row[s] = Q[p, h[p], s] if s != h[p] else 0.0
            h[p] = _pick(st, row, row.sum())
            nev = _record(ev_t, ev_k, ev_a, ev_b, nev, t, PAIR, p, h[p])
    return integ, alive, nev


@njit(cache=True)
def _amei_batch(seed, run0, x0, init, beta, delta, pa, pb, Q, act, horizon, t_grid, w0, out, integ, alive, ev_t, ev_k, ev_a, ev_b):
    R = out.shape[0]
    P = pa.shape[0]
    st = np.empty(1, np.uint64)
    nev = 0
    for r in range(R):
        st[0] = stream_key(seed, np.uint64(run0 + r))
        h = np.empty(P, np.int64)
        for p in range(P):
            h[p] = _pick(st, init[p], init[p].sum())
        x = x0.copy()
        integ[r], alive[r], nev = _amei_run(st, x, h, beta, delta, pa, pb, Q, act, horizon, t_grid, out[r], w0, ev_t, ev_k, ev_a, ev_b)
    return nev


@njit(cache=True)
def _asis_run(st, x, on, beta, delta, phi, ea, eb, psi, horizon, t_grid, out, w0, ev_t, ev_k, ev_a, ev_b):
    n = x.shape[0]
    E = ea.shape[0]
    rates = np.empty(n + E)
    cnt = np.empty(n)
    t = 0.0
    gi = 0
    integ = 0.0
    alive = x.sum() > 0 if w0 <= 0.0 else False
    nev = 0
    while True:
        cnt[:] = 0.0
        for e in range(E):
            a, b = ea[e], eb[e]
            if on[e]:
                cnt[a] += x[b]
                cnt[b] += x[a]
                rates[n + e] = phi[a] * x[a] + phi[b] * x[b]
            else:
                rates[n + e] = psi[e]
        for i in range(n):
            rates[i] = delta[i] if x[i] else beta[i] * cnt[i]
        total = rates.sum()
        t_next = t + _exp_draw(st, total) if total > 0.0 else np.inf
        if t < w0 <= t_next:
            alive = x.sum() > 0
        gi, integ = _advance(x, t, t_next, horizon, t_grid, gi, out, w0, integ)
        if t_next >= horizon:
            break
        t = t_next
        k = _pick(st, rates, total)
        if k < n:
            x[k] = 1 - x[k]
            nev = _record(ev_t, ev_k, ev_a, ev_b, nev, t, INFECT if x[k] else RECOVER, k, -1)
        else:
            e = k - n
            on[e] = 1 - on[e]
            nev = _record(ev_t, ev_k, ev_a, ev_b, nev, t, RECONNECT if on[e] else CUT, ea[e], eb[e])
    return integ, alive, nev


@njit(cache=True)
def _asis_batch(seed, run0, x0, on0, beta, delta, phi, ea, eb, psi, horizon, t_grid, w0, out, integ, alive, ev_t, ev_k, ev_a, ev_b):
    R = out.shape[0]
    st = np.empty(1, np.uint64)
    nev = 0
    for r in range(R):
        st[0] = stream_key(seed, np.uint64(run0 + r))
        x = x0.copy()
        on = on0.copy()
        integ[r], alive[r], nev = _asis_run(st, x, on, beta, delta, phi, ea, eb, psi, horizon, t_grid, out[r], w0, ev_t, ev_k, ev_a, ev_b)
    return nev


# ---------------------------------------------------------------- python layer


def _check_inputs(model, ep: EpidemicParams, cfg: SimConfig):
    if ep.n != model.n:
        raise ModelError(f"rate vectors have length {ep.n}, model has {model.n} nodes")
    if len(cfg.x0) != model.n:
        raise ModelError(f"x0 has length {len(cfg.x0)}, model has {model.n} nodes")


def _markov_args(net: MarkovTemporalNet, cfg: SimConfig):
    ptr = [0]
    ei, ej = [], []
    for g in net.configs:
        for a, b in g.sorted_edges():
            ei.append(a)
            ej.append(b)
        ptr.append(len(ei))
    if cfg.net0 is None:
        init = stationary_distribution(net.rates)
    else:
        l0 = int(cfg.net0)
        if not 0 <= l0 < net.L:
            raise ModelError(f"initial configuration {l0} out of range")
        init = np.zeros(net.L)
        init[l0] = 1.0
    return (init, np.array(ptr, np.int64), np.array(ei, np.int64), np.array(ej, np.int64), np.ascontiguousarray(net.rates))


def _amei_args(net: AmeiNet, cfg: SimConfig):
    pairs = net.pairs()
    procs = list(net.processes.values())
    if cfg.net0 is None:
        inits = [stationary_distribution(p.generator) for p in procs]
    else:
        states = list(cfg.net0)
        if len(states) != len(pairs):
            raise ModelError(f"need {len(pairs)} initial pair states, got {len(states)}")
        inits = []
        for s, p in zip(states, procs):
            if not 0 <= int(s) < p.M:
                raise ModelError(f"pair state {s} out of range")
            v = np.zeros(p.M)
            v[int(s)] = 1.0
            inits.append(v)
    # drop pairs that can never carry an edge from any state they may start in
    keep = []
    for k, (p, v) in enumerate(zip(procs, inits)):
        reach = _reachability(p.generator)
        start = np.flatnonzero(v > 0)
        if p.active and reach[np.ix_(start, sorted(p.active))].any():
            keep.append(k)
    M = max((procs[k].M for k in keep), default=1)
    P = len(keep)
    Q = np.zeros((P, M, M))
    act = np.zeros((P, M), np.uint8)
    init = np.zeros((P, M))
    pa = np.empty(P, np.int64)
    pb = np.empty(P, np.int64)
    for r, k in enumerate(keep):
        p = procs[k]
        Q[r, : p.M, : p.M] = p.generator
        act[r, sorted(p.active)] = 1
        init[r, : p.M] = inits[k]
        pa[r], pb[r] = pairs[k]
    return init, pa, pb, Q, act, keep


def _asis_args(m: AsisModel, cfg: SimConfig):
    edges = m.g0.sorted_edges()
    if cfg.net0 is None:
        on = np.ones(len(edges), np.int64)
    else:
        active = {(min(a, b), max(a, b)) for a, b in cfg.net0}
        if not active <= set(edges):
            raise ModelError("initial edge set must be a subset of the initial graph")
        on = np.array([e in active for e in edges], np.int64)
    ea = np.array([a for a, _ in edges], np.int64)
    eb = np.array([b for _, b in edges], np.int64)
    psi = np.array([m.psi[e] for e in edges])
    return on, ea, eb, psi, edges


def simulate_batch(model, ep: EpidemicParams, cfg: SimConfig, runs: int, t_grid=None, *, window_start: float = 0.0, run_offset: int = 0, event_cap: int = 0) -> BatchResult:
    """Run ``runs`` independent trajectories; run ``r`` uses substream ``seed ^ (run_offset + r)``."""
    _check_inputs(model, ep, cfg)
    if runs < 1:
        raise ModelError("runs must be positive")
    t_grid = np.asarray([] if t_grid is None else t_grid, dtype=float)
    if np.any(np.diff(t_grid) <= 0) or np.any(t_grid < 0) or np.any(t_grid > cfg.horizon):
        raise ModelError("t_grid must be increasing and inside [0, horizon]")
    n = model.n
    if runs * t_grid.size * n > STATE_CAP:
        raise SizeCapError(f"{runs} runs x {t_grid.size} grid points x {n} nodes exceeds the {STATE_CAP}-sample cap")
    if not 0 <= event_cap <= EVENT_CAP_MAX:
        raise SizeCapError(f"event cap must lie in [0, {EVENT_CAP_MAX}]")
    out = np.zeros((runs, t_grid.size, n), np.int8)
    integ = np.zeros(runs)
    alive = np.zeros(runs, np.bool_)
    ev_t = np.zeros(event_cap)
    ev_k = np.zeros(event_cap, np.int64)
    ev_a = np.zeros(event_cap, np.int64)
    ev_b = np.zeros(event_cap, np.int64)
    x0 = np.array(cfg.x0, np.int8)
    beta = np.ascontiguousarray(ep.beta)
    delta = np.ascontiguousarray(ep.delta)
    seed = np.uint64(cfg.seed)
    common = (cfg.horizon, t_grid, float(window_start), out, integ, alive, ev_t, ev_k, ev_a, ev_b)
    extra = None
    if isinstance(model, MarkovTemporalNet):
        init, ptr, ei, ej, pi = _markov_args(model, cfg)
        nev = _markov_batch(seed, run_offset, x0, init, beta, delta, ptr, ei, ej, pi, *common)
    elif isinstance(model, AmeiNet):
        init, pa, pb, Q, act, keep = _amei_args(model, cfg)
        extra = keep
        nev = _amei_batch(seed, run_offset, x0, init, beta, delta, pa, pb, Q, act, *common)
    elif isinstance(model, AsisModel):
        on, ea, eb, psi, _ = _asis_args(model, cfg)
        nev = _asis_batch(seed, run_offset, x0, on, beta, delta, np.ascontiguousarray(model.phi), ea, eb, psi, *common)
    else:
        raise ModelError(f"cannot simulate {type(model).__name__}")
    res = BatchResult(t_grid, out, integ, alive, float(window_start), float(cfg.horizon))
    if event_cap:
        k = min(nev, event_cap)
        res.events = (ev_t[:k], ev_k[:k], ev_a[:k], ev_b[:k], nev > event_cap, extra)
    return res


def _single(model, ep, cfg, t_grid, event_cap) -> Trajectory:
    if t_grid is None:
        t_grid = np.linspace(0.0, cfg.horizon, 101)
    res = simulate_batch(model, ep, cfg, 1, t_grid, event_cap=event_cap)
    events = []
    if event_cap:
        ts, ks, a, b, truncated, keep = res.events
        pairs = model.pairs() if isinstance(model, AmeiNet) else None
        for t, k, u, v in zip(ts, ks, a, b):
            kind = EVENT_KINDS[k]
            if k in (RECOVER, INFECT, SWITCH):
                payload = (int(u),)
            elif k == PAIR:
                payload = (*pairs[keep[u]], int(v))
            else:
                payload = (int(u), int(v))
            events.append((float(t), kind, payload))
    else:
        truncated = False
    return Trajectory(events, res.t_grid, res.states[0], bool(truncated))


def gillespie_markov(net: MarkovTemporalNet, ep: EpidemicParams, cfg: SimConfig, t_grid=None, *, event_cap: int = 100_000) -> Trajectory:
    """One exact sample path of the node/configuration chain."""
    if not isinstance(net, MarkovTemporalNet):
        raise ModelError("gillespie_markov needs a MarkovTemporalNet")
    return _single(net, ep, cfg, t_grid, event_cap)


def gillespie_amei(net: AmeiNet, ep: EpidemicParams, cfg: SimConfig, t_grid=None, *, event_cap: int = 100_000) -> Trajectory:
    """One exact sample path with independent pair processes.

    Pair events carry ``(i, j, new_state)``.
    """
    if not isinstance(net, AmeiNet):
        raise ModelError("gillespie_amei needs an AmeiNet")
    return _single(net, ep, cfg, t_grid, event_cap)


def gillespie_asis(m: AsisModel, ep: EpidemicParams, cfg: SimConfig, t_grid=None, *, event_cap: int = 100_000) -> Trajectory:
    """One exact sample path of the adaptive model (cuts and reconnections)."""
    if not isinstance(m, AsisModel):
        raise ModelError("gillespie_asis needs an AsisModel")
    return _single(m, ep, cfg, t_grid, event_cap)


class Simulator:
    """Model, rates and run settings bundled for repeated batches."""

    def __init__(self, model, ep: EpidemicParams, cfg: SimConfig):
        _check_inputs(model, ep, cfg)
        self.model, self.ep, self.cfg = model, ep, cfg

    def run(self, runs: int, t_grid=None, *, window_start: float = 0.0, run_offset: int = 0) -> BatchResult:
        return simulate_batch(self.model, self.ep, self.cfg, runs, t_grid, window_start=window_start, run_offset=run_offset)


def metastable_count(simulator: Simulator, runs: int = 500, burn_in_fraction: float = 0.5, window: float | None = None, *, min_survival: float = 0.05) -> MetastableEstimate:
    """Survival-conditioned time-averaged prevalence.

    Each run is averaged over ``[w0, horizon]`` with ``w0`` the burn-in point
    (or ``horizon - window``); only runs still infected at ``w0`` count.  If
    fewer than ``min_survival`` of the runs survive, ``y*`` is reported as 0.
    """
    if runs < 100:
        raise ModelError("metastable estimates need at least 100 runs")
    if not 0.0 <= burn_in_fraction < 1.0:
        raise ModelError("burn_in_fraction must lie in [0, 1)")
    T = simulator.cfg.horizon
    w0 = T * burn_in_fraction if window is None else T - float(window)
    if not 0.0 <= w0 < T:
        raise ModelError("window must be positive and no longer than the horizon")
    res = simulator.run(runs, window_start=w0)
    surv = res.alive
    frac = float(surv.mean())
    if frac < min_survival or surv.sum() < 2:
        return MetastableEstimate(0.0, 0.0, frac, runs)
    avg = res.integral[surv] / (T - w0)
    return MetastableEstimate(float(avg.mean()), float(avg.std(ddof=1) / math.sqrt(avg.size)), frac, runs)


class MetastableEstimator(BaseEstimator):
    """Estimator form of :func:`metastable_count`; ``fit(model, ep)`` sets ``y_star_``."""

    def __init__(self, runs=500, horizon=50.0, burn_in_fraction=0.5, seed=0, x0=None):
        self.runs = runs
        self.horizon = horizon
        self.burn_in_fraction = burn_in_fraction
        self.seed = seed
        self.x0 = x0

    def fit(self, model, ep: EpidemicParams):
        x0 = (1,) * model.n if self.x0 is None else tuple(self.x0)
        cfg = SimConfig(float(self.horizon), int(self.seed), x0)
        est = metastable_count(Simulator(model, ep, cfg), int(self.runs), float(self.burn_in_fraction))
        self.estimate_ = est
        self.y_star_ = est.y_star
        self.stderr_ = est.stderr
        self.survived_fraction_ = est.survived_fraction
        return self

    def predict(self, X=None) -> float:
        check_is_fitted(self, "estimate_")
        return self.y_star_


# ---------------------------------------------------------------- exact oracle


def _node_part(n, beta, delta, net_states, adj_of):
    """Transitions that flip one node bit, for every network state ``c``."""
    rows, cols, vals = [], [], []
    N = 1 << n
    xs = np.arange(N)
    bits = (xs[:, None] >> np.arange(n)) & 1
    for c, adj in enumerate(adj_of):
        base = c * N
        pressure = bits @ adj  # infected neighbours per node
        for i in range(n):
            inf = bits[:, i] == 1
            rate = np.where(inf, delta[i], beta[i] * pressure[:, i])
            ok = rate > 0
            rows.append(base + xs[ok])
            cols.append(base + (xs[ok] ^ (1 << i)))
            vals.append(rate[ok])
    return rows, cols, vals


def _generator_markov(net: MarkovTemporalNet, ep):
    n, L = net.n, net.L
    N = 1 << n
    adj_of = []
    for g in net.configs:
        a = np.zeros((n, n))
        for i, j in g.edges:
            a[i, j] = a[j, i] = 1.0
        adj_of.append(a)
    rows, cols, vals = _node_part(n, ep.beta, ep.delta, range(L), adj_of)
    xs = np.arange(N)
    for k in range(L):
        for l in range(L):
            if k != l and net.rates[k, l] > 0:
                rows.append(k * N + xs)
                cols.append(l * N + xs)
                vals.append(np.full(N, net.rates[k, l]))
    return _assemble(rows, cols, vals, N * L)


def _generator_asis(m: AsisModel, ep):
    n = m.n
    edges = m.g0.sorted_edges()
    E = len(edges)
    N = 1 << n
    adj_of = []
    for c in range(1 << E):
        a = np.zeros((n, n))
        for e, (i, j) in enumerate(edges):
            if c >> e & 1:
                a[i, j] = a[j, i] = 1.0
        adj_of.append(a)
    rows, cols, vals = _node_part(n, ep.beta, ep.delta, range(1 << E), adj_of)
    xs = np.arange(N)
    bits = (xs[:, None] >> np.arange(n)) & 1
    for c in range(1 << E):
        for e, (i, j) in enumerate(edges):
            if c >> e & 1:
                rate = m.phi[i] * bits[:, i] + m.phi[j] * bits[:, j]
            else:
                rate = np.full(N, m.psi[(i, j)])
            ok = rate > 0
            rows.append(c * N + xs[ok])
            cols.append((c ^ (1 << e)) * N + xs[ok])
            vals.append(rate[ok])
    return _assemble(rows, cols, vals, N << E)


def _assemble(rows, cols, vals, size):
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    Q = sp.csr_matrix((v, (r, c)), shape=(size, size))
    out = np.asarray(Q.sum(axis=1)).ravel()
    return (Q - sp.diags(out)).tocsr()


def _rk4_adaptive(QT, p0, t_grid, tol):
    """Step-doubling RK4 for ``p' = QT p``; returns the solution on ``t_grid``."""

    def step(p, h):
        k1 = QT @ p
        k2 = QT @ (p + 0.5 * h * k1)
        k3 = QT @ (p + 0.5 * h * k2)
        k4 = QT @ (p + h * k3)
        return p + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    scale = max(1.0, float(abs(QT).sum(axis=0).max()))
    h = 0.1 / scale
    t = 0.0
    p = p0.copy()
    out = np.empty((len(t_grid), p0.size))
    for gi, tg in enumerate(t_grid):
        while t < tg:
            hh = min(h, tg - t)
            full = step(p, hh)
            half = step(step(p, hh / 2), hh / 2)
            err = float(np.max(np.abs(full - half))) / 15.0
            if err <= tol or hh < 1e-12:
                p = half + (half - full) / 15.0
                t += hh
                if err < tol / 32:
                    h = min(2 * h, 1.0 / scale * 2.5)
            else:
                h = hh / 2
        out[gi] = p
    return out


def _amei_as_markov(net: AmeiNet):
    return amei_to_markov(net, max_configs=MASTER_CAP)


def master_equation_marginals(model, ep: EpidemicParams, t_grid, x0, net0=None, *, tol: float = 1e-12) -> np.ndarray:
    """Exact ``Pr(x_i(t) = 1)`` on ``t_grid``, shape ``(len(t_grid), n)``.

    ``net0`` follows :class:`SimConfig`; the default is the stationary
    network law (full initial graph for the adaptive model).
    """
    n = model.n
    if ep.n != n or len(x0) != n:
        raise ModelError("rate vectors and x0 must match the node count")
    if n > 10:
        raise SizeCapError("master equation limited to n <= 10")
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid < 0) or np.any(np.diff(t_grid) < 0):
        raise ModelError("t_grid must be nondecreasing and nonnegative")
    N = 1 << n
    xbits = sum(int(v) << i for i, v in enumerate(x0))
    if isinstance(model, AsisModel):
        E = model.g0.edge_count
        if N << E > MASTER_CAP:
            raise SizeCapError(f"joint chain has {N << E} states, cap is {MASTER_CAP}")
        Q = _generator_asis(model, ep)
        edges = model.g0.sorted_edges()
        on = set(edges) if net0 is None else {(min(a, b), max(a, b)) for a, b in net0}
        c0 = sum(1 << e for e, ed in enumerate(edges) if ed in on)
        net_law = np.zeros(1 << E)
        net_law[c0] = 1.0
    else:
        if isinstance(model, AmeiNet):
            if net0 is not None:
                raise ModelError("fixed initial pair states are not supported by the exact oracle")
            if N * math.prod(p.M for p in model.processes.values()) > MASTER_CAP:
                raise SizeCapError(f"joint chain exceeds {MASTER_CAP} states")
            model = _amei_as_markov(model)
        if not isinstance(model, MarkovTemporalNet):
            raise ModelError(f"no exact oracle for {type(model).__name__}")
        if N * model.L > MASTER_CAP:
            raise SizeCapError(f"joint chain has {N * model.L} states, cap is {MASTER_CAP}")
        Q = _generator_markov(model, ep)
        if net0 is None:
            net_law = stationary_distribution(model.rates)
        else:
            net_law = np.zeros(model.L)
            net_law[int(net0)] = 1.0
    p0 = np.zeros(Q.shape[0])
    p0[np.arange(net_law.size) * N + xbits] = net_law
    P = _rk4_adaptive(Q.T.tocsr(), p0, t_grid, tol)
    xs = np.arange(Q.shape[0]) % N
    bits = ((xs[:, None] >> np.arange(n)) & 1).astype(float)
    return P @ bits


def mean_field_ode(mat, p0, t_grid) -> np.ndarray:
    """Fixed-step RK4 for ``p' = mat p``; step at most ``1e-3 / max(1, |mat|_inf)``."""
    mat = np.asarray(mat, dtype=float)
    p = np.array(p0, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or p.shape != (mat.shape[0],):
        raise ModelError("need a square matrix and a matching initial vector")
    if np.any(p < 0) or np.any(p > 1):
        raise ModelError("initial probabilities must lie in [0, 1]")
    t_grid = np.asarray(t_grid, dtype=float)
    hmax = 1e-3 / max(1.0, float(np.abs(mat).sum(axis=1).max()))
    out = np.empty((t_grid.size, p.size))
    t = 0.0
    for gi, tg in enumerate(t_grid):
        span = tg - t
        if span < 0:
            raise ModelError("t_grid must be nondecreasing and nonnegative")
        k = int(math.ceil(span / hmax - 1e-9)) if span > 0 else 0
        if k:
            h = span / k
            for _ in range(k):
                k1 = mat @ p
                k2 = mat @ (p + 0.5 * h * k1)
                k3 = mat @ (p + 0.5 * h * k2)
                k4 = mat @ (p + h * k3)
                p = p + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = tg
        out[gi] = p
    return out
