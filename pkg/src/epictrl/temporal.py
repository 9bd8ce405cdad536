"""Containers and constructors for Markovian temporal, AMEI and adaptive SIS models."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ModelError
from .graph import StaticGraph, classify_edges, karate, spectral_bisection

__all__ = [
    "EpidemicParams",
    "MarkovTemporalNet",
    "EdgeProcess",
    "AmeiNet",
    "AsisModel",
    "REFERENCE_RATES",
    "KARATE_CONFIG_CLASSES",
    "karate_edge_classes",
    "markov_karate",
    "amei_karate",
    "asis_karate",
    "stationary_activation",
    "abar_matrix",
    "amei_to_markov",
    "load_model",
    "dump_model",
    "model_to_dict",
    "model_from_dict",
]

MAX_EDGE_STATES = 64

# activation/deactivation rates of the three karate edge classes
REFERENCE_RATES = {"p1": 0.1, "q1": 1.0, "p2": 0.1, "q2": 1.0, "p3": 0.02, "q3": 5.0}

# active edge classes of configurations 1..8, in the fixed published order
KARATE_CONFIG_CLASSES = (
    frozenset({1, 2, 3}),
    frozenset({1, 2}),
    frozenset({2, 3}),
    frozenset({1, 3}),
    frozenset({1}),
    frozenset({2}),
    frozenset({3}),
    frozenset(),
)


def _as_rate_vector(x, n, name, *, allow_zero=False):
    arr = np.broadcast_to(np.asarray(x, dtype=float), (n,)).copy()
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{name} must be finite")
    if allow_zero:
        if np.any(arr < 0):
            raise ModelError(f"{name} must be nonnegative")
    elif np.any(arr <= 0):
        raise ModelError(f"{name} must be positive")
    return arr


@dataclass(frozen=True)
class EpidemicParams:
    """Per-node infection rates ``beta`` and recovery rates ``delta``."""

    beta: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float)).copy()
        delta = np.atleast_1d(np.asarray(self.delta, dtype=float)).copy()
        if beta.shape != delta.shape or beta.ndim != 1:
            raise ModelError("beta and delta must be vectors of equal length")
        if np.any(beta < 0) or np.any(delta <= 0) or not (np.all(np.isfinite(beta)) and np.all(np.isfinite(delta))):
            raise ModelError("rates must be finite, beta >= 0 and delta > 0")
        beta.flags.writeable = False
        delta.flags.writeable = False
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "delta", delta)

    @classmethod
    def homogeneous(cls, n: int, beta: float, delta: float) -> "EpidemicParams":
        return cls(np.full(n, float(beta)), np.full(n, float(delta)))

    @property
    def n(self) -> int:
        return self.beta.shape[0]

    def with_beta(self, beta) -> "EpidemicParams":
        return EpidemicParams(np.broadcast_to(beta, self.beta.shape), self.delta)

    def with_delta(self, delta) -> "EpidemicParams":
        return EpidemicParams(self.beta, np.broadcast_to(delta, self.delta.shape))


@dataclass(frozen=True)
class MarkovTemporalNet:
    """Graph configurations switching by a continuous-time Markov chain.

    ``rates[k, l]`` is the rate of jumping from configuration ``k`` to ``l``;
    the diagonal is ignored and stored as minus the row sum.
    """

    configs: tuple
    rates: np.ndarray

    def __post_init__(self):
        configs = tuple(self.configs)
        if not configs:
            raise ModelError("need at least one configuration")
        n = configs[0].n
        if any(g.n != n for g in configs):
            raise ModelError("all configurations must share the node set")
        rates = np.array(self.rates, dtype=float).reshape(len(configs), len(configs))
        np.fill_diagonal(rates, 0.0)
        if not np.all(np.isfinite(rates)) or np.any(rates < 0):
            raise ModelError("transition rates must be finite and nonnegative")
        np.fill_diagonal(rates, -rates.sum(axis=1))
        rates.flags.writeable = False
        object.__setattr__(self, "configs", configs)
        object.__setattr__(self, "rates", rates)

    @property
    def n(self) -> int:
        return self.configs[0].n

    @property
    def L(self) -> int:
        return len(self.configs)

    def is_irreducible(self) -> bool:
        return _closed_classes(self.rates) == [list(range(self.L))]


@dataclass(frozen=True)
class EdgeProcess:
    """Finite-state Markov chain driving one node pair.

    States are 0-based here; ``active`` lists the states in which the edge
    exists.  Generator rows are renormalised to sum to zero.
    """

    generator: np.ndarray
    active: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        q = np.array(self.generator, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] < 1:
            raise ModelError("generator must be a non-empty square matrix")
        m = q.shape[0]
        if m > MAX_EDGE_STATES:
            raise ModelError(f"edge processes are limited to {MAX_EDGE_STATES} states")
        np.fill_diagonal(q, 0.0)
        if not np.all(np.isfinite(q)) or np.any(q < 0):
            raise ModelError("off-diagonal generator entries must be finite and nonnegative")
        np.fill_diagonal(q, -q.sum(axis=1))
        active = frozenset(int(s) for s in self.active)
        if any(not 0 <= s < m for s in active):
            raise ModelError(f"active states must lie in 0..{m - 1}")
        q.flags.writeable = False
        object.__setattr__(self, "generator", q)
        object.__setattr__(self, "active", active)

    @classmethod
    def two_state(cls, p: float, q: float) -> "EdgeProcess":
        """State 0 active, state 1 inactive; activation rate ``p``, deactivation ``q``."""
        if p < 0 or q < 0:
            raise ModelError("two-state rates must be nonnegative")
        return cls(np.array([[-q, q], [p, -p]]), frozenset({0}))

    @property
    def M(self) -> int:
        return self.generator.shape[0]

    @property
    def inactive(self) -> frozenset:
        return frozenset(range(self.M)) - self.active


@dataclass(frozen=True)
class AmeiNet:
    """Aggregated-Markovian edge-independent temporal network.

    Pairs missing from ``processes`` never carry an edge.
    """

    n: int
    processes: dict

    def __post_init__(self):
        procs = {}
        for key, ep in dict(self.processes).items():
            i, j = (int(v) for v in key)
            if i == j or not (0 <= i < self.n and 0 <= j < self.n):
                raise ModelError(f"invalid pair {key}")
            pair = (min(i, j), max(i, j))
            if pair in procs:
                raise ModelError(f"pair {pair} given twice")
            if not isinstance(ep, EdgeProcess):
                raise ModelError("processes must map pairs to EdgeProcess")
            procs[pair] = ep
        object.__setattr__(self, "processes", dict(sorted(procs.items())))

    def pairs(self) -> list[tuple[int, int]]:
        return list(self.processes)


@dataclass(frozen=True)
class AsisModel:
    """Adaptive SIS: cutting rates per node, reconnecting rates per initial edge."""

    g0: StaticGraph
    phi: np.ndarray
    psi: dict

    def __post_init__(self):
        phi = _as_rate_vector(self.phi, self.g0.n, "phi", allow_zero=True)
        psi = {}
        for key, rate in dict(self.psi).items():
            i, j = (int(v) for v in key)
            psi[(min(i, j), max(i, j))] = float(rate)
        edges = set(self.g0.edges)
        missing = edges - set(psi)
        if missing:
            raise ModelError(f"reconnecting rate missing for edges {sorted(missing)[:5]}")
        extra = set(psi) - edges
        if extra:
            raise ModelError(f"reconnecting rate given for non-edges {sorted(extra)[:5]}")
        if any(not np.isfinite(r) or r <= 0 for r in psi.values()):
            raise ModelError("reconnecting rates must be positive")
        phi.flags.writeable = False
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "psi", dict(sorted(psi.items())))

    @classmethod
    def homogeneous(cls, g0: StaticGraph, phi: float, psi: float) -> "AsisModel":
        return cls(g0, np.full(g0.n, float(phi)), {e: float(psi) for e in g0.edges})

    @property
    def n(self) -> int:
        return self.g0.n

    def with_phi(self, phi) -> "AsisModel":
        return AsisModel(self.g0, np.broadcast_to(phi, (self.n,)), self.psi)


def karate_edge_classes():
    """Karate graph, its spectral bisection and the three edge classes."""
    g = karate()
    part = spectral_bisection(g)
    return g, part, classify_edges(g, part)


def _check_class_rates(p1, q1, p2, q2, p3, q3):
    rates = dict(p1=p1, q1=q1, p2=p2, q2=q2, p3=p3, q3=q3)
    for k, v in rates.items():
        if not np.isfinite(v) or v <= 0:
            raise ModelError(f"rate {k} must be positive, got {v}")
    return rates


def markov_karate(p1, q1, p2, q2, p3, q3) -> MarkovTemporalNet:
    """Eight-configuration karate network whose edge classes switch together."""
    _check_class_rates(p1, q1, p2, q2, p3, q3)
    p = {1: p1, 2: p2, 3: p3}
    q = {1: q1, 2: q2, 3: q3}
    g, _, cls = karate_edge_classes()
    configs = tuple(
        StaticGraph(g.n, frozenset(e for c in active for e in cls.edges_in(c)))
        for active in KARATE_CONFIG_CLASSES
    )
    L = len(KARATE_CONFIG_CLASSES)
    rates = np.zeros((L, L))
    for k, ck in enumerate(KARATE_CONFIG_CLASSES):
        for l, cl in enumerate(KARATE_CONFIG_CLASSES):
            diff = ck ^ cl
            if len(diff) == 1:
                (c,) = diff
                rates[k, l] = p[c] if c in cl else q[c]
    return MarkovTemporalNet(configs, rates)


def amei_karate(p1, q1, p2, q2, p3, q3) -> AmeiNet:
    """Karate pairs with independent two-state edge processes per class.

    Non-adjacent pairs get activation 0 and deactivation 1.
    """
    _check_class_rates(p1, q1, p2, q2, p3, q3)
    p = {1: p1, 2: p2, 3: p3}
    q = {1: q1, 2: q2, 3: q3}
    g, _, cls = karate_edge_classes()
    procs = {}
    for i, j in itertools.combinations(range(g.n), 2):
        c = cls.class_of.get((i, j))
        procs[(i, j)] = EdgeProcess.two_state(p[c], q[c]) if c else EdgeProcess.two_state(0.0, 1.0)
    return AmeiNet(g.n, procs)


def asis_karate(phi, psi) -> AsisModel:
    return AsisModel.homogeneous(karate(), phi, psi)


def _reachability(q: np.ndarray) -> np.ndarray:
    m = q.shape[0]
    reach = (q > 0) | np.eye(m, dtype=bool)
    for k in range(m):
        reach |= reach[:, [k]] & reach[[k], :]
    return reach


def _closed_classes(q: np.ndarray) -> list[list[int]]:
    reach = _reachability(np.asarray(q))
    m = reach.shape[0]
    comm = reach & reach.T
    classes, seen = [], set()
    for s in range(m):
        if s in seen:
            continue
        members = [t for t in range(m) if comm[s, t]]
        seen.update(members)
        if all(not reach[u, w] or comm[u, w] for u in members for w in range(m)):
            classes.append(members)
    return classes


def stationary_distribution(q: np.ndarray) -> np.ndarray:
    """Stationary law of a generator with exactly one closed class."""
    q = np.asarray(q, dtype=float)
    closed = _closed_classes(q)
    if len(closed) != 1:
        raise ModelError("stationary distribution not unique")
    idx = closed[0]
    sub = q[np.ix_(idx, idx)]
    k = len(idx)
    # pi Q = 0 with one balance row replaced by normalisation
    lhs = sub.T.copy()
    lhs[-1, :] = 1.0
    rhs = np.zeros(k)
    rhs[-1] = 1.0
    pi_sub = np.linalg.solve(lhs, rhs)
    pi = np.zeros(q.shape[0])
    pi[idx] = np.clip(pi_sub, 0.0, None)
    return pi / pi.sum()


def stationary_activation(ep: EdgeProcess) -> float:
    """Long-run probability that the pair's edge is present."""
    if not ep.active:
        return 0.0
    pi = stationary_distribution(ep.generator)
    return float(min(1.0, max(0.0, pi[sorted(ep.active)].sum())))


def abar_matrix(net: AmeiNet) -> np.ndarray:
    abar = np.zeros((net.n, net.n))
    for (i, j), ep in net.processes.items():
        abar[i, j] = abar[j, i] = stationary_activation(ep)
    return abar


def amei_to_markov(net: AmeiNet, *, max_configs: int = 4096) -> MarkovTemporalNet:
    """Expand a (small) AMEI network into its joint Markovian temporal network.

    Configuration index is the mixed-radix number of the pair states, first
    pair least significant.  Useful as an exact oracle on tiny instances.
    """
    pairs = net.pairs()
    sizes = [net.processes[p].M for p in pairs]
    L = int(np.prod(sizes)) if sizes else 1
    if L > max_configs:
        raise ModelError(f"joint edge chain has {L} states, above the cap of {max_configs}")
    states = [tuple(reversed(s)) for s in itertools.product(*[range(m) for m in reversed(sizes)])] if sizes else [()]
    index = {s: k for k, s in enumerate(states)}
    configs = []
    rates = np.zeros((L, L))
    for k, s in enumerate(states):
        edges = [p for p, h in zip(pairs, s) if h in net.processes[p].active]
        configs.append(StaticGraph(net.n, frozenset(edges)))
        for a, p in enumerate(pairs):
            qm = net.processes[p].generator
            for h2 in range(sizes[a]):
                if h2 != s[a] and qm[s[a], h2] > 0:
                    t = list(s)
                    t[a] = h2
                    rates[k, index[tuple(t)]] += qm[s[a], h2]
    return MarkovTemporalNet(tuple(configs), rates)


# ---------------------------------------------------------------- file formats


def model_to_dict(model) -> dict:
    if isinstance(model, StaticGraph):
        return {"kind": "static", **model.to_dict()}
    if isinstance(model, MarkovTemporalNet):
        rates = np.array(model.rates)
        np.fill_diagonal(rates, 0.0)
        return {
            "kind": "markov",
            "configs": [g.to_dict() for g in model.configs],
            "rates": rates.tolist(),
        }
    if isinstance(model, AmeiNet):
        pairs = []
        for (i, j), ep in model.processes.items():
            if ep.M == 2 and ep.active == frozenset({0}):
                pairs.append({"i": i, "j": j, "p": float(ep.generator[1, 0]), "q": float(ep.generator[0, 1])})
            else:
                pairs.append(
                    {
                        "i": i,
                        "j": j,
                        "M": ep.M,
                        "Q": ep.generator.tolist(),
                        "active": sorted(s + 1 for s in ep.active),
                    }
                )
        return {"kind": "amei", "n": model.n, "pairs": pairs}
    if isinstance(model, AsisModel):
        return {
            "kind": "asis",
            "g0": model.g0.to_dict(),
            "phi": model.phi.tolist(),
            "psi": [{"i": i, "j": j, "rate": r} for (i, j), r in model.psi.items()],
        }
    raise ModelError(f"cannot serialise {type(model).__name__}")


def model_from_dict(data: dict):
    """Inverse of :func:`model_to_dict`; the ``kind`` key is inferred when absent."""
    kind = data.get("kind")
    if kind is None:
        if "configs" in data:
            kind = "markov"
        elif "pairs" in data:
            kind = "amei"
        elif "g0" in data:
            kind = "asis"
        else:
            kind = "static"
    try:
        if kind == "static":
            return StaticGraph.from_dict(data)
        if kind == "markov":
            configs = tuple(StaticGraph.from_dict(g) for g in data["configs"])
            return MarkovTemporalNet(configs, np.asarray(data["rates"], dtype=float))
        if kind == "amei":
            procs = {}
            for rec in data["pairs"]:
                if "p" in rec:
                    ep = EdgeProcess.two_state(float(rec["p"]), float(rec["q"]))
                else:
                    q = np.asarray(rec["Q"], dtype=float)
                    if "M" in rec and q.shape != (rec["M"], rec["M"]):
                        raise ModelError(f"pair {rec['i']},{rec['j']}: Q is not {rec['M']}x{rec['M']}")
                    ep = EdgeProcess(q, frozenset(int(s) - 1 for s in rec.get("active", [])))
                procs[(rec["i"], rec["j"])] = ep
            return AmeiNet(int(data["n"]), procs)
        if kind == "asis":
            g0 = StaticGraph.from_dict(data["g0"])
            psi = {(r["i"], r["j"]): r["rate"] for r in data["psi"]}
            return AsisModel(g0, np.asarray(data["phi"], dtype=float), psi)
    except (KeyError, TypeError) as exc:
        raise ModelError(f"malformed {kind} model: missing {exc}") from None
    raise ModelError(f"unknown model kind {kind!r}")


def dump_model(model, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n", encoding="utf-8")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
