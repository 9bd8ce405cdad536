"""Static undirected graphs, the bundled karate club data and spectral bisection."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import GraphError

__all__ = [
    "StaticGraph",
    "Partition",
    "EdgeClassification",
    "adjacency",
    "karate",
    "karate_layout",
    "jacobi_eigh",
    "laplacian",
    "spectral_bisection",
    "classify_edges",
    "SpectralBisection",
    "read_graph",
    "write_graph",
]


def _norm_edge(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class StaticGraph:
    """Undirected simple graph on nodes ``0 .. n-1``."""

    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise GraphError(f"node count must be a positive integer, got {self.n!r}")
        seen = set()
        for e in self.edges:
            i, j = (int(v) for v in e)
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphError(f"edge {(i, j)} out of range for n={self.n}")
            seen.add(_norm_edge(i, j))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "edges", frozenset(seen))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable, *, strict: bool = True) -> "StaticGraph":
        """Build a graph, rejecting duplicate pairs when ``strict``."""
        pairs = [_norm_edge(int(i), int(j)) for i, j in edges]
        if strict and len(set(pairs)) != len(pairs):
            dup = sorted({p for p in pairs if pairs.count(p) > 1})
            raise GraphError(f"duplicate edges: {dup}")
        return cls(n, frozenset(pairs))

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def neighbors(self, i: int) -> list[int]:
        return sorted(j for a, b in self.edges for j in ((b,) if a == i else (a,) if b == i else ()))

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def is_connected(self) -> bool:
        adj = [[] for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.n

    def relabel(self, perm) -> "StaticGraph":
        """Graph with node ``i`` renamed to ``perm[i]``."""
        perm = list(perm)
        return StaticGraph(self.n, frozenset(_norm_edge(perm[i], perm[j]) for i, j in self.edges))

    def to_dict(self) -> dict:
        return {"n": self.n, "edges": [list(e) for e in self.sorted_edges()]}

    @classmethod
    def from_dict(cls, data: dict) -> "StaticGraph":
        try:
            n = data["n"]
            edges = data["edges"]
        except (KeyError, TypeError) as exc:
            raise GraphError(f"graph object needs 'n' and 'edges': {exc}") from None
        if not isinstance(n, int) or isinstance(n, bool):
            raise GraphError(f"'n' must be an integer, got {n!r}")
        for e in edges:
            if len(e) != 2:
                raise GraphError(f"edge entries must be pairs, got {e!r}")
        return cls.from_edges(n, edges, strict=True)


@dataclass(frozen=True)
class Partition:
    """Two-way node partition; ``cluster_of[i]`` is 1 or 2."""

    cluster_of: tuple

    def members(self, c: int) -> list[int]:
        return [i for i, k in enumerate(self.cluster_of) if k == c]


@dataclass(frozen=True)
class EdgeClassification:
    """Edge -> class (1: inside cluster 1, 2: inside cluster 2, 3: across)."""

    class_of: dict

    def edges_in(self, c: int) -> list[tuple[int, int]]:
        return sorted(e for e, k in self.class_of.items() if k == c)

    def counts(self) -> dict:
        return {c: len(self.edges_in(c)) for c in (1, 2, 3)}


def adjacency(g: StaticGraph) -> np.ndarray:
    a = np.zeros((g.n, g.n))
    for i, j in g.edges:
        a[i, j] = a[j, i] = 1.0
    return a


def laplacian(g: StaticGraph) -> np.ndarray:
    a = adjacency(g)
    return np.diag(a.sum(axis=1)) - a


def _read_json_resource(name: str) -> dict:
    with resources.files("epictrl.data").joinpath(name).open("r", encoding="utf-8") as fh:
        return json.load(fh)


def karate() -> StaticGraph:
    """Zachary's karate club (34 members, 78 ties), 0-based labels."""
    return StaticGraph.from_dict(_read_json_resource("karate.json"))


def karate_layout() -> np.ndarray:
    """Frozen 2-D drawing coordinates for the karate graph, shape (34, 2)."""
    return np.asarray(_read_json_resource("karate_layout.json")["nodes"], dtype=float)


def jacobi_eigh(a, tol: float = 1e-14, max_sweeps: int = 100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(w, v)`` with ascending eigenvalues and eigenvectors in the
    columns of ``v``.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if not np.allclose(a, a.T, atol=1e-12):
        raise ValueError("matrix must be symmetric")
    v = np.eye(n)
    scale = max(np.abs(a).max(), 1.0)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def _fiedler(g: StaticGraph) -> tuple[float, np.ndarray]:
    if not g.is_connected():
        raise GraphError("graph not connected")
    if g.n < 2:
        raise GraphError("bisection needs at least two nodes")
    w, v = jacobi_eigh(laplacian(g))
    vec = v[:, 1].copy()
    if vec[0] < 0:
        vec = -vec
    return float(w[1]), vec


def spectral_bisection(g: StaticGraph) -> Partition:
    """Split nodes by the sign of the Fiedler vector (node 0 side is cluster 1)."""
    _, vec = _fiedler(g)
    return Partition(tuple(1 if (x >= 0 or abs(x) < 1e-12) else 2 for x in vec))


def classify_edges(g: StaticGraph, p: Partition) -> EdgeClassification:
    if len(p.cluster_of) != g.n:
        raise GraphError("partition does not cover the graph")
    out = {}
    for i, j in g.sorted_edges():
        ci, cj = p.cluster_of[i], p.cluster_of[j]
        out[(i, j)] = ci if ci == cj else 3
    return EdgeClassification(out)


class SpectralBisection(BaseEstimator):
    """Estimator wrapper around :func:`spectral_bisection`.

    After ``fit`` the estimator exposes ``labels_`` (cluster 1/2 per node),
    ``fiedler_vector_``, ``algebraic_connectivity_`` and ``edge_classes_``.
    """

    def __init__(self, zero_tol: float = 1e-12):
        self.zero_tol = zero_tol

    def fit(self, g: StaticGraph, y=None):
        lam2, vec = _fiedler(g)
        self.fiedler_vector_ = vec
        self.algebraic_connectivity_ = lam2
        self.labels_ = np.where((vec >= 0) | (np.abs(vec) < self.zero_tol), 1, 2)
        self.partition_ = Partition(tuple(int(c) for c in self.labels_))
        self.edge_classes_ = classify_edges(g, self.partition_)
        return self

    def fit_predict(self, g: StaticGraph, y=None) -> np.ndarray:
        return self.fit(g).labels_


def read_graph(path) -> StaticGraph:
    with open(path, encoding="utf-8") as fh:
        return StaticGraph.from_dict(json.load(fh))


def write_graph(g: StaticGraph, path) -> None:
    Path(path).write_text(json.dumps(g.to_dict()) + "\n", encoding="utf-8")
