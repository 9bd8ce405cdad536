import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epictrl.exceptions import GraphError
from epictrl.graph import (
    Partition,
    SpectralBisection,
    StaticGraph,
    adjacency,
    classify_edges,
    jacobi_eigh,
    karate,
    karate_layout,
    laplacian,
    read_graph,
    spectral_bisection,
    write_graph,
)

# computed with networkx.fiedler_vector and numpy.linalg.eigh on networkx.karate_club_graph
KARATE_CLUSTER_1 = [0, 1, 3, 4, 5, 6, 7, 10, 11, 12, 13, 16, 17, 19, 21]
KARATE_LAMBDA2 = 0.4685252267013933


def test_adjacency_small_cases():
    assert adjacency(StaticGraph.from_edges(2, [(0, 1)])).tolist() == [[0, 1], [1, 0]]
    tri = adjacency(StaticGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)]))
    assert np.array_equal(tri, np.ones((3, 3)) - np.eye(3))


def test_karate_basics(kg):
    assert kg.n == 34
    assert kg.edge_count == 78
    a = adjacency(kg)
    assert a.sum() == 156
    assert np.array_equal(a, a.T)
    assert not np.any(np.diag(a))
    assert kg.is_connected()


def test_karate_layout_shape():
    xy = karate_layout()
    assert xy.shape == (34, 2)
    assert np.all(np.isfinite(xy))


@pytest.mark.parametrize(
    "edges",
    [[(0, 0)], [(0, 5)], [(0, 1), (1, 0)], [(-1, 2)]],
)
def test_invalid_graphs_rejected(edges):
    with pytest.raises(GraphError):
        StaticGraph.from_edges(3, edges)


def test_graph_json_round_trip(tmp_path, kg):
    path = tmp_path / "g.json"
    write_graph(kg, path)
    assert read_graph(path) == kg
    path.write_text(json.dumps({"n": 3, "edges": [[0, 1], [1, 0]]}))
    with pytest.raises(GraphError, match="duplicate"):
        read_graph(path)
    path.write_text(json.dumps({"n": 3, "edges": [[0, 3]]}))
    with pytest.raises(GraphError):
        read_graph(path)
    path.write_text(json.dumps({"edges": []}))
    with pytest.raises(GraphError):
        read_graph(path)


def test_jacobi_matches_dense(rng):
    for n in (1, 2, 5, 17):
        m = rng.normal(size=(n, n))
        m = m + m.T
        w, v = jacobi_eigh(m)
        assert np.allclose(w, np.linalg.eigvalsh(m), atol=1e-11)
        assert np.allclose(m @ v, v * w, atol=1e-10)


def test_jacobi_rejects_asymmetric():
    with pytest.raises(ValueError):
        jacobi_eigh(np.array([[0.0, 1.0], [0.0, 0.0]]))


def _min_cut_partition(g):
    best = None
    for k in range(1, g.n):
        for side in itertools.combinations(range(g.n), k):
            s = set(side)
            if 0 not in s:
                continue
            cut = sum((i in s) != (j in s) for i, j in g.edges)
            if best is None or cut < best[0]:
                best = (cut, s)
    return best[1]


def test_bisection_two_triangles_matches_min_cut():
    g = StaticGraph.from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)])
    p = spectral_bisection(g)
    assert set(p.members(1)) == _min_cut_partition(g) == {0, 1, 2}
    assert p.members(2) == [3, 4, 5]


def test_bisection_path():
    g = StaticGraph.from_edges(4, [(0, 1), (1, 2), (2, 3)])
    p = spectral_bisection(g)
    assert p.members(1) == [0, 1]
    assert p.members(2) == [2, 3]


def test_bisection_disconnected():
    with pytest.raises(GraphError, match="graph not connected"):
        spectral_bisection(StaticGraph.from_edges(4, [(0, 1), (2, 3)]))


def test_karate_partition_frozen(kg):
    p = spectral_bisection(kg)
    assert p.members(1) == KARATE_CLUSTER_1
    cls = classify_edges(kg, p)
    assert cls.counts() == {1: 28, 2: 40, 3: 10}
    cut = sum(p.cluster_of[i] != p.cluster_of[j] for i, j in kg.edges)
    assert cut == len(cls.edges_in(3))


def test_classify_edges_small():
    g = StaticGraph.from_edges(2, [(0, 1)])
    assert classify_edges(g, Partition((1, 2))).class_of == {(0, 1): 3}
    tri = StaticGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    assert set(classify_edges(tri, Partition((1, 1, 1))).class_of.values()) == {1}
    with pytest.raises(GraphError):
        classify_edges(tri, Partition((1, 1)))


def test_estimator_interface(kg):
    est = SpectralBisection()
    assert est.get_params() == {"zero_tol": 1e-12}
    labels = est.fit_predict(kg)
    assert sorted(np.flatnonzero(labels == 1).tolist()) == KARATE_CLUSTER_1
    assert est.algebraic_connectivity_ == pytest.approx(KARATE_LAMBDA2, abs=1e-12)
    assert np.allclose(laplacian(kg) @ est.fiedler_vector_, KARATE_LAMBDA2 * est.fiedler_vector_, atol=1e-10)


@st.composite
def connected_graphs(draw):
    n = draw(st.integers(2, 9))
    tree = [(draw(st.integers(0, i - 1)), i) for i in range(1, n)]
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=12))
    edges = {(min(a, b), max(a, b)) for a, b in tree + extra if a != b}
    return StaticGraph(n, frozenset(edges))


@settings(max_examples=60, deadline=None)
@given(connected_graphs(), st.randoms(use_true_random=False))
def test_bisection_relabel_invariance(g, rnd):
    perm = list(range(g.n))
    rnd.shuffle(perm)
    base = spectral_bisection(g)
    lam2 = np.sort(np.linalg.eigvalsh(laplacian(g)))
    if g.n > 2 and abs(lam2[2] - lam2[1]) < 1e-6:
        return  # repeated Fiedler value: the split is not unique
    other = spectral_bisection(g.relabel(perm))
    fiedler = jacobi_eigh(laplacian(g))[1][:, 1]
    if np.min(np.abs(fiedler)) < 1e-9:
        return  # zero entries follow the tie-break, which is label dependent
    groups = {frozenset(base.members(1)), frozenset(base.members(2))}
    mapped = {frozenset(perm.index(i) for i in other.members(c)) for c in (1, 2)}
    assert groups == mapped


@settings(max_examples=60, deadline=None)
@given(connected_graphs())
def test_adjacency_and_classes_properties(g):
    a = adjacency(g)
    assert np.array_equal(a, a.T) and not np.any(np.diag(a))
    cls = classify_edges(g, spectral_bisection(g))
    assert sum(cls.counts().values()) == g.edge_count
    assert set(cls.class_of) == set(g.edges)
