import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epictrl.exceptions import ModelError
from epictrl.graph import StaticGraph, adjacency
from epictrl.temporal import (
    KARATE_CONFIG_CLASSES,
    REFERENCE_RATES,
    AmeiNet,
    AsisModel,
    EdgeProcess,
    EpidemicParams,
    MarkovTemporalNet,
    abar_matrix,
    amei_karate,
    amei_to_markov,
    asis_karate,
    karate_edge_classes,
    load_model,
    dump_model,
    markov_karate,
    model_from_dict,
    model_to_dict,
    stationary_activation,
    stationary_distribution,
)


def test_epidemic_params_validation():
    ep = EpidemicParams.homogeneous(3, 0.2, 1.0)
    assert ep.n == 3
    with pytest.raises(ValueError):
        ep.beta[0] = 1.0
    for beta, delta in [([-1.0], [1.0]), ([1.0], [0.0]), ([1.0, 2.0], [1.0]), ([np.nan], [1.0])]:
        with pytest.raises(ModelError):
            EpidemicParams(np.array(beta), np.array(delta))
    assert np.all(ep.with_beta(0.5).beta == 0.5)


def test_markov_karate_structure(mk, kg):
    assert mk.L == 8
    off = mk.rates.copy()
    np.fill_diagonal(off, 0.0)
    assert np.count_nonzero(off) == 24
    # empty configuration (index 7) to the class-1-only configuration (index 4)
    assert mk.rates[7, 4] == REFERENCE_RATES["p1"]
    assert mk.rates[4, 7] == REFERENCE_RATES["q1"]
    assert mk.configs[0].edges == kg.edges
    assert mk.configs[7].edge_count == 0
    assert set().union(*(g.edges for g in mk.configs)) == kg.edges
    assert mk.is_irreducible()
    assert np.allclose(mk.rates.sum(axis=1), 0.0)


def test_markov_karate_configs_match_class_lists(mk):
    _, _, cls = karate_edge_classes()
    for g, active in zip(mk.configs, KARATE_CONFIG_CLASSES):
        assert g.edges == frozenset(e for e, c in cls.class_of.items() if c in active)


def test_karate_constructors_reject_bad_rates():
    with pytest.raises(ModelError):
        markov_karate(0.1, 1, 0.1, 1, 0.0, 5)
    with pytest.raises(ModelError):
        amei_karate(0.1, -1, 0.1, 1, 0.02, 5)


def test_amei_karate(ak):
    _, _, cls = karate_edge_classes()
    assert len(ak.processes) == 34 * 33 // 2
    active_capable = [p for p, ep in ak.processes.items() if ep.generator[1, 0] > 0]
    assert len(active_capable) == 78
    non_edge = next(p for p in ak.processes if p not in cls.class_of)
    q = ak.processes[non_edge].generator
    assert q[1, 0] == 0.0 and q[0, 1] == 1.0
    e3 = cls.edges_in(3)[0]
    q3 = ak.processes[e3].generator
    assert (q3[1, 0], q3[0, 1]) == (0.02, 5.0)


def test_stationary_activation_examples():
    assert stationary_activation(EdgeProcess.two_state(0.1, 1.0)) == pytest.approx(1 / 11, abs=1e-15)
    assert stationary_activation(EdgeProcess.two_state(0.0, 1.0)) == 0.0
    assert stationary_activation(EdgeProcess.two_state(2.0, 0.0)) == 1.0


def test_stationary_not_unique():
    q = np.zeros((2, 2))
    with pytest.raises(ModelError, match="stationary distribution not unique"):
        stationary_distribution(q)


def test_stationary_reducible_single_closed_class():
    # state 2 is transient and drains into the {0, 1} class
    q = np.array([[-1.0, 1.0, 0.0], [2.0, -2.0, 0.0], [1.0, 1.0, -2.0]])
    assert np.allclose(stationary_distribution(q), [2 / 3, 1 / 3, 0.0])


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 10), st.floats(0.01, 10))
def test_two_state_balance(p, q):
    assert stationary_activation(EdgeProcess.two_state(p, q)) == pytest.approx(p / (p + q), rel=1e-12)


def test_abar_matrix(ak, kg):
    ab = abar_matrix(ak)
    _, _, cls = karate_edge_classes()
    i, j = cls.edges_in(1)[0]
    assert ab[i, j] == pytest.approx(0.1 / 1.1, rel=1e-14)
    assert np.array_equal(ab > 0, adjacency(kg) > 0)
    assert np.allclose(ab, ab.T) and not np.any(np.diag(ab))
    assert ab.max() <= 1 and ab.min() >= 0


def test_edge_process_validation():
    with pytest.raises(ModelError):
        EdgeProcess(np.zeros((65, 65)))
    with pytest.raises(ModelError):
        EdgeProcess(np.array([[0.0, -1.0], [1.0, 0.0]]))
    with pytest.raises(ModelError):
        EdgeProcess(np.zeros((2, 2)), frozenset({2}))
    ep = EdgeProcess(np.array([[5.0, 1.0], [2.0, 5.0]]), frozenset())
    assert np.allclose(ep.generator.sum(axis=1), 0.0)
    assert ep.inactive == {0, 1}


def test_amei_net_validation():
    with pytest.raises(ModelError):
        AmeiNet(2, {(0, 0): EdgeProcess.two_state(1, 1)})
    with pytest.raises(ModelError):
        AmeiNet(2, {(0, 1): EdgeProcess.two_state(1, 1), (1, 0): EdgeProcess.two_state(1, 1)})


def test_asis_validation():
    g = StaticGraph.from_edges(3, [(0, 1), (1, 2)])
    with pytest.raises(ModelError, match="missing"):
        AsisModel(g, np.ones(3), {(0, 1): 1.0})
    with pytest.raises(ModelError, match="non-edges"):
        AsisModel(g, np.ones(3), {(0, 1): 1.0, (1, 2): 1.0, (0, 2): 1.0})
    with pytest.raises(ModelError):
        AsisModel(g, np.ones(3), {(0, 1): 1.0, (1, 2): 0.0})
    m = AsisModel(g, np.ones(3), {(1, 0): 2.0, (2, 1): 3.0})
    assert m.psi == {(0, 1): 2.0, (1, 2): 3.0}
    assert asis_karate(1.0, 2.0).n == 34


def test_amei_to_markov_matches_product_chain():
    net = AmeiNet(3, {(0, 1): EdgeProcess.two_state(1.0, 2.0), (1, 2): EdgeProcess.two_state(0.5, 0.3)})
    joint = amei_to_markov(net)
    assert joint.L == 4
    pi = stationary_distribution(joint.rates)
    p_edge01 = sum(w for w, g in zip(pi, joint.configs) if (0, 1) in g.edges)
    assert p_edge01 == pytest.approx(1 / 3, rel=1e-12)


@pytest.mark.parametrize("which", ["markov", "amei", "asis", "static"])
def test_model_file_round_trip(tmp_path, which, mk, kg):
    model = {
        "markov": mk,
        "amei": AmeiNet(3, {(0, 1): EdgeProcess.two_state(1.0, 2.0), (0, 2): EdgeProcess(np.array([[-1, 1, 0], [0, -1, 1], [1, 0, -1.0]]), frozenset({0, 2}))}),
        "asis": asis_karate(1.5, 2.0),
        "static": kg,
    }[which]
    path = tmp_path / "m.json"
    dump_model(model, path)
    back = load_model(path)
    assert model_to_dict(back) == model_to_dict(model)


def test_amei_file_formats():
    data = {"n": 2, "pairs": [{"i": 0, "j": 1, "p": 0.5, "q": 1.5}]}
    net = model_from_dict(data)
    assert stationary_activation(net.processes[(0, 1)]) == pytest.approx(0.25)
    data = {"n": 2, "pairs": [{"i": 0, "j": 1, "M": 2, "Q": [[-1, 1], [3, -3]], "active": [2]}]}
    assert stationary_activation(model_from_dict(data).processes[(0, 1)]) == pytest.approx(0.25)
    with pytest.raises(ModelError):
        model_from_dict({"n": 2, "pairs": [{"i": 0, "j": 1, "M": 3, "Q": [[-1, 1], [3, -3]]}]})
    with pytest.raises(ModelError):
        model_from_dict({"kind": "markov", "configs": []})
