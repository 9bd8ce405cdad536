import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epictrl.exceptions import BracketError, SpectralError
from epictrl.graph import StaticGraph, adjacency, karate
from epictrl.spectral import (
    EpidemicThreshold,
    MetzlerMatrix,
    amei_extinct,
    amei_margin,
    build_A1,
    build_A3,
    build_static,
    kappa,
    lambda_max,
    lambda_max_dense,
    model_threshold,
    threshold_beta,
)
from epictrl.temporal import AmeiNet, AsisModel, EdgeProcess, EpidemicParams, MarkovTemporalNet

# reference values computed with dense LAPACK eigenvalues and scipy root finding
KARATE_LAMBDA = 6.725697727631747
MARKOV_BETA_C = {
    0.05: 0.06533880902955339,
    0.25: 0.16437825001816173,
    0.5: 0.22729092684649835,
    1.0: 0.3254383001657714,
    2.0: 0.5032785988283845,
}


def random_metzler(rng, n):
    m = rng.uniform(0, 1, (n, n)) * (rng.random((n, n)) < 0.6)
    np.fill_diagonal(m, rng.uniform(-3, 1, n))
    return m


def test_metzler_validation():
    with pytest.raises(SpectralError):
        MetzlerMatrix([[0.0, -1.0], [1.0, 0.0]])
    with pytest.raises(SpectralError):
        MetzlerMatrix(np.zeros((2, 3)))
    with pytest.raises(SpectralError):
        lambda_max(np.ones((2, 2)), tol=0.5)
    assert MetzlerMatrix([[-1.0, 2.0], [0.0, -3.0]]).dim == 2


def test_lambda_max_examples():
    assert lambda_max(np.array([[-1.0, 1.0], [1.0, -1.0]])) == pytest.approx(0.0, abs=1e-9)
    assert lambda_max(np.diag([-1.0, -3.0])) == pytest.approx(-1.0, abs=1e-9)
    assert lambda_max(np.array([[-2.0]])) == -2.0
    assert lambda_max(adjacency(karate()), 1e-13) == pytest.approx(KARATE_LAMBDA, abs=1e-10)


def test_lambda_max_random_against_dense():
    rng = np.random.default_rng(7)
    for _ in range(200):
        m = random_metzler(rng, int(rng.integers(1, 51)))
        assert abs(lambda_max(m, 1e-10) - lambda_max_dense(m)) <= 1e-8


def test_lambda_max_info():
    val, info = lambda_max(adjacency(karate()), 1e-12, return_info=True)
    assert info["method"] in ("power", "dense")
    assert info["iterations"] >= 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 2.0))
def test_lambda_max_monotone_in_entries(seed, bump):
    rng = np.random.default_rng(seed)
    m = random_metzler(rng, 6)
    m2 = m.copy()
    i, j = rng.integers(0, 6, 2)
    m2[i, j] += bump
    assert lambda_max(m2, 1e-11) >= lambda_max(m, 1e-11) - 1e-8


def test_build_static_and_collapse(kg):
    rng = np.random.default_rng(3)
    ep = EpidemicParams(rng.uniform(0.1, 1, 34), rng.uniform(0.5, 2, 34))
    static = lambda_max(build_static(kg, ep), 1e-12)
    net = MarkovTemporalNet((kg, kg, kg), rng.uniform(0.1, 2, (3, 3)))
    assert lambda_max(build_A1(net, ep), 1e-12) == pytest.approx(static, abs=1e-8)
    with pytest.raises(SpectralError):
        build_static(kg, EpidemicParams.homogeneous(3, 1.0, 1.0))


def test_build_A1_layout():
    a = StaticGraph.from_edges(2, [(0, 1)])
    b = StaticGraph.from_edges(2, [])
    net = MarkovTemporalNet((a, b), np.array([[0.0, 2.0], [3.0, 0.0]]))
    m = np.asarray(build_A1(net, EpidemicParams(np.array([0.5, 0.7]), np.array([1.0, 1.5]))))
    expected = np.array(
        [
            [-1.0 - 2.0, 0.5, 3.0, 0.0],
            [0.7, -1.5 - 2.0, 0.0, 3.0],
            [2.0, 0.0, -1.0 - 3.0, 0.0],
            [0.0, 2.0, 0.0, -1.5 - 3.0],
        ]
    )
    assert np.allclose(m, expected)


@pytest.mark.parametrize("delta", sorted(MARKOV_BETA_C))
def test_markov_karate_threshold(mk, delta):
    assert model_threshold(mk, delta, tol=1e-10) == pytest.approx(MARKOV_BETA_C[delta], abs=1e-7)


def test_threshold_bracket_property(mk):
    for delta in (0.5, 1.0):
        bc = model_threshold(mk, delta, tol=1e-10)
        lo = lambda_max(build_A1(mk, EpidemicParams.homogeneous(34, bc * (1 - 1e-6), delta)), 1e-13)
        hi = lambda_max(build_A1(mk, EpidemicParams.homogeneous(34, bc * (1 + 1e-6), delta)), 1e-13)
        assert lo < 0 <= hi


def test_threshold_beta_errors():
    with pytest.raises(BracketError):
        threshold_beta(lambda b: b + 1.0, 0.0, 0.0, 1.0)
    assert threshold_beta(lambda b: b - 0.3, 0.0, 0.0, 1.0, 1e-12) == pytest.approx(0.3, abs=1e-11)


def test_asis_matrix_dimension(kg):
    m = build_A3(AsisModel.homogeneous(kg, 1.0, 1.0), EpidemicParams.homogeneous(34, 0.1, 1.0))
    assert m.dim == 34 + 2 * 78


@pytest.mark.parametrize("phi,psi,delta", [(0.0, 1.0, 1.0), (3.0, 2.0, 1.0), (1.0, 1.0, 2.0), (2.0, 0.5, 0.5)])
def test_asis_threshold_closed_form(kg, phi, psi, delta):
    # homogeneous adaptive SIS: beta_c = delta (delta + phi + psi) / ((delta + psi) lambda_A)
    expected = delta * (delta + phi + psi) / ((delta + psi) * KARATE_LAMBDA)
    assert model_threshold(AsisModel.homogeneous(kg, phi, psi), delta, tol=1e-12) == pytest.approx(expected, rel=1e-8)


def test_asis_sign_grid():
    g = StaticGraph.from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)])
    lam_a = float(np.max(np.linalg.eigvalsh(adjacency(g))))
    for phi in (0.0, 0.5, 2.0):
        bc = (1.0 + phi + 1.0) / (2.0 * lam_a)
        model = AsisModel.homogeneous(g, phi, 1.0)
        for beta in np.linspace(0.2, 2.0, 10) * bc:
            lam = lambda_max(build_A3(model, EpidemicParams.homogeneous(4, beta, 1.0)), 1e-13)
            if abs(beta - bc) > 1e-6:
                assert (lam < 0) == (beta < bc)


def test_kappa_properties():
    assert kappa(0.0, 34, 0.1, 0.01) == pytest.approx(34.0)
    s = np.linspace(0, 5, 200)
    k = kappa(s, 10, 0.5, 0.2)
    assert np.all(np.diff(k) < 0)
    with pytest.raises(SpectralError):
        kappa(1.0, 3, 0.0, 1.0)


def test_amei_karate_regression(ak):
    ep = EpidemicParams.homogeneous(34, MARKOV_BETA_C[0.05], 0.05)
    rep = amei_extinct(ak, ep)
    assert rep.lambda_max == pytest.approx(-0.015144423038673296, abs=1e-9)
    assert rep.tau == -math.inf
    assert rep.margin.flag == "no margin available"
    assert not rep.extinct
    assert rep.margin.kappa_inv_1 == pytest.approx(0.26080620207873817, rel=1e-9)
    assert rep.margin.c == pytest.approx(0.12864287733760393, rel=1e-8)
    assert rep.margin.d == pytest.approx(0.005326228748689122, rel=1e-12)


def test_amei_finite_margin():
    net = AmeiNet(2, {(0, 1): EdgeProcess.two_state(1.0, 1.0)})
    ep = EpidemicParams.homogeneous(2, 1.0, 0.9)
    m = amei_margin(net, ep)
    assert m.flag is None
    assert m.kappa_inv_1 == pytest.approx(0.7904289080457401, rel=1e-9)
    assert m.tau == pytest.approx(-1.7490353577339433, abs=1e-8)
    rep = amei_extinct(net, ep)
    assert rep.lambda_max == pytest.approx(-0.4, abs=1e-9)
    assert rep.extinct == (rep.lambda_max < rep.tau)


def test_amei_unbounded_and_deterministic():
    net = AmeiNet(2, {(0, 1): EdgeProcess.two_state(1.0, 1.0)})
    m = amei_margin(net, EpidemicParams.homogeneous(2, 0.1, 5.0))
    assert m.flag in ("unbounded", "no margin available")
    if m.flag == "unbounded":
        assert m.tau == math.inf
    det = AmeiNet(2, {(0, 1): EdgeProcess.two_state(1.0, 0.0)})
    assert amei_margin(det, EpidemicParams.homogeneous(2, 1.0, 1.0)).flag == "deterministic-edge limit"


def test_epidemic_threshold_estimator(mk):
    est = EpidemicThreshold(deltas=[0.5, 1.0], tol=1e-10)
    assert est.get_params()["tol"] == 1e-10
    with pytest.raises(Exception):
        est.predict()
    est.fit(mk)
    assert np.allclose(est.predict(), [MARKOV_BETA_C[0.5], MARKOV_BETA_C[1.0]], atol=1e-7)
    assert np.all(np.diff(est.curve_.betas) > 0)
    with pytest.raises(ValueError):
        est.predict([2.0, 3.0])
