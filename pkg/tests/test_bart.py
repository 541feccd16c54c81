import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from bgformula.bart import BartHyper, BartPosterior, MCMCConfig, fit_binary, fit_continuous, sample_prior
from bgformula.bart import _kernels as K
from bgformula.errors import DegenerateResponseWarning, DrawOutOfRange, WidthMismatch

SMALL = BartHyper(num_trees=50)
QUICK = MCMCConfig(n_iter=600, n_burn=200, thin=2, seed=7)


def friedman(X):
    return (10 * np.sin(np.pi * X[:, 0] * X[:, 1]) + 20 * (X[:, 2] - 0.5) ** 2
            + 10 * X[:, 3] + 5 * X[:, 4])


# -- conjugate leaf ----------------------------------------------------------------

def _leaf_quadrature(W, S, v):
    """Normaliser, mean and variance of exp(S mu - W mu^2 / 2) N(mu; 0, v) by quadrature."""
    prec = W + 1.0 / v
    c, sd = S / prec, 1.0 / math.sqrt(prec)
    # integrate the density relative to its peak to stay in floating range
    peak = S * c - 0.5 * W * c * c - 0.5 * c * c / v
    f = lambda m, k: (m ** k) * math.exp(S * m - 0.5 * W * m * m - 0.5 * m * m / v - peak)
    lim = (c - 40 * sd, c + 40 * sd)
    opts = dict(epsabs=1e-14, epsrel=1e-13, limit=200, points=[c])
    z0 = integrate.quad(f, *lim, args=(0,), **opts)[0]
    z1 = integrate.quad(f, *lim, args=(1,), **opts)[0]
    z2 = integrate.quad(f, *lim, args=(2,), **opts)[0]
    log_z = math.log(z0) + peak - 0.5 * math.log(2 * math.pi * v)
    mean = z1 / z0
    return log_z, mean, z2 / z0 - mean * mean


@pytest.mark.parametrize("W,S,v", [(1.0, 0.3, 0.01), (37.5, -4.2, 0.0025), (250.0, 12.0, 0.2),
                                   (3.2, 0.0, 1.0), (0.5, -0.7, 0.05)])
def test_leaf_posterior_matches_quadrature(W, S, v):
    log_z, mean, var = _leaf_quadrature(W, S, v)
    assert K.lml(W, S, v) == pytest.approx(log_z, abs=1e-10)
    m, s2 = K.leaf_posterior(W, S, v)
    assert m == pytest.approx(mean, abs=1e-10)
    assert s2 == pytest.approx(var, abs=1e-10)


# -- tree prior ----------------------------------------------------------------

def test_prior_depth_split_frequency():
    h = BartHyper(num_trees=50)
    X = np.random.default_rng(0).random((50, 5))
    post = sample_prior(X, h, MCMCConfig(n_iter=20500, n_burn=500, thin=10, seed=2))
    present, split = post.depth_counts()
    for d in range(4):
        freq = split[d] / present[d]
        se = math.sqrt(h.split_prob(d) * (1 - h.split_prob(d)) / present[d])
        # draws are autocorrelated; allow a generous multiple of the binomial SE
        assert abs(freq - h.split_prob(d)) < max(8 * se, 0.005), (d, freq)


def _one_node_state(maxdepth=3):
    M = 2 ** (maxdepth + 1) - 1
    var = np.full(M, K.ABSENT, dtype=np.int32)
    var[0] = K.LEAF
    cut = np.zeros(M, dtype=np.int32)
    return var, cut, np.array([1], dtype=np.int64)


def test_grow_prune_ratios_are_reciprocal():
    # two points, one feature, one available cut
    pmove = np.array([0.25, 0.25, 0.4, 0.1])
    var, cut, ncut = _one_node_state()
    WL, SL, WR, SR = 1.0, 0.8, 1.0, -0.3
    g = K.grow_log_ratio(var, cut, 0, 0, 0, WL, SL, WR, SR, ncut, 0.04, 0.95, 2.0, 3, pmove, False)
    before = var.copy()
    var[0], cut[0], var[1], var[2] = 0, 0, K.LEAF, K.LEAF
    grown = var.copy()
    p = K.prune_log_ratio(var, cut, 0, WL, SL, WR, SR, ncut, 0.04, 0.95, 2.0, 3, pmove, False)
    np.testing.assert_array_equal(var, grown)
    assert g + p == pytest.approx(0.0, abs=1e-12)
    var[0], var[1], var[2] = K.LEAF, K.ABSENT, K.ABSENT
    np.testing.assert_array_equal(var, before)


def test_grow_ratio_in_prior_mode_is_split_odds():
    # with one rule available, proposing it from the prior leaves only the split odds
    var, cut, ncut = _one_node_state()
    pmove = np.array([0.25, 0.25, 0.4, 0.1])
    g = K.grow_log_ratio(var, cut, 0, 0, 0, 0.0, 0.0, 0.0, 0.0, ncut, 0.04, 0.95, 2.0, 3, pmove, True)
    # children at depth 1 have no rule left, so they contribute no stop terms
    assert g == pytest.approx(math.log(0.95 / 0.05) + math.log(0.25), abs=1e-12)


# -- latent samplers ---------------------------------------------------------------

@pytest.mark.parametrize("c", [0.0, 0.7, 3.0])
def test_polya_gamma_mean(c):
    K.seed(11)
    out = np.empty(40000)
    K.pg1_many(np.full(40000, c), out)
    mean = 0.25 if c == 0 else math.tanh(c / 2) / (2 * c)
    assert abs(out.mean() - mean) < 4 * out.std() / math.sqrt(len(out))


@pytest.mark.parametrize("a", [-1.0, 0.2, 2.5])
def test_truncated_normal_above(a):
    K.seed(5)
    x = np.array([K.tn_above(a) for _ in range(20000)])
    assert x.min() > a
    mean = stats.truncnorm(a, np.inf).mean()
    assert abs(x.mean() - mean) < 4 * x.std() / math.sqrt(len(x))


# -- fitting -----------------------------------------------------------------------

def test_friedman_beats_ols():
    rng = np.random.default_rng(1)
    X = rng.random((500, 10))
    y = friedman(X) + rng.normal(size=500)
    Xt = rng.random((1000, 10))
    yt = friedman(Xt)
    post = fit_continuous(X, y, BartHyper(num_trees=100), MCMCConfig(1500, 500, 5, seed=3))
    bart_rmse = np.sqrt(np.mean((post.predict_mean(Xt) - yt) ** 2))
    D = np.column_stack([np.ones(len(X)), X])
    beta = np.linalg.lstsq(D, y, rcond=None)[0]
    ols_rmse = np.sqrt(np.mean((np.column_stack([np.ones(len(Xt)), Xt]) @ beta - yt) ** 2))
    assert bart_rmse < ols_rmse
    assert post.sigma.mean() == pytest.approx(1.0, abs=0.35)


def test_constant_response_warns_and_returns_constant():
    X = np.random.default_rng(0).random((40, 2))
    with pytest.warns(DegenerateResponseWarning):
        post = fit_continuous(X, np.full(40, 3.5), SMALL, QUICK)
    assert np.allclose(post.predict_mean(X), 3.5, atol=0.2)


@pytest.mark.parametrize("link", ["probit", "logistic"])
def test_binary_fit_recovers_probabilities(link):
    rng = np.random.default_rng(4)
    X = rng.random((2000, 2))
    p = np.where(X[:, 0] > 0.5, 0.8, 0.2)
    y = (rng.random(2000) < p).astype(float)
    post = fit_binary(X, y, link, SMALL, QUICK)
    grid = np.array([[0.25, 0.5], [0.75, 0.5]])
    np.testing.assert_allclose(post.predict_mean(grid), [0.2, 0.8], atol=0.06)
    draws = post.predict_draws(X[:5])
    assert draws.shape == (QUICK.n_draws, 5) and np.all((draws > 0) & (draws < 1))


def test_seeded_runs_are_bit_identical():
    rng = np.random.default_rng(2)
    X = rng.random((200, 3))
    y = X[:, 0] + rng.normal(scale=0.1, size=200)
    a = fit_continuous(X, y, SMALL, QUICK)
    b = fit_continuous(X, y, SMALL, QUICK)
    assert a.predict_draws(X).tobytes() == b.predict_draws(X).tobytes()
    assert a.sigma.tobytes() == b.sigma.tobytes()
    c = fit_continuous(X, y, SMALL, MCMCConfig(600, 200, 2, seed=8))
    assert c.predict_draws(X).tobytes() != a.predict_draws(X).tobytes()


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    X = rng.random((100, 2))
    post = fit_binary(X, (X[:, 0] > 0.5).astype(float), "probit", SMALL, QUICK)
    post.save(tmp_path / "m.npz")
    back = BartPosterior.load(tmp_path / "m.npz")
    assert back.predict_draws(X).tobytes() == post.predict_draws(X).tobytes()
    assert back.link == "probit" and back.meta["mcmc"]["seed"] == QUICK.seed


def test_prediction_errors():
    X = np.random.default_rng(0).random((30, 3))
    post = fit_continuous(X, X[:, 0], SMALL, QUICK)
    with pytest.raises(WidthMismatch):
        post.predict(0, X[:, :2])
    with pytest.raises(DrawOutOfRange):
        post.predict(post.n_draws, X)
    with pytest.raises(DrawOutOfRange):
        post.predict_draws(X, [-1])


def test_config_validation():
    with pytest.raises(ValueError):
        MCMCConfig(n_iter=10, n_burn=10)
    with pytest.raises(ValueError):
        BartHyper(tau=1.0)
    with pytest.raises(ValueError):
        BartHyper(move_probs=(0.5, 0.5, 0.0, 0.0))
    assert BartHyper().leaf_prior_variance("probit") == pytest.approx(9 / (4 * 200))


@given(st.integers(1, 6), st.integers(1, 4))
def test_predictions_are_a_sum_over_trees(n_rows, p):
    # every draw's prediction is finite and the mean is the average of the draws
    rng = np.random.default_rng(n_rows * 10 + p)
    X = rng.random((20, p))
    post = fit_continuous(X, rng.normal(size=20), BartHyper(num_trees=5), MCMCConfig(30, 10, 2, seed=1))
    Q = rng.random((n_rows, p))
    draws = post.predict_draws(Q)
    assert np.all(np.isfinite(draws))
    np.testing.assert_allclose(post.predict_mean(Q), draws.mean(axis=0))
    np.testing.assert_allclose(post.predict(3, Q), draws[3])
