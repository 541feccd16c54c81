import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import logit

from bgformula.bart import BartHyper, MCMCConfig
from bgformula.core import CONTINUOUS
from bgformula.errors import MissingScores, MissingTailoring, PositivityWarning
from bgformula.scores import (BalancingScoreSpec, Variant, balance_by_score,
                              build_balancing_series, combine_scores, compute_scores,
                              fit_assignment_models, natural_course_regime,
                              standardized_differences)
from bgformula.simulator import Sim51Config, ToyDgpConfig, simulate

SMALL = BartHyper(num_trees=30)
QUICK = MCMCConfig(n_iter=500, n_burn=200, thin=3, seed=4)


@pytest.fixture(scope="module")
def sim51():
    return simulate(Sim51Config(n=300, T=3, seed=2))


def test_spec_parsing():
    assert BalancingScoreSpec.parse("BART-Cov").variant is Variant.FULL_CONFOUNDERS
    assert BalancingScoreSpec.parse("cov-bs").label == "BART-Cov-BS"
    assert BalancingScoreSpec.parse("joint").label == "BART-BS"
    assert not Variant.FULL_CONFOUNDERS.uses_score and Variant.AUGMENTED.uses_score
    with pytest.raises(ValueError):
        BalancingScoreSpec.parse("cov+bs")


def test_joint_score_arithmetic():
    s = combine_scores(["a", "b"], [0, 0], [0.5, 0.2], [0.9, 0.5])
    np.testing.assert_allclose(s.e, [0.45, 0.1])
    np.testing.assert_allclose(s.logit_e, logit([0.45, 0.1]))
    # without a separate observed-treatment factor the plug-in one is reused
    np.testing.assert_array_equal(s.p_uncens_observed, s.p_uncens)
    assert s.to_csv().splitlines()[0] == "id,t,p_treat,p_uncens,e,logit_e"


@given(st.lists(st.tuples(st.floats(0.01, 0.99), st.floats(0.01, 0.99)), min_size=1, max_size=30))
def test_score_is_a_probability(pairs):
    p, q = np.array(pairs).T
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PositivityWarning)
        s = combine_scores(np.arange(len(p)), np.zeros(len(p)), p, q)
    assert np.all((s.e > 0) & (s.e < 1))
    assert np.all(s.e <= np.minimum(p, q))
    np.testing.assert_allclose(1 / (1 + np.exp(-s.logit_e)), s.e, rtol=1e-9)


def test_positivity_warning():
    with pytest.warns(PositivityWarning, match="1 of 2"):
        combine_scores(["a", "b"], [0, 0], [0.5, 0.001], [0.9, 0.5])


def test_series_widths(sim51):
    n = sim51.n_rows
    scores = combine_scores(sim51.ids, sim51.t, np.full(n, 0.5), np.full(n, 0.9))
    widths = {}
    for name in ("bs", "cov", "cov-bs"):
        series = build_balancing_series(sim51, BalancingScoreSpec.parse(name), scores)
        widths[name] = series.width
        assert series.values.shape == (n, series.width)
        # continuous elements are generated before binary ones
        kinds = [series.kinds[e] for e in series.order]
        assert kinds == sorted(kinds, key=lambda k: k != CONTINUOUS)
    assert widths == {"bs": 2, "cov": 3, "cov-bs": 4}
    bs = build_balancing_series(sim51, BalancingScoreSpec.parse("bs"), scores)
    assert bs.names == ("logit_e", "L2") and bs.tailoring == (1,)


def test_series_errors(sim51):
    with pytest.raises(MissingScores):
        build_balancing_series(sim51, BalancingScoreSpec.parse("bs"))
    short = combine_scores(["x"], [0], [0.5], [0.5])
    with pytest.raises(MissingScores):
        build_balancing_series(sim51, BalancingScoreSpec.parse("cov-bs"), short)
    toy = simulate(ToyDgpConfig(n=50, T=2))
    with pytest.raises(MissingTailoring):
        build_balancing_series(toy, BalancingScoreSpec.parse("cov"), dynamic=True)
    with pytest.raises(ValueError):
        build_balancing_series(sim51, BalancingScoreSpec.parse("cov"), order=(0, 0, 1))


def test_coin_flip_treatment_gives_flat_scores():
    data = simulate(ToyDgpConfig(n=1500, T=2, p_a=0.5, cens=0.1, seed=3))
    models = fit_assignment_models(data, hyper=SMALL, mcmc=QUICK)
    s = compute_scores(models, data)
    assert abs(s.p_treat.mean() - 0.5) < 0.03 and s.p_treat.std() < 0.05
    assert abs(s.p_uncens.mean() - 0.9) < 0.03
    assert abs(s.e.mean() - 0.45) < 0.03
    assert s.positivity_violations() == 0


def test_censoring_factor_at_treated_vs_observed():
    # censoring depends on treatment only; "treated" evaluates everyone at A = 1
    cens = np.zeros((2, 2, 2))
    cens[:, :, 1] = 0.3
    data = simulate(ToyDgpConfig(n=3000, T=2, p_a=0.5, cens=cens, seed=5))
    models = fit_assignment_models(data, hyper=SMALL, mcmc=QUICK)
    treated = compute_scores(models, data, "treated")
    observed = compute_scores(models, data, "observed")
    assert abs(treated.p_uncens.mean() - 0.7) < 0.04
    a = data.a == 1
    assert abs(observed.p_uncens[~a].mean() - 1.0) < 0.04
    np.testing.assert_array_equal(treated.p_uncens_observed, observed.p_uncens)
    with pytest.raises(ValueError):
        compute_scores(models, data, "sometimes")


def test_natural_course_regime_follows_fitted_treatment_model():
    data = simulate(ToyDgpConfig(n=3000, T=2, p_a=[[0.2, 0.2], [0.8, 0.8]], cens=0.05,
                                  tailoring=True, seed=6))
    models = fit_assignment_models(data, hyper=SMALL, mcmc=QUICK)
    reg = natural_course_regime(models, data.schema)
    h = np.array([0.0, 1.0]).reshape(2, 1, 1)
    np.testing.assert_allclose(reg.treat_probability(h, np.zeros((2, 0))), [0.2, 0.8], atol=0.05)
    with pytest.raises(MissingTailoring):
        natural_course_regime(models, Sim51Config().schema)


def test_standardized_differences():
    X = np.array([[0.0, 1.0], [2.0, 1.0], [1.0, 1.0], [3.0, 1.0]])
    g = np.array([0, 0, 1, 1])
    d = standardized_differences(X, g)
    # means 1 vs 2, both variances 1
    np.testing.assert_allclose(d, [1.0, 0.0])
    assert np.all(np.isnan(standardized_differences(X, np.ones(4))))


def test_balance_by_score_shape():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(1000, 3))
    out = balance_by_score(X, rng.random(1000) < 0.5, rng.random(1000))
    # 100 rows per bin: random-split SMDs are noise of order 0.2
    assert out.shape == (10, 3) and out.mean() < 0.25
