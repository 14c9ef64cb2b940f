import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from pasd.combination import (
    AnalyticEMParams,
    EMCombiner,
    EMParams,
    VoteCombiner,
    chi2_scaled_density,
    combine_predict,
    combine_predictions,
    combiner_from_dict,
    e_step,
    em_fit,
    em_fit_analytic,
    fisher_scoring_step,
    fit_em_combiner,
    fit_vote_combiner,
    gating_objective,
    gating_score_hessian,
    softmax_weights,
    vote_weights,
    vote_weights_from_estimates,
)
from pasd.data import Dataset
from pasd.errors import (
    DegenerateComponent,
    DimensionMismatch,
    GroupLevelMeasure,
    NonpositiveMu,
    WeightSumViolation,
)

from oracles import numeric_gradient, numeric_jacobian
from test_tree import _validator

MONOTONE = [np.exp, np.cbrt, lambda v: 3.0 * v - 7.0, np.arctan, lambda v: v ** 3 + v]


def _vote_brute(est, higher):
    B, K = est.shape
    w = np.zeros(K)
    for b in range(B):
        row = est[b]
        best = row.max() if higher else row.min()
        winners = [k for k in range(K) if row[k] == best]
        for k in winners:
            w[k] += 1.0 / len(winners) / B
    return w


@pytest.mark.parametrize("seed", range(100))
def test_vote_weights_sum_to_one_and_ignore_monotone_transforms(seed):
    rng = np.random.default_rng(seed)
    B, K = int(rng.integers(1, 60)), int(rng.integers(2, 6))
    # a coarse grid makes exact ties common
    est = rng.integers(0, 6, size=(B, K)).astype(float) / 5.0
    higher = bool(seed % 2)
    w = vote_weights_from_estimates(est, higher)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(w, _vote_brute(est, higher), atol=1e-12)
    for f in MONOTONE:
        np.testing.assert_allclose(vote_weights_from_estimates(f(est), higher), w, atol=1e-12)
    # a decreasing transform swaps which direction is better
    np.testing.assert_allclose(vote_weights_from_estimates(-est, not higher), w, atol=1e-12)


def test_vote_weights_vectorised_over_points():
    rng = np.random.default_rng(0)
    est = rng.normal(size=(20, 3, 7))
    w = vote_weights_from_estimates(est)
    assert w.shape == (3, 7)
    for i in range(7):
        np.testing.assert_allclose(w[:, i], vote_weights_from_estimates(est[:, :, i]))


def test_combine_predict_checks_weights():
    assert combine_predict([0.25, 0.75], [1.0, 3.0]) == 2.5
    with pytest.raises(WeightSumViolation):
        combine_predict([0.5, 0.6], [1.0, 3.0])
    with pytest.raises(DimensionMismatch):
        combine_predict([1.0], [1.0, 3.0])
    with pytest.raises(WeightSumViolation):
        combine_predictions(np.array([[0.5, 0.5], [0.2, 0.2]]), np.ones((2, 2)))


def _gating_fixture(seed):
    rng = np.random.default_rng(seed)
    n, K = int(rng.integers(5, 40)), int(rng.integers(2, 5))
    mu = rng.exponential(size=(n, K))
    lam = rng.dirichlet(np.ones(K), size=n)
    beta = rng.normal(size=K - 1)
    return lam[:, :-1], mu[:, :-1], beta


@pytest.mark.parametrize("seed", range(30))
def test_gating_score_and_hessian_match_finite_differences(seed):
    lam, mu, beta = _gating_fixture(seed)
    score, hess = gating_score_hessian(lam, mu, beta)
    num_score = numeric_gradient(lambda b: gating_objective(lam, mu, b), beta)
    num_hess = numeric_jacobian(lambda b: gating_score_hessian(lam, mu, b)[0], beta)
    scale = 1.0 + np.abs(score).max()
    np.testing.assert_allclose(score, num_score, rtol=1e-6, atol=1e-6 * scale)
    np.testing.assert_allclose(hess, num_hess, rtol=1e-6, atol=1e-6 * (1.0 + np.abs(hess).max()))
    # the objective is concave in beta
    assert np.all(np.linalg.eigvalsh(hess) <= 1e-9 * (1.0 + np.abs(hess).max()))


@pytest.mark.parametrize("seed", range(20))
def test_fisher_step_never_lowers_the_gating_objective(seed):
    lam, mu, beta = _gating_fixture(seed)
    new = fisher_scoring_step(lam, mu, beta)
    assert gating_objective(lam, mu, new) >= gating_objective(lam, mu, beta)


def test_softmax_weights_reference_column():
    w = softmax_weights(np.array([1.0, 0.0]), np.array([[np.log(3.0), 5.0]]))
    np.testing.assert_allclose(w, [[0.75, 0.25]])


def _mixture_fixture(seed, K=None):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(60, 300))
    K = K or int(rng.integers(2, 5))
    x = rng.uniform(-1, 1, n)
    y = np.sin(3 * x) + rng.normal(0, 0.3, n)
    H = np.column_stack([y + rng.normal(0, 0.2 + 0.8 * (1 + np.sign(x) * (-1) ** k) / 2, n)
                         for k in range(K)])
    mu = (H - y[:, None]) ** 2 * rng.uniform(0.5, 1.5, size=(n, K)) + 0.01
    return y, H, mu


@pytest.mark.parametrize("seed", range(50))
def test_em_log_likelihood_never_decreases(seed):
    y, H, mu = _mixture_fixture(seed)
    fit = em_fit((y, H), None, mu, max_iter=60)
    trace = np.asarray(fit.loglik_trace)
    assert np.all(np.diff(trace) >= -1e-8)
    assert fit.betas[-1] == 0.0
    assert fit.weights(mu).sum(axis=1) == pytest.approx(np.ones(len(y)))


@pytest.mark.parametrize("seed", range(50))
def test_analytic_em_log_likelihood_never_decreases(seed):
    y, H, mu = _mixture_fixture(seed)
    fit = em_fit_analytic((y, H), None, mu, max_iter=60)
    trace = np.asarray(fit.loglik_trace)
    assert np.all(np.diff(trace) >= -1e-8)
    assert fit.betas.sum() == pytest.approx(1.0)
    assert fit.weights(mu).sum(axis=1) == pytest.approx(np.ones(len(y)))


def test_em_trace_matches_e_step_likelihood():
    y, H, mu = _mixture_fixture(3, K=3)
    fit = em_fit((y, H), None, mu, max_iter=10)
    log_pi = np.log(fit.weights(mu))
    _, ll = e_step(y, H, fit.sigmas, log_pi)
    assert ll == pytest.approx(fit.loglik_trace[-1], rel=1e-10)


def test_em_weights_follow_local_accuracy():
    rng = np.random.default_rng(0)
    n = 600
    x = rng.uniform(-1, 1, n)
    y = rng.normal(size=n)
    noise_a = np.where(x < 0, 0.1, 1.5)
    noise_b = np.where(x < 0, 1.5, 0.1)
    H = np.column_stack([y + rng.normal(size=n) * noise_a, y + rng.normal(size=n) * noise_b])
    mu = np.column_stack([noise_a ** 2, noise_b ** 2])
    w = em_fit_analytic((y, H), None, mu).weights(mu)
    assert w[x < 0, 0].mean() > 0.8
    assert w[x > 0, 1].mean() > 0.8
    # softmax gating without intercepts tends to 1/2 as mu_1 -> 0, so only
    # the side where model 1 is poor can be gated sharply
    w = em_fit((y, H), None, mu).weights(mu)
    assert w[x > 0, 1].mean() > 0.8
    assert w[x < 0, 0].mean() > w[x > 0, 0].mean()


def test_chi2_scaled_density_matches_scipy_and_integrates_to_one():
    m = np.array([0.01, 0.5, 2.0, 7.0])
    np.testing.assert_allclose(chi2_scaled_density(m, 1.7), stats.chi2(1, scale=1.7).pdf(m), rtol=1e-12)
    total, _ = integrate.quad(lambda v: float(chi2_scaled_density(v, 0.4)), 0, np.inf)
    assert total == pytest.approx(1.0, abs=1e-7)


def test_em_error_paths():
    y = np.arange(5.0)
    H = np.column_stack([y, y + 1.0])
    mu = np.ones((5, 2))
    with pytest.raises(DegenerateComponent):
        em_fit((y, H), None, mu)
    with pytest.raises(DegenerateComponent):
        em_fit_analytic((y, H), None, mu)
    with pytest.raises(DimensionMismatch):
        em_fit((y, H + 0.5), None, np.ones((5, 3)))
    with pytest.raises(ValueError):
        em_fit((y, H + 0.5), None, np.full((5, 2), np.nan))
    # a component whose responsibilities collapse to zero aborts
    rng = np.random.default_rng(1)
    y = rng.normal(size=50)
    H = np.column_stack([y + rng.normal(0, 0.01, 50), y + 1e6])
    with pytest.raises(DegenerateComponent):
        em_fit((y, H), None, np.ones((50, 2)))


def test_analytic_em_clamps_nonpositive_estimates():
    y, H, mu = _mixture_fixture(2, K=2)
    mu[0, 0] = -0.5
    with pytest.warns(NonpositiveMu):
        fit = em_fit_analytic((y, H), None, mu, max_iter=5)
    assert fit.clamped_mu
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert not em_fit_analytic((y, H), None, np.abs(mu) + 0.1, max_iter=5).clamped_mu


def _combo_data(seed, n=200, binary=False):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 2))
    if binary:
        y = (rng.random(n) < 1 / (1 + np.exp(-2 * X[:, 0]))).astype(float)
        H = np.column_stack([1 / (1 + np.exp(-2 * X[:, 0] * (X[:, 1] > 0))),
                             1 / (1 + np.exp(-2 * X[:, 0] * (X[:, 1] <= 0)))])
    else:
        y = X[:, 0] + rng.normal(0, 0.3, n)
        H = np.column_stack([y + rng.normal(0, 0.1 + (X[:, 1] > 0), n),
                             y + rng.normal(0, 0.1 + (X[:, 1] <= 0), n)])
    return Dataset(X, y, H)


@pytest.mark.parametrize("measure", ["squared_error", "auc"])
def test_vote_combiner_round_trip_and_schema(measure):
    data = _combo_data(0, binary=measure == "auc")
    comb = fit_vote_combiner(data, measure=measure, B=6, seed=4)
    for f in comb.forests[1:]:
        for a, b in zip(f.bootstrap_indices, comb.forests[0].bootstrap_indices):
            np.testing.assert_array_equal(a, b)
    W = comb.weights(data.X)
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(vote_weights(comb, data.X[5]), W[5])
    doc = json.loads(json.dumps(comb.to_dict()))
    _validator("combiner").validate(doc)
    back = combiner_from_dict(doc)
    assert isinstance(back, VoteCombiner)
    np.testing.assert_array_equal(back.predict(data.X, data.H), comb.predict(data.X, data.H))
    again = fit_vote_combiner(data, measure=measure, B=6, seed=4)
    np.testing.assert_array_equal(again.weights(data.X), W)


@pytest.mark.parametrize("analytic", [False, True])
@pytest.mark.parametrize("provider", ["forest", "boosting"])
def test_em_combiner_round_trip_and_schema(analytic, provider):
    data = _combo_data(1)
    comb = fit_em_combiner(data, analytic=analytic, provider=provider, B=5, M=10, seed=2, max_iter=50)
    doc = json.loads(json.dumps(comb.to_dict()))
    _validator("combiner").validate(doc)
    back = combiner_from_dict(doc)
    assert isinstance(back, EMCombiner)
    np.testing.assert_allclose(back.predict(data.X, data.H), comb.predict(data.X, data.H), rtol=1e-12)
    params_cls = AnalyticEMParams if analytic else EMParams
    assert isinstance(back.params, params_cls)


def test_em_combiner_rejects_auc():
    with pytest.raises(GroupLevelMeasure):
        fit_em_combiner(_combo_data(0, binary=True), measure="auc")


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_vote_weights_are_a_distribution_on_random_forests(seed):
    data = _combo_data(seed, n=80)
    comb = fit_vote_combiner(data, B=3, seed=seed)
    W = comb.weights(data.X)
    assert np.all(W >= 0)
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
