import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import normal_equations, ridge_dense, weighted_cd
from penadj.errors import NoActiveVariablesError, RankDeficiencyError
from penadj.solvers import (Fit, PenaltySpec, adaptive_weights,
                            fit_adaptive_lasso, fit_naive_en, fit_ols,
                            fit_ridge, kkt_violation, objective, rescale_en,
                            soft_threshold)


def problem(rng, m, p, k=3, noise=1.0):
    X = rng.standard_normal((m, p))
    X -= X.mean(axis=0)
    beta = np.zeros(p)
    beta[:min(k, p)] = rng.uniform(0.5, 2.0, min(k, p))
    y = X @ beta + noise * rng.standard_normal(m)
    return y - y.mean(), X


def orthonormal_scaled(rng, m, p):
    """Centered design with X'X/m = I."""
    Z = rng.standard_normal((m, p))
    Z -= Z.mean(axis=0)
    Q, _ = np.linalg.qr(Z)
    return Q * np.sqrt(m)


def lam_max(y, X):
    return np.abs(X.T @ y).max() / y.size


@pytest.mark.parametrize("z,g,out", [(3, 1, 2), (-3, 1, -2), (0.5, 1, 0)])
def test_soft_threshold(z, g, out):
    assert soft_threshold(z, g) == out


def test_soft_threshold_rejects_negative():
    with pytest.raises(ValueError):
        soft_threshold(1.0, -0.1)


def test_penalty_spec_invariants():
    with pytest.raises(ValueError):
        PenaltySpec("ols", lambda1=0.1)
    with pytest.raises(ValueError):
        PenaltySpec("ridge", lambda1=0.1, lambda2=1.0)
    with pytest.raises(ValueError):
        PenaltySpec("lasso", lambda1=0.1, lambda2=1.0)
    with pytest.raises(ValueError):
        PenaltySpec("lasso", lambda1=0.1, weights=np.ones(2))
    with pytest.raises(ValueError):
        PenaltySpec("adaptive_lasso", lambda1=0.1)
    with pytest.raises(ValueError):
        PenaltySpec("scad")


# OLS -------------------------------------------------------------------------

def test_ols_noiseless(rng):
    _, X = problem(rng, 40, 4)
    beta = np.array([1.0, -2.0, 0.0, 3.5])
    fit = fit_ols(X @ beta, X)
    np.testing.assert_allclose(fit.coef, beta, atol=1e-8)
    assert fit.df == 5


def test_ols_orthonormal(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((30, 3)))
    y = rng.standard_normal(30)
    np.testing.assert_allclose(fit_ols(y, Q).coef, Q.T @ y, atol=1e-10)


def test_ols_matches_dense_solve(rng):
    y, X = problem(rng, 50, 5)
    np.testing.assert_allclose(fit_ols(y, X).coef, normal_equations(y, X), atol=1e-8)


def test_ols_rank_errors(rng):
    y, X = problem(rng, 10, 12)
    with pytest.raises(RankDeficiencyError):
        fit_ols(y, X)
    y, X = problem(rng, 20, 3)
    with pytest.raises(RankDeficiencyError):
        fit_ols(y, np.hstack([X, X[:, :1]]))


# ridge -----------------------------------------------------------------------

def test_ridge_identity_gram(rng):
    X = orthonormal_scaled(rng, 40, 4)
    y = rng.standard_normal(40)
    ols = fit_ols(y, X).coef
    np.testing.assert_allclose(fit_ridge(y, X, 0.7).coef, ols / 1.7, atol=1e-10)


def test_ridge_infinite_shrinkage(rng):
    y, X = problem(rng, 30, 5)
    assert np.abs(fit_ridge(y, X, 1e9).coef).max() < 1e-6 * np.abs(y).max()


def test_ridge_high_dimensional_system(rng):
    y, X = problem(rng, 30, 40)
    fit = fit_ridge(y, X, 0.5)
    resid = (X.T @ X / 30 + 0.5 * np.eye(40)) @ fit.coef - X.T @ y / 30
    assert np.abs(resid).max() < 1e-8
    assert fit.df == 41


def test_ridge_needs_positive_lambda(rng):
    y, X = problem(rng, 10, 2)
    with pytest.raises(ValueError):
        fit_ridge(y, X, 0.0)


# elastic-net family ----------------------------------------------------------

def test_lambda1_zero_is_ridge(rng):
    y, X = problem(rng, 40, 60)
    np.testing.assert_allclose(fit_naive_en(y, X, 0.0, 0.3).coef,
                               fit_ridge(y, X, 0.3).coef, atol=1e-7)


def test_orthonormal_lasso_is_soft_threshold(rng):
    X = orthonormal_scaled(rng, 50, 6)
    y = X @ np.array([2.0, -1.0, 0.3, 0.0, 0.05, -0.6]) + 0.1 * rng.standard_normal(50)
    lam = 0.25
    fit = fit_naive_en(y, X, lam)
    np.testing.assert_allclose(fit.coef, soft_threshold(X.T @ y / 50, lam), atol=1e-8)


def test_null_fit_above_lambda_max(rng):
    y, X = problem(rng, 30, 8)
    lm = lam_max(y, X)
    fit = fit_naive_en(y, X, lm * 1.0001, 0.5)
    assert not np.any(fit.coef)
    assert fit.df == 1
    assert kkt_violation(fit, y, X, lm * 1.0001, 0.5) == 0.0


def test_rescale_en_examples():
    naive = Fit(np.array([1.0, 0.0, -2.0]), 3, 1, True, 0.0)
    np.testing.assert_array_equal(rescale_en(naive, 0.5).coef, [1.5, 0.0, -3.0])
    np.testing.assert_array_equal(rescale_en(naive, 0.0).coef, naive.coef)
    assert rescale_en(naive, 0.5).df == 3


def test_perturbed_fit_violates_kkt(rng):
    y, X = problem(rng, 60, 10)
    lam = 0.1 * lam_max(y, X)
    fit = fit_naive_en(y, X, lam)
    assert kkt_violation(fit, y, X, lam) <= 1e-6
    bad = fit.coef.copy()
    bad[np.argmax(np.abs(bad))] += 0.5
    assert kkt_violation(bad, y, X, lam) > 1e-3


def test_objective_trace_monotone(rng):
    y, X = problem(rng, 50, 80, k=5)
    lam = 0.05 * lam_max(y, X)
    fit = fit_naive_en(y, X, lam, 0.1, trace=True)
    assert fit.trace is not None and fit.trace.size >= 1
    assert np.all(np.diff(fit.trace) <= 1e-12 * max(1.0, abs(fit.trace[0])))
    assert fit.objective == pytest.approx(objective(fit.coef, y, X, lam, 0.1))


def test_standardize_maps_back(rng):
    y, X = problem(rng, 60, 6)
    X = X * np.array([1, 10, 0.1, 1, 5, 2])
    lam = 0.1 * lam_max(y, X / np.sqrt((X * X).mean(0)))
    fit = fit_naive_en(y, X, lam, standardize=True)
    sd = np.sqrt((X * X).mean(0))
    direct = fit_naive_en(y, X / sd, lam)
    np.testing.assert_allclose(fit.coef, direct.coef / sd, atol=1e-9)


def test_unpenalized_high_dimensional_refused(rng):
    y, X = problem(rng, 10, 20)
    with pytest.raises(RankDeficiencyError):
        fit_naive_en(y, X, 0.0, 0.0)


# adaptive lasso --------------------------------------------------------------

def test_adaptive_weights_examples():
    w = adaptive_weights(np.array([2.0, 0.5, 0.0]))
    np.testing.assert_array_equal(w, [0.5, 2.0, np.inf])
    w = adaptive_weights(np.full(4, -0.3))
    assert np.all(w == w[0]) and np.isfinite(w[0])
    with pytest.raises(NoActiveVariablesError, match="no active variables"):
        adaptive_weights(np.zeros(3))


def test_adaptive_weights_round_trip(rng):
    coef = rng.standard_normal(8) * (rng.random(8) > 0.4)
    coef[0] = 1.0
    w = adaptive_weights(coef)
    on = coef != 0
    np.testing.assert_allclose(1.0 / w[on], np.abs(coef[on]), rtol=1e-15)


def test_adaptive_unit_weights_is_lasso(rng):
    y, X = problem(rng, 50, 30)
    lam = 0.08 * lam_max(y, X)
    a = fit_adaptive_lasso(y, X, lam, np.ones(30)).coef
    b = fit_naive_en(y, X, lam).coef
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_adaptive_infinite_weight_excludes(rng):
    y, X = problem(rng, 50, 6)
    w = np.array([np.inf, 1.0, 1.0, np.inf, 2.0, 1.0])
    fit = fit_adaptive_lasso(y, X, 0.01, w)
    assert fit.coef[0] == 0.0 and fit.coef[3] == 0.0
    assert kkt_violation(fit, y, X, 0.01, 0.0, w) <= 1e-6


def test_adaptive_matches_direct_weighted_cd(rng):
    y, X = problem(rng, 40, 12)
    w = rng.uniform(0.2, 3.0, 12)
    lam = 0.1 * lam_max(y, X)
    fit = fit_adaptive_lasso(y, X, lam, w)
    np.testing.assert_allclose(fit.coef, weighted_cd(y, X, lam, w), atol=1e-6)


def test_kkt_infinite_weight_must_be_zero(rng):
    y, X = problem(rng, 20, 3)
    w = np.array([np.inf, 1.0, 1.0])
    assert kkt_violation(np.array([0.1, 0, 0]), y, X, 0.1, 0.0, w) == np.inf


# property tests --------------------------------------------------------------

instances = st.tuples(st.integers(0, 2**32 - 1), st.integers(5, 60),
                      st.integers(1, 120))


@settings(max_examples=40, deadline=None)
@given(instances, st.floats(0.01, 0.9), st.sampled_from([0.0, 0.01, 0.1, 1.0]))
def test_converged_fits_are_certified(inst, frac, lam2):
    seed, m, p = inst
    rng = np.random.default_rng(seed)
    y, X = problem(rng, m, p)
    lam1 = frac * max(lam_max(y, X), 1e-3)
    fit = fit_naive_en(y, X, lam1, lam2)
    assert fit.converged
    assert kkt_violation(fit, y, X, lam1, lam2) <= 1e-6
    en = rescale_en(fit, lam2)
    np.testing.assert_array_equal(en.coef, (1 + lam2) * fit.coef)
    np.testing.assert_array_equal(en.coef != 0, fit.coef != 0)


@settings(max_examples=25, deadline=None)
@given(instances, st.floats(0.02, 0.9))
def test_rescaling_identity(inst, frac):
    seed, m, p = inst
    rng = np.random.default_rng(seed)
    y, X = problem(rng, m, min(p, 40))
    w = rng.uniform(0.3, 3.0, X.shape[1])
    lam = frac * max(lam_max(y, X), 1e-3)
    fit = fit_adaptive_lasso(y, X, lam, w)
    # the rescaled lasso, multiplied back by w, is the weighted solution
    inner = fit_naive_en(y, X / w, lam).coef
    np.testing.assert_allclose(w * fit.coef, inner, atol=1e-12)
    np.testing.assert_allclose(fit.coef, weighted_cd(y, X, lam, w), atol=1e-6)


def test_ridge_oracle(rng):
    y, X = problem(rng, 25, 9)
    np.testing.assert_allclose(fit_ridge(y, X, 0.2).coef, ridge_dense(y, X, 0.2),
                               atol=1e-10)
