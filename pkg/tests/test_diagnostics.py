import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_population
from penadj.diagnostics import (compute_delta_n, concentration_constant,
                                diagnose, eigen_bounds, massart_bound,
                                massart_check, moment_bounds,
                                sparsity_measure)
from penadj.population import (Decomposition, FinitePopulation,
                               center_covariates, project_decomposition)


def test_delta_full_projection(rng):
    pop = random_population(rng, 50, 5)
    assert compute_delta_n(project_decomposition(pop), pop.X) < 1e-8


def test_delta_subset_projection(rng):
    pop = random_population(rng, 40, 4)
    sub = FinitePopulation(pop.a, pop.b, pop.X[:, :2])
    d = project_decomposition(sub)
    expect = 0.0
    for e in (d.e_a, d.e_b):
        for j in range(4):
            expect = max(expect, abs(sum(pop.X[i, j] * e[i] for i in range(40)) / 40))
    assert compute_delta_n(d, pop.X) == pytest.approx(expect, rel=1e-12)


def test_delta_zero_errors(rng):
    X = center_covariates(rng.standard_normal((10, 2)))
    d = Decomposition(np.zeros(2), np.zeros(2), np.zeros(10), np.zeros(10), 0.0, 0.0)
    assert compute_delta_n(d, X) == 0.0


def test_sparsity_examples():
    lam = 0.3
    assert sparsity_measure(np.zeros(4), lam) == 0.0
    assert sparsity_measure([2 * lam, lam / 2, 0.0], lam) == pytest.approx(1.5)
    assert sparsity_measure([1.0, -2.0, 0.5], 0.4) == 3.0
    with pytest.raises(ValueError):
        sparsity_measure([1.0], 0.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=20),
       st.floats(0.01, 5), st.floats(1.0, 3.0))
def test_sparsity_monotone_and_bounded(beta, lam, factor):
    s1 = sparsity_measure(beta, lam)
    s2 = sparsity_measure(beta, lam * factor)
    assert s2 <= s1 + 1e-12
    assert s1 <= min(len(beta), np.abs(beta).sum() / lam) + 1e-9


def test_eigen_identity_gram(rng):
    Q, _ = np.linalg.qr(center_covariates(rng.standard_normal((30, 3))))
    X = Q * np.sqrt(30)
    lo_a, lo_b, top = eigen_bounds(X, 0.5, 0.0)
    assert lo_a == pytest.approx(1.5) and lo_b == pytest.approx(1.0)
    assert top == pytest.approx(1.0)


def test_eigen_duplicate_column(rng):
    X = center_covariates(rng.standard_normal((20, 3)))
    X = np.hstack([X, X[:, :1]])
    assert abs(eigen_bounds(X, 0.0, 0.0)[0]) < 1e-10


@pytest.mark.parametrize("p", [20, 600])
def test_eigen_shift_property(rng, p):
    X = center_covariates(rng.standard_normal((800, p)))
    lo0, _, top = eigen_bounds(X, 0.0, 0.0)
    lo_a, lo_b, top2 = eigen_bounds(X, 0.3, 1.7)
    assert lo_a - lo0 == pytest.approx(0.3, abs=1e-9)
    assert lo_b - lo0 == pytest.approx(1.7, abs=1e-9)
    w = np.linalg.eigvalsh(X.T @ X / 800)
    assert lo0 == pytest.approx(w[0], rel=1e-7)
    assert top == pytest.approx(w[-1], rel=1e-7)


def test_eigen_wide_matrix(rng):
    X = center_covariates(rng.standard_normal((50, 700)))
    lo, _, top = eigen_bounds(X, 0.0, 0.0)
    assert lo == 0.0
    assert top == pytest.approx(np.linalg.eigvalsh(X.T @ X / 50)[-1], rel=1e-10)


def test_equicorrelated_top_eigenvalue():
    rng = np.random.default_rng(7)
    L = np.linalg.cholesky(np.full((3, 3), 0.75) + 0.25 * np.eye(3))
    X = center_covariates(rng.standard_normal((200_000, 3)) @ L.T)
    assert eigen_bounds(X, 0, 0)[2] == pytest.approx(2.5, abs=0.03)


def test_concentration_constant():
    assert concentration_constant(0.5) == pytest.approx(1 / 70)
    assert concentration_constant(0.1) == pytest.approx(0.09 / 70)
    assert concentration_constant(0.95) == pytest.approx((3 - 2.85) ** 2 / 70)


def test_massart_impossible_event(rng):
    z = rng.standard_normal(30)
    tail, bound = massart_check(z, 10, z.max() - z.mean() + 0.1, reps=2000)
    assert tail == 0.0 and 0 < bound < 1


def test_massart_symmetric_half():
    z = np.r_[-np.arange(1, 21), np.arange(1, 21)].astype(float)
    tail, _ = massart_check(z, 20, 1e-9, reps=20_000, seed=1)
    # P(mean > 0) for a symmetric population, ties at zero excluded
    assert tail == pytest.approx(0.5, abs=0.03)


def test_massart_bound_against_hand_formula():
    z = np.array([0.0, 1.0, 2.0, 3.0])
    sigma2 = 1.25
    vs = 1 / 70
    expect = np.exp(-0.5 * 2 * 0.25 / ((1 + vs) ** 2 * sigma2))
    assert massart_bound(z, 2, 0.5) == pytest.approx(expect, rel=1e-14)


def test_massart_errors():
    with pytest.raises(ValueError):
        massart_bound(np.ones(10), 5, 0.1)
    with pytest.raises(ValueError):
        massart_check(np.arange(10.0), 5, 0.1, reps=999)
    with pytest.raises(ValueError):
        massart_check(np.arange(10.0), 5, 0.0)


def test_moment_examples(rng):
    X = rng.choice([-1.0, 1.0], size=(40, 3))
    X = np.vstack([X, -X])
    pop = FinitePopulation(np.zeros(80), np.zeros(80), X)
    mx, ma, mb = moment_bounds(pop, project_decomposition(pop))
    assert mx == 1.0 and ma == 0.0 and mb == 0.0
    G = center_covariates(rng.standard_normal((10_000, 2)))
    pop = FinitePopulation(np.zeros(10_000), np.zeros(10_000), G)
    assert abs(moment_bounds(pop, project_decomposition(pop))[0] - 3.0) < 0.5


def test_report_json_fields(rng):
    pop = random_population(rng, 60, 5)
    rep = diagnose(pop, 0.4, 0.2, 0.1, 0.2)
    d = json.loads(rep.to_json())
    assert d["varsigma"] == pytest.approx(concentration_constant(0.4))
    assert d["lambda_min_ridge_b"] - d["lambda_min_ridge_a"] == pytest.approx(0.1)
    assert all(np.isfinite(v) for v in d.values())
    assert rep.to_json() == diagnose(pop, 0.4, 0.2, 0.1, 0.2).to_json()
