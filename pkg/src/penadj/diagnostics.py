"""Finite-sample quantities behind the regularity conditions.

Nothing here is enforced.  The report gives the computable pieces
(cross-covariances of errors and covariates, sparsity, Gram eigenvalues,
fourth moments, the concentration constant) and leaves judgment to the
user.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import eigsh

from .population import project_decomposition

DENSE_EIG_MAX_P = 500
EIG_TOL = 1e-8


@dataclass
class DiagnosticsReport:
    delta_n: float
    s_lambda_a: float
    s_lambda_b: float
    lambda_min_ridge_a: float
    lambda_min_ridge_b: float
    lambda_max_gram: float
    fourth_moment_x: float
    fourth_moment_e_a: float
    fourth_moment_e_b: float
    varsigma: float
    p_A: float
    lambda1: float
    lambda2_a: float
    lambda2_b: float

    def to_dict(self):
        return {k: float(v) for k, v in asdict(self).items()}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def compute_delta_n(decomp, X):
    """``max_z max_j |(1/n) sum_i x_ij e_z[i]|`` over z in {a, b}."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if X.shape[1] == 0:
        return 0.0
    return float(max(np.abs(X.T @ decomp.e_a).max(),
                     np.abs(X.T @ decomp.e_b).max()) / n)


def sparsity_measure(beta, lambda1):
    """Soft support size ``sum_j min(|beta_j| / lambda1, 1)``."""
    if not lambda1 > 0:
        raise ValueError(f"lambda1 must be positive, got {lambda1}")
    return float(np.minimum(np.abs(np.asarray(beta, dtype=float)) / lambda1,
                            1.0).sum())


def _extreme_eigs(X):
    """Smallest and largest eigenvalue of ``X'X/n``."""
    n, p = X.shape
    if p <= DENSE_EIG_MAX_P:
        w = linalg.eigvalsh(X.T @ X / n)
        return float(max(w[0], 0.0)), float(w[-1])
    # the nonzero spectrum is shared with the n x n matrix XX'/n
    if p >= n:
        w = linalg.eigvalsh(X @ X.T / n)
        return 0.0, float(w[-1])
    S = X.T @ X / n
    top = eigsh(S, k=1, which="LA", tol=EIG_TOL, return_eigenvectors=False)[0]
    low = eigsh(S, k=1, sigma=0.0, which="LM", tol=EIG_TOL,
                return_eigenvectors=False)[0]
    return float(max(low, 0.0)), float(top)


def eigen_bounds(X, lambda2_a, lambda2_b):
    """``(min eig(S + lam2_a I), min eig(S + lam2_b I), max eig(S))``, S = X'X/n.

    The shift moves every eigenvalue by ``lam2``, so the smallest eigenvalue
    of S is computed once.  Above 500 columns Lanczos iteration replaces the
    dense decomposition, and for ``p >= n`` the smallest eigenvalue is zero
    because centered columns span at most ``n - 1`` dimensions.
    """
    X = np.asarray(X, dtype=float)
    if X.shape[1] == 0:
        return float(lambda2_a), float(lambda2_b), 0.0
    low, top = _extreme_eigs(X)
    return low + lambda2_a, low + lambda2_b, top


def concentration_constant(p_A):
    """``min{1/70, (3 p_A)^2/70, (3 - 3 p_A)^2/70}``."""
    return min(1.0 / 70.0, (3.0 * p_A) ** 2 / 70.0, (3.0 - 3.0 * p_A) ** 2 / 70.0)


def massart_bound(z, n_A, t):
    """``exp(-p_A n_A t^2 / ((1 + varsigma)^2 sigma^2))``, sigma^2 with 1/n."""
    z = np.asarray(z, dtype=float)
    n = z.size
    sigma2 = float(np.mean((z - z.mean()) ** 2))
    if sigma2 <= 0.0:
        raise ValueError("zero-variance population: the bound is degenerate")
    p_A = n_A / n
    vs = concentration_constant(p_A)
    return float(np.exp(-p_A * n_A * t * t / ((1.0 + vs) ** 2 * sigma2)))


def sample_means(z, n_A, reps, seed=0, chunk=2000):
    """Means of `reps` uniformly drawn size-`n_A` subsets of `z`."""
    z = np.asarray(z, dtype=float)
    rng = np.random.default_rng(seed)
    out = np.empty(reps)
    for s in range(0, reps, chunk):
        k = min(chunk, reps - s)
        pick = rng.random((k, z.size)).argpartition(n_A - 1, axis=1)[:, :n_A]
        out[s:s + k] = z[pick].mean(axis=1)
    return out


def massart_check(z, n_A, t, reps=10_000, seed=0):
    """Monte Carlo tail ``P(zbar_A - zbar >= t)`` next to its analytic bound.

    Returns
    -------
    (float, float)
        Empirical tail frequency and the bound.
    """
    z = np.asarray(z, dtype=float)
    if not t > 0:
        raise ValueError("t must be positive")
    if reps < 1000:
        raise ValueError("reps must be at least 1000")
    if not 1 <= n_A < z.size:
        raise ValueError("n_A must lie in [1, n)")
    bound = massart_bound(z, n_A, t)
    dev = sample_means(z, n_A, reps, seed) - z.mean()
    return float(np.mean(dev >= t)), bound


def moment_bounds(pop, decomp):
    """``(max_j mean x_j^4, mean e_a^4, mean e_b^4)``."""
    X = pop.X
    mx = float(np.max(np.mean(X ** 4, axis=0))) if X.shape[1] else 0.0
    return mx, float(np.mean(decomp.e_a ** 4)), float(np.mean(decomp.e_b ** 4))


def diagnose(pop, p_A, lambda1, lambda2_a=0.0, lambda2_b=0.0, decomp=None):
    """Assemble a `DiagnosticsReport`.

    The sparsity measures use the projection coefficients of the
    decomposition at threshold `lambda1`.
    """
    if not 0 < p_A < 1:
        raise ValueError("p_A must lie in (0, 1)")
    decomp = decomp or project_decomposition(pop)
    lo_a, lo_b, top = eigen_bounds(pop.X, lambda2_a, lambda2_b)
    mx, ma, mb = moment_bounds(pop, decomp)
    return DiagnosticsReport(
        delta_n=compute_delta_n(decomp, pop.X),
        s_lambda_a=sparsity_measure(decomp.beta_a, lambda1),
        s_lambda_b=sparsity_measure(decomp.beta_b, lambda1),
        lambda_min_ridge_a=lo_a,
        lambda_min_ridge_b=lo_b,
        lambda_max_gram=top,
        fourth_moment_x=mx,
        fourth_moment_e_a=ma,
        fourth_moment_e_b=mb,
        varsigma=concentration_constant(p_A),
        p_A=float(p_A),
        lambda1=float(lambda1),
        lambda2_a=float(lambda2_a),
        lambda2_b=float(lambda2_b),
    )
