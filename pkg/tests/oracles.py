"""Reference computations that share no code with the package.

These are deliberately slow and literal: plain loops over residuals,
dense solves, itertools enumeration.
"""

import itertools
import math

import numpy as np


def normal_equations(y, X):
    """``(X'X)^{-1} X'y`` by a dense LU solve."""
    return np.linalg.solve(X.T @ X, X.T @ y)


def ridge_dense(y, X, lam2):
    m, p = X.shape
    return np.linalg.solve(X.T @ X / m + lam2 * np.eye(p), X.T @ y / m)


def weighted_cd(y, X, lam1, weights=None, lam2=0.0, tol=1e-13, max_sweeps=200_000):
    """Residual-form cyclic coordinate descent on

    ``(1/2m)||y - Xb||^2 + lam1 sum_j w_j |b_j| + (lam2/2)||b||^2``.

    Infinite weights pin the coordinate at zero.  Written from the update
    rule alone: ``b_j <- S(x_j'r/m + s_jj b_j, lam1 w_j) / (s_jj + lam2)``.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    m, p = X.shape
    w = np.ones(p) if weights is None else np.asarray(weights, dtype=float)
    b = np.zeros(p)
    r = y.copy()
    sjj = (X * X).sum(axis=0) / m
    for _ in range(max_sweeps):
        biggest = 0.0
        for j in range(p):
            if not np.isfinite(w[j]) or sjj[j] == 0.0:
                continue
            z = X[:, j] @ r / m + sjj[j] * b[j]
            thr = lam1 * w[j]
            new = math.copysign(max(abs(z) - thr, 0.0), z) / (sjj[j] + lam2)
            d = new - b[j]
            if d != 0.0:
                r -= d * X[:, j]
                b[j] = new
                biggest = max(biggest, abs(d))
        if biggest < tol:
            break
    return b


def dim_by_loops(Y, treated):
    """Difference in means and its Neyman variance, term by term."""
    n = len(Y)
    A = [Y[i] for i in range(n) if i in treated]
    B = [Y[i] for i in range(n) if i not in treated]

    def mean(v):
        return sum(v) / len(v)

    def s2(v):
        mu = mean(v)
        return sum((x - mu) ** 2 for x in v) / (len(v) - 1)

    return mean(A) - mean(B), n / len(A) * s2(A) + n / len(B) * s2(B)


def enumerate_dim(a, b, n_A):
    """Exact mean and 1/N variance of the difference in means."""
    n = len(a)
    vals = []
    for S in itertools.combinations(range(n), n_A):
        s = set(S)
        ya = [a[i] for i in S]
        yb = [b[i] for i in range(n) if i not in s]
        vals.append(sum(ya) / len(ya) - sum(yb) / len(yb))
    mu = sum(vals) / len(vals)
    return mu, sum((v - mu) ** 2 for v in vals) / len(vals), len(vals)


def sample_var(v):
    v = list(v)
    mu = sum(v) / len(v)
    return sum((x - mu) ** 2 for x in v) / (len(v) - 1)


def neyman_identity(a, b, n_A):
    """``var(a)/n_A + var(b)/n_B - var(a - b)/n``, n-1 denominators."""
    n = len(a)
    return (sample_var(a) / n_A + sample_var(b) / (n - n_A)
            - sample_var([x - y for x, y in zip(a, b)]) / n)
