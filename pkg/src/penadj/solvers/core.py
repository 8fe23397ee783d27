"""Penalized least squares on group-centered data.

Every solver takes a centered response ``y`` (length m) and a centered
design ``Xc`` (m x p) and fits no intercept.  The elastic-net family
minimizes

    (1/2m) ||y - Xc b||^2 + lam1 * sum_j w_j |b_j| + (lam2/2) ||b||^2

with unit weights unless stated otherwise.
"""

import os
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import linalg

from ..errors import NoActiveVariablesError, NumericalError, RankDeficiencyError
from . import _kernels

KINDS = ("ols", "ridge", "lasso", "naive_en", "en", "adaptive_lasso")

TOL = 1e-7
KKT_TOL = 1e-6
MAX_SWEEPS = 100_000

_DEBUG = os.environ.get("PENADJ_DEBUG", "") not in ("", "0")


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty family member with its tuning parameters.

    ``weights`` is only meaningful for ``adaptive_lasso``; an infinite
    weight removes the covariate.
    """

    kind: str
    lambda1: float = 0.0
    lambda2: float = 0.0
    weights: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("penalty weights must be nonnegative")
        if self.kind == "ols" and (self.lambda1 or self.lambda2):
            raise ValueError("ols takes no penalty")
        if self.kind == "ridge" and self.lambda1:
            raise ValueError("ridge has no l1 term")
        if self.kind in ("lasso", "adaptive_lasso") and self.lambda2:
            raise ValueError(f"{self.kind} has no l2 term")
        if (self.weights is None) != (self.kind != "adaptive_lasso"):
            raise ValueError("weights go with adaptive_lasso and nothing else")


@dataclass
class Fit:
    """Fitted adjustment vector.

    ``df`` is ``||coef||_0 + 1`` for the l1 family and ``p + 1`` for OLS and
    ridge.  ``objective`` is the value of the problem actually solved (the
    naive problem for a rescaled elastic net).  ``trace`` holds the
    objective after each sweep when tracing was requested.
    """

    coef: np.ndarray
    df: int
    n_sweeps: int
    converged: bool
    objective: float
    spec: Optional[PenaltySpec] = None
    trace: Optional[np.ndarray] = field(default=None, repr=False)


def soft_threshold(z, gamma):
    """``sign(z) * max(|z| - gamma, 0)``, elementwise."""
    if np.any(np.asarray(gamma) < 0):
        raise ValueError("threshold must be nonnegative")
    z = np.asarray(z, dtype=float)
    out = np.sign(z) * np.maximum(np.abs(z) - gamma, 0.0)
    return float(out) if out.ndim == 0 else out


def _as_problem(y, Xc):
    y = np.ascontiguousarray(y, dtype=float).ravel()
    Xc = np.ascontiguousarray(Xc, dtype=float)
    if Xc.ndim == 1:
        Xc = Xc[:, None]
    if Xc.shape[0] != y.shape[0]:
        raise ValueError(
            f"y has {y.shape[0]} rows but Xc has {Xc.shape[0]}")
    return y, Xc


def gram_terms(y, Xc):
    """``(X'X/m, X'y/m, y'y/m)`` for the covariance-form kernels."""
    m = y.shape[0]
    G = Xc.T @ Xc / m
    return np.ascontiguousarray(G), Xc.T @ y / m, float(y @ y) / m


def objective(coef, y, Xc, lambda1, lambda2, weights=None):
    """Penalized least-squares objective at `coef`."""
    y, Xc = _as_problem(y, Xc)
    coef = np.asarray(coef, dtype=float)
    r = y - Xc @ coef
    if weights is None:
        l1 = np.abs(coef).sum()
    else:
        on = coef != 0
        l1 = float(np.sum(np.asarray(weights)[on] * np.abs(coef[on])))
    return (r @ r) / (2 * y.shape[0]) + lambda1 * l1 + 0.5 * lambda2 * (coef @ coef)


def kkt_violation(fit, y, Xc, lambda1, lambda2=0.0, weights=None):
    """Largest violation of the optimality conditions.

    With ``g_j = Xc_j'(y - Xc b)/m - lam2 b_j`` the condition is
    ``g_j = lam1 w_j sign(b_j)`` on the support and ``|g_j| <= lam1 w_j``
    off it.  Coordinates with an infinite weight are excluded and must be
    zero.

    Parameters
    ----------
    fit : Fit or array_like
        The fit or its coefficient vector.
    """
    coef = np.asarray(fit.coef if isinstance(fit, Fit) else fit, dtype=float)
    y, Xc = _as_problem(y, Xc)
    g = Xc.T @ (y - Xc @ coef) / y.shape[0] - lambda2 * coef
    lam = np.full(coef.shape, float(lambda1))
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        free = np.isfinite(w)
        if np.any(coef[~free] != 0):
            return float("inf")
        lam = np.where(free, lambda1 * np.where(free, w, 0.0), 0.0)
        g = np.where(free, g, 0.0)
    active = coef != 0
    viol = np.where(active, np.abs(g - lam * np.sign(coef)),
                    np.maximum(np.abs(g) - lam, 0.0))
    return float(viol.max()) if viol.size else 0.0


def fit_ols(y, Xc):
    """Least squares on centered data.  Requires ``p < m`` and full rank."""
    y, Xc = _as_problem(y, Xc)
    m, p = Xc.shape
    if p >= m:
        raise RankDeficiencyError(f"OLS needs p < m, got p={p}, m={m}")
    if p and np.linalg.matrix_rank(Xc) < p:
        raise RankDeficiencyError("OLS design is rank deficient")
    if p == 0:
        coef = np.zeros(0)
    else:
        try:
            coef = linalg.cho_solve(linalg.cho_factor(Xc.T @ Xc), Xc.T @ y)
        except linalg.LinAlgError as exc:
            raise RankDeficiencyError(f"OLS normal equations: {exc}") from None
    return Fit(coef, p + 1, 0, True, objective(coef, y, Xc, 0.0, 0.0),
               PenaltySpec("ols"))


def fit_ridge(y, Xc, lambda2):
    """Closed-form ridge ``(S + lam2 I)^{-1} X'y/m`` by Cholesky."""
    if not lambda2 > 0:
        raise ValueError(f"ridge needs lambda2 > 0, got {lambda2}")
    y, Xc = _as_problem(y, Xc)
    m, p = Xc.shape
    G, c, _ = gram_terms(y, Xc)
    G[np.diag_indices(p)] += lambda2
    try:
        coef = linalg.cho_solve(linalg.cho_factor(G, lower=True), c)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"ridge factorization failed: {exc}") from None
    if not np.all(np.isfinite(coef)):
        raise NumericalError("ridge solve produced non-finite coefficients")
    return Fit(coef, p + 1, 0, True, objective(coef, y, Xc, 0.0, lambda2),
               PenaltySpec("ridge", 0.0, float(lambda2)))


def solve_en(G, c, yy, lambda1, lambda2, beta=None, X=None, tol=TOL,
             max_sweeps=MAX_SWEEPS, trace=False):
    """Coordinate descent on the covariance form.

    Returns ``(coef, n_sweeps, converged, trace)``.  Convergence is certified
    with a gradient recomputed from scratch, so drift in the running
    gradient cannot pass for optimality.
    """
    p = c.shape[0]
    beta = np.zeros(p) if beta is None else np.array(beta, dtype=float)
    X = np.zeros((0, p)) if X is None else np.ascontiguousarray(X)
    buf = np.zeros(max_sweeps if trace else 0)
    g = c - G @ beta
    lam1, lam2 = float(lambda1), float(lambda2)
    sweeps, ok = _kernels.cd_solve(G, X, c, yy, lam1, lam2, beta, g, tol,
                                   KKT_TOL, max_sweeps, buf)
    total = traced = sweeps
    for _ in range(3):
        g = c - G @ beta
        if not ok or _kernels.kkt_from_grad(g, beta, lam1, lam2) <= KKT_TOL:
            break
        sweeps, ok = _kernels.cd_solve(G, X, c, yy, lam1, lam2, beta, g, tol,
                                       KKT_TOL, max_sweeps - total,
                                       np.zeros(0))
        total += sweeps
    ok = bool(ok) and _kernels.kkt_from_grad(c - G @ beta, beta, lam1,
                                             lam2) <= KKT_TOL
    if ok:
        # sweeps stop at a tolerance; finish with the exact solve on the
        # certified support, kept only if the certificate does not degrade
        before = _kernels.kkt_from_grad(c - G @ beta, beta, lam1, lam2)
        polished = beta.copy()
        g = c - G @ polished
        _kernels._support_step(G, X, c, yy, lam1, lam2, polished, g)
        if _kernels.kkt_from_grad(c - G @ polished, polished, lam1, lam2) <= before:
            beta = polished
    return beta, total, ok, (buf[:min(traced, buf.shape[0])] if trace else None)


def _column_scales(Xc):
    sd = np.sqrt((Xc * Xc).mean(axis=0))
    return np.where(sd > 0, sd, 1.0)


def fit_naive_en(y, Xc, lambda1, lambda2=0.0, standardize=False,
                 warm_start=None, trace=False, tol=TOL, max_sweeps=MAX_SWEEPS):
    """Naive elastic net by cyclic coordinate descent.

    ``lambda2 = 0`` gives the lasso.  With ``standardize`` the columns are
    scaled to unit variance for the fit and the coefficients mapped back.

    Returns
    -------
    Fit
        ``converged`` is False when the sweep cap was reached before the
        KKT certificate held; the caller decides what to do with it.
    """
    y, Xc = _as_problem(y, Xc)
    m, p = Xc.shape
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError("penalty weights must be nonnegative")
    if lambda1 == 0 and lambda2 == 0 and p >= m:
        raise RankDeficiencyError("unpenalized fit with p >= m is not unique")
    scale = _column_scales(Xc) if standardize else None
    Xs = Xc / scale if standardize else Xc
    G, c, yy = gram_terms(y, Xs)
    beta0 = None
    if warm_start is not None:
        beta0 = np.asarray(warm_start, dtype=float) * (scale if standardize else 1.0)
    coef, sweeps, ok, tr = solve_en(G, c, yy, lambda1, lambda2, beta0, Xs,
                                    tol, max_sweeps, trace or _DEBUG)
    if _DEBUG and tr is not None and tr.size > 1:
        assert np.all(np.diff(tr) <= 1e-12 * max(1.0, abs(tr[0]))), \
            "objective increased between sweeps"
    obj = objective(coef, y, Xs, lambda1, lambda2)
    if standardize:
        coef = coef / scale
    kind = "lasso" if lambda2 == 0 else "naive_en"
    return Fit(coef, int(np.count_nonzero(coef)) + 1, sweeps, ok, obj,
               PenaltySpec(kind, float(lambda1), float(lambda2)),
               tr if trace else None)


def rescale_en(naive, lambda2):
    """Elastic net ``(1 + lam2) * naive``; support and df are unchanged."""
    spec = naive.spec
    if spec is not None:
        spec = PenaltySpec("en", spec.lambda1, float(lambda2))
    return replace(naive, coef=(1.0 + lambda2) * naive.coef, spec=spec)


def adaptive_weights(initial):
    """``w_j = 1/|coef_j|``, infinite where the initial coefficient is zero."""
    coef = np.abs(np.asarray(
        initial.coef if isinstance(initial, Fit) else initial, dtype=float))
    if not np.any(coef > 0):
        raise NoActiveVariablesError("no active variables for adaptive stage")
    with np.errstate(divide="ignore"):
        return np.where(coef > 0, 1.0 / coef, np.inf)


def rescaled_design(Xc, weights):
    """Columns with finite weight, each divided by its weight."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or np.any(np.isnan(w)):
        raise ValueError("weights must be nonnegative")
    keep = np.flatnonzero(np.isfinite(w))
    if keep.size == 0:
        raise NoActiveVariablesError("every covariate has an infinite weight")
    if np.any(w[keep] == 0):
        raise ValueError("zero weights leave the coefficient unpenalized "
                         "and cannot be rescaled")
    return keep, np.ascontiguousarray(Xc[:, keep] / w[keep])


def fit_adaptive_lasso(y, Xc, lambda1, weights, **kw):
    """Adaptive lasso through the covariate rescaling identity.

    The lasso is fit on ``Xc[:, j] / w_j`` over the finite weights and each
    coefficient is divided by its weight.  Covariates with infinite weight
    get an exact zero.  The weights already fix the column scale, so there
    is no standardization option here.
    """
    y, Xc = _as_problem(y, Xc)
    w = np.asarray(weights, dtype=float)
    if w.shape != (Xc.shape[1],):
        raise ValueError("one weight per covariate is required")
    keep, Xw = rescaled_design(Xc, w)
    inner = fit_naive_en(y, Xw, lambda1, 0.0, **kw)
    coef = np.zeros(Xc.shape[1])
    coef[keep] = inner.coef / w[keep]
    return Fit(coef, int(np.count_nonzero(coef)) + 1, inner.n_sweeps,
               inner.converged, inner.objective,
               PenaltySpec("adaptive_lasso", float(lambda1), 0.0, w), inner.trace)
