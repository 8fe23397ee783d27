"""K-fold cross-validation over the penalty grids.

Folds are contiguous blocks of a seeded permutation.  Each training fold is
re-centered (the model has an intercept) and the held-out points are
predicted as ``ybar_train + (x - xbar_train)' b``.  The loss is the pooled
held-out squared error divided by m, and the minimum wins; among equal
losses the larger ``lambda1`` and then the larger ``lambda2`` is kept.

Paths stop early once the training R^2 exceeds ``max_r2``; only grid points
reached by every fold and by the full-data path are candidates.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import NoActiveVariablesError
from . import _kernels
from .core import (KKT_TOL, MAX_SWEEPS, TOL, Fit, PenaltySpec, _as_problem,
                   _column_scales, adaptive_weights, fit_ols, fit_ridge,
                   rescale_en, solve_en)


@dataclass(frozen=True)
class CvConfig:
    """Cross-validation protocol.

    The ridge grid runs from ``ridge_max_factor * ||X'y/m||_inf`` down by
    ``ridge_min_ratio``; when that ratio is None it is 1e-4 if ``m > p``
    and 1e-2 otherwise.
    """

    folds: int = 10
    n_lambda1: int = 100
    lambda1_min_ratio: float = 1e-3
    lambda2_grid: tuple = (0.0, 0.01, 0.1, 1.0)
    seed: int = 0
    ridge_n_lambda: int = 100
    ridge_max_factor: float = 1e3
    ridge_min_ratio: Optional[float] = None
    standardize: bool = False
    max_r2: float = 0.999

    def __post_init__(self):
        object.__setattr__(self, "lambda2_grid",
                           tuple(float(v) for v in self.lambda2_grid))
        if self.folds < 2:
            raise ValueError("folds must be at least 2")
        if self.n_lambda1 < 1 or self.ridge_n_lambda < 1:
            raise ValueError("grids must be nonempty")
        if not 0 < self.lambda1_min_ratio < 1:
            raise ValueError("lambda1_min_ratio must lie in (0, 1)")
        if self.ridge_min_ratio is not None and not 0 < self.ridge_min_ratio < 1:
            raise ValueError("ridge_min_ratio must lie in (0, 1)")
        if not self.lambda2_grid or min(self.lambda2_grid) < 0:
            raise ValueError("lambda2_grid must be nonempty and nonnegative")
        if not 0 < self.max_r2 <= 1:
            raise ValueError("max_r2 must lie in (0, 1]")


def fold_indices(m, folds, seed):
    """Split a seeded permutation of ``range(m)`` into contiguous blocks."""
    if m < folds:
        raise ValueError(f"need at least {folds} observations, got {m}")
    perm = np.random.default_rng(seed).permutation(m)
    return np.array_split(perm, folds)


def lambda1_grid(lam_max, n, ratio):
    if n == 1:
        return np.array([lam_max])
    return lam_max * np.logspace(0.0, np.log10(ratio), n)


@dataclass
class CvResult:
    """Selected penalty, refit on all data, and the loss surface.

    Unpacks as ``spec, fit``.  ``losses[i, k]`` is the loss of the k-th
    ``lambda1`` with the i-th ``lambda2``; grid points not reached by every
    path are ``inf``.
    """

    spec: PenaltySpec
    fit: Fit
    lambda1s: np.ndarray = field(repr=False)
    lambda2s: np.ndarray = field(repr=False)
    losses: np.ndarray = field(repr=False)

    def __iter__(self):
        return iter((self.spec, self.fit))


@dataclass
class _Problem:
    G: np.ndarray
    X: np.ndarray       # centered training design, only used for lam2 > 0
    c: np.ndarray
    yy: float
    XH: Optional[np.ndarray] = None   # held-out design, training-centered
    yH: Optional[np.ndarray] = None


def _subproblem(prob, keep, inv_w):
    """The same problem on columns ``keep`` scaled by ``inv_w``."""
    G = np.ascontiguousarray(prob.G[np.ix_(keep, keep)] * np.outer(inv_w, inv_w))
    XH = None if prob.XH is None else prob.XH[:, keep] * inv_w
    return _Problem(G, np.zeros((0, keep.size)), prob.c[keep] * inv_w,
                    prob.yy, XH, prob.yH)


class CrossValidator:
    """Cross-validation for one group, with fold data computed once.

    Fold Gram matrices come from downdating the full cross-product, and
    every solution path is cached, so the lasso, both elastic nets and the
    initial fit of the adaptive lasso share work.
    """

    def __init__(self, y, Xc, cv=None):
        self.cv = cv or CvConfig()
        y, Xc = _as_problem(y, Xc)
        self.m, self.p = Xc.shape
        self.folds = fold_indices(self.m, self.cv.folds, self.cv.seed)
        self.scale = _column_scales(Xc) if self.cv.standardize else None
        self.y = y
        self.X = Xc / self.scale if self.cv.standardize else Xc
        self.full = _Problem(np.ascontiguousarray(self.X.T @ self.X / self.m),
                             self.X, self.X.T @ y / self.m,
                             float(y @ y) / self.m)
        self._fold_probs = None
        self._paths = {}

    # fold data -----------------------------------------------------------

    def _build_folds(self):
        X, y, m = self.X, self.y, self.m
        S = self.full.G * m
        t = X.T @ y
        probs = []
        for hold in self.folds:
            train = np.setdiff1d(np.arange(m), hold, assume_unique=True)
            mt = train.size
            XH, yH = X[hold], y[hold]
            xbar = X[train].mean(axis=0)
            ybar = y[train].mean()
            # S_train = S - XH'XH, then remove the training mean
            G = (S - XH.T @ XH - mt * np.outer(xbar, xbar)) / mt
            G = np.ascontiguousarray((G + G.T) / 2.0)
            c = (t - XH.T @ yH - mt * xbar * ybar) / mt
            yt = y[train] - ybar
            probs.append(_Problem(G, np.ascontiguousarray(X[train] - xbar), c,
                                  float(yt @ yt) / mt, XH - xbar, yH - ybar))
        return probs

    @property
    def fold_problems(self):
        if self._fold_probs is None:
            self._fold_probs = self._build_folds()
        return self._fold_probs

    # paths ---------------------------------------------------------------

    def _run_path(self, key, probs, full, lam1s, lam2):
        ck = (key, lam2)
        if ck in self._paths:
            return self._paths[ck]
        cv = self.cv
        nl = lam1s.shape[0]
        sse_naive = np.zeros(nl)
        sse_scaled = np.zeros(nl)
        reach = nl
        for prob in probs:
            X = prob.X if lam2 > 0 else np.zeros((0, prob.c.shape[0]))
            B, done, _, _ = _kernels.cd_path(prob.G, X, prob.c, prob.yy, lam1s,
                                             float(lam2), TOL, KKT_TOL,
                                             MAX_SWEEPS, cv.max_r2)
            reach = min(reach, done)
            pred = prob.XH @ B.T
            sse_naive += ((prob.yH[:, None] - pred) ** 2).sum(axis=0)
            sse_scaled += ((prob.yH[:, None] - (1.0 + lam2) * pred) ** 2).sum(axis=0)
        X = full.X if lam2 > 0 else np.zeros((0, full.c.shape[0]))
        B, done, sweeps, _ = _kernels.cd_path(full.G, X, full.c, full.yy,
                                              lam1s, float(lam2), TOL, KKT_TOL,
                                              MAX_SWEEPS, cv.max_r2)
        reach = min(reach, done)
        out = (B, reach, sweeps, sse_naive / self.m, sse_scaled / self.m)
        self._paths[ck] = out
        return out

    def _select(self, key, probs, full, lam2s, rescaled):
        cv = self.cv
        lam_max = float(np.abs(full.c).max()) if full.c.size else 0.0
        lam2s = np.asarray(lam2s, dtype=float)
        if lam_max == 0.0:
            # X'y = 0: the zero vector solves every grid point
            lam1s = np.zeros(1)
            losses = np.full((lam2s.size, 1), float(self.y @ self.y) / self.m)
            return (lam1s, lam2s, losses, (int(np.argmax(lam2s)), 0),
                    np.zeros(full.c.size), 0)
        lam1s = lambda1_grid(lam_max, cv.n_lambda1, cv.lambda1_min_ratio)
        losses = np.full((lam2s.size, lam1s.size), np.inf)
        paths = []
        for i, lam2 in enumerate(lam2s):
            B, reach, sweeps, naive, scaled = self._run_path(
                key, probs, full, lam1s, float(lam2))
            paths.append((B, sweeps))
            losses[i, :reach] = (scaled if rescaled else naive)[:reach]
        best = None
        best_loss = np.inf
        # larger lambda1 first, then larger lambda2, strict improvement only
        order = np.argsort(-lam2s, kind="stable")
        for k in range(lam1s.size):
            for i in order:
                if losses[i, k] < best_loss:
                    best_loss = losses[i, k]
                    best = (i, k)
        i, k = best
        B, sweeps = paths[i]
        return lam1s, lam2s, losses, best, B[k], sweeps

    def _refit(self, full, lam1, lam2, start, path_sweeps):
        coef, sweeps, ok, _ = solve_en(full.G, full.c, full.yy, lam1, lam2,
                                       start, full.X if lam2 > 0 else None)
        return coef, path_sweeps + sweeps, ok

    def _unscale(self, coef):
        return coef / self.scale if self.scale is not None else coef

    def _fit(self, coef, lam1, lam2, sweeps, ok, kind):
        obj = _objective_naive(coef, self.full, lam1, lam2)
        coef = self._unscale(coef)
        return Fit(coef, int(np.count_nonzero(coef)) + 1, sweeps, ok, obj,
                   PenaltySpec(kind, lam1, lam2))

    # public selections ---------------------------------------------------

    def elastic_net(self, kind="en", lambda2_grid=None):
        """Select (lambda1, lambda2) for ``lasso``, ``naive_en`` or ``en``.

        For ``en`` the held-out loss uses the rescaled coefficients
        ``(1 + lambda2) b``; the returned fit is rescaled as well.
        """
        if kind not in ("lasso", "naive_en", "en"):
            raise ValueError(f"not an elastic-net kind: {kind!r}")
        grid = (0.0,) if kind == "lasso" else (
            self.cv.lambda2_grid if lambda2_grid is None else lambda2_grid)
        lam1s, lam2s, losses, (i, k), start, sweeps = self._select(
            "plain", self.fold_problems, self.full, grid, kind == "en")
        lam1, lam2 = float(lam1s[k]), float(lam2s[i])
        coef, sweeps, ok = self._refit(self.full, lam1, lam2, start, sweeps)
        fit = self._fit(coef, lam1, lam2, sweeps, ok,
                        "lasso" if kind == "lasso" else "naive_en")
        if kind == "en":
            fit = rescale_en(fit, lam2)
        return CvResult(fit.spec, fit, lam1s, lam2s, losses)

    def naive_and_rescaled(self):
        """One selection shared by the naive and rescaled elastic net.

        Selection uses the rescaled loss.  Returns ``(naive_fit, en_fit)``.
        """
        res = self.elastic_net("en")
        lam2 = res.spec.lambda2
        naive = Fit(res.fit.coef / (1.0 + lam2), res.fit.df, res.fit.n_sweeps,
                    res.fit.converged, res.fit.objective,
                    PenaltySpec("naive_en", res.spec.lambda1, lam2))
        return naive, res

    def initial_for_adaptive(self):
        """OLS when ``p < m/2``, otherwise the cross-validated lasso."""
        if self.p < self.m / 2:
            fit = fit_ols(self.y, self.X)
            fit.coef = self._unscale(fit.coef)
            return fit
        return self.elastic_net("lasso").fit

    def adaptive_lasso(self, weights=None):
        """Cross-validated adaptive lasso.

        Weights default to ``1/|initial|`` from `initial_for_adaptive`.
        When standardizing, weights are on the standardized scale.
        """
        if weights is None:
            weights = adaptive_weights(self._initial_coef())
        w = np.asarray(weights, dtype=float)
        if w.shape != (self.p,):
            raise ValueError("one weight per covariate is required")
        keep = np.flatnonzero(np.isfinite(w))
        if keep.size == 0:
            raise NoActiveVariablesError("every covariate has an infinite weight")
        inv_w = 1.0 / w[keep]
        key = ("adaptive", w.tobytes())
        probs = [_subproblem(pr, keep, inv_w) for pr in self.fold_problems]
        full = _subproblem(self.full, keep, inv_w)
        lam1s, lam2s, losses, (i, k), start, sweeps = self._select(
            key, probs, full, (0.0,), False)
        lam1 = float(lam1s[k])
        inner, sweeps, ok = self._refit(full, lam1, 0.0, start, sweeps)
        coef = np.zeros(self.p)
        coef[keep] = inner * inv_w
        obj = _objective_naive(inner, full, lam1, 0.0)
        coef = self._unscale(coef)
        spec = PenaltySpec("adaptive_lasso", lam1, 0.0, w)
        fit = Fit(coef, int(np.count_nonzero(coef)) + 1, sweeps, ok, obj, spec)
        return CvResult(spec, fit, lam1s, lam2s, losses)

    def _initial_coef(self):
        if self.p < self.m / 2:
            return fit_ols(self.y, self.X).coef
        res = self.elastic_net("lasso")
        coef = res.fit.coef
        return coef * self.scale if self.scale is not None else coef

    def ridge(self):
        """Select ``lambda2`` for ridge over a log grid; refit by Cholesky."""
        cv = self.cv
        lam_max = float(np.abs(self.full.c).max()) if self.p else 0.0
        ratio = cv.ridge_min_ratio
        if ratio is None:
            ratio = 1e-4 if self.m > self.p else 1e-2
        top = cv.ridge_max_factor * (lam_max if lam_max > 0 else 1.0)
        lams = lambda1_grid(top, cv.ridge_n_lambda, ratio)
        sse = np.zeros(lams.size)
        for prob in self.fold_problems:
            mt = prob.X.shape[0]
            U, s, Vt = np.linalg.svd(prob.X, full_matrices=False)
            # X'y/m for the training fold is c, so U'y = V'c m / s
            keep = s > s[0] * 1e-12 if s.size else s > 0
            U, s, Vt = U[:, keep], s[keep], Vt[keep]
            u = (Vt @ prob.c) * mt / s
            A = prob.XH @ Vt.T
            F = (s * u)[:, None] / (s[:, None] ** 2 + mt * lams[None, :])
            sse += ((prob.yH[:, None] - A @ F) ** 2).sum(axis=0)
        losses = sse / self.m
        k = int(np.argmin(losses))   # first minimum is the largest lambda
        fit = fit_ridge(self.y, self.X, float(lams[k]))
        if self.scale is not None:
            fit.coef = fit.coef / self.scale
        return CvResult(fit.spec, fit, np.zeros(1), lams, losses[None, :])


def _objective_naive(coef, prob, lam1, lam2):
    # yy/2 - c'b + b'Gb/2 + penalty on the covariance form
    return float(0.5 * prob.yy - prob.c @ coef + 0.5 * coef @ prob.G @ coef
                 + lam1 * np.abs(coef).sum() + 0.5 * lam2 * coef @ coef)


def cross_validate(y, Xc, kind, cv=None, weights=None):
    """Cross-validated fit of one penalty kind.

    Parameters
    ----------
    y, Xc : array_like
        Group-centered response and design.
    kind : {'lasso', 'naive_en', 'en', 'adaptive_lasso', 'ridge'}
    cv : CvConfig, optional
    weights : array_like, optional
        Adaptive weights; computed from the initial fit when omitted.

    Returns
    -------
    CvResult
        Unpacks as ``(spec, fit)``.
    """
    val = CrossValidator(y, Xc, cv)
    if kind == "ridge":
        return val.ridge()
    if kind == "adaptive_lasso":
        return val.adaptive_lasso(weights)
    if kind in ("lasso", "naive_en", "en"):
        return val.elastic_net(kind)
    raise ValueError(f"cannot cross-validate {kind!r}")
