"""Average-causal-effect estimators for a completely randomized experiment.

Each estimator returns an `AceEstimate` carrying the point estimate, a
Neyman-type conservative estimate of the asymptotic variance of
``sqrt(n) (tau_hat - tau)`` and the matching normal confidence interval.
"""

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Optional

import numpy as np

from .errors import DegenerateDfError, PenadjError
from .solvers import CrossValidator, CvConfig, Fit, fit_ols

METHODS = ("unadjust", "ols", "lasso", "en", "naive_en", "adaptive_lasso", "ridge")
DF_RULES = ("df_adjusted", "unadjusted", "minus_one")


@dataclass(frozen=True)
class Assignment:
    """Indices of the treated units, sorted, out of ``n`` units."""

    treated: np.ndarray
    n: int

    def __post_init__(self):
        t = np.unique(np.asarray(self.treated, dtype=np.int64))
        if t.size != np.asarray(self.treated).size:
            raise ValueError("treated indices must be distinct")
        if t.size and (t[0] < 0 or t[-1] >= self.n):
            raise ValueError("treated index out of range")
        if not 2 <= t.size <= self.n - 2:
            raise ValueError(
                f"need 2 <= n_A <= n - 2, got n_A={t.size}, n={self.n}")
        t.setflags(write=False)
        object.__setattr__(self, "treated", t)

    @property
    def n_A(self):
        return int(self.treated.size)

    @property
    def n_B(self):
        return self.n - self.n_A

    @property
    def mask(self):
        m = np.zeros(self.n, dtype=bool)
        m[self.treated] = True
        return m


class ObservedExperiment:
    """What the analyst sees: outcomes, treatment indicators, covariates.

    Build from a population with `from_population`; the unobserved
    potential outcomes are not kept.
    """

    def __init__(self, Y, treated, X):
        Y = np.asarray(Y, dtype=float).ravel()
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] != Y.shape[0]:
            raise ValueError("Y and X disagree on the number of units")
        treated = np.asarray(treated)
        if treated.dtype == bool:
            if treated.shape != Y.shape:
                raise ValueError("treatment mask has the wrong length")
            treated = np.flatnonzero(treated)
        self.assignment = Assignment(treated, Y.shape[0])
        self.Y = Y
        self.X = X
        self.mask = self.assignment.mask

    @classmethod
    def from_population(cls, pop, assignment):
        if isinstance(assignment, Assignment):
            mask = assignment.mask
        elif np.asarray(assignment).dtype == bool:
            mask = np.asarray(assignment)
            Assignment(np.flatnonzero(mask), pop.n)
        else:
            mask = Assignment(assignment, pop.n).mask
        Y = np.where(mask, pop.a, pop.b)
        return cls(Y, mask, pop.X)

    @property
    def n(self):
        return self.Y.shape[0]

    @property
    def n_A(self):
        return self.assignment.n_A

    @property
    def n_B(self):
        return self.assignment.n_B

    def group(self, which):
        """``(Y, X)`` rows of group ``'A'`` (treated) or ``'B'`` (control)."""
        sel = self.mask if which == "A" else ~self.mask
        return self.Y[sel], self.X[sel]

    def centered_group(self, which):
        """Group rows centered at their own group means."""
        y, X = self.group(which)
        return y - y.mean(), X - X.mean(axis=0)


@dataclass
class AceEstimate:
    """One estimator's output.  ``error`` is set when the method failed."""

    method: str
    tau_hat: float
    sigma2_hat: float
    ci_low: float
    ci_high: float
    df_a: int
    df_b: int
    fit_a: Optional[Fit] = None
    fit_b: Optional[Fit] = None
    error: Optional[str] = None

    @classmethod
    def failed(cls, method, message):
        nan = float("nan")
        return cls(method, nan, nan, nan, nan, 0, 0, error=message)

    @property
    def ok(self):
        return self.error is None

    def to_dict(self):
        d = {"method": self.method, "tau_hat": self.tau_hat,
             "sigma2_hat": self.sigma2_hat, "ci_low": self.ci_low,
             "ci_high": self.ci_high, "df_a": self.df_a, "df_b": self.df_b}
        if self.error is not None:
            d["error"] = self.error
        return d


def normal_quantile(prob):
    return NormalDist().inv_cdf(prob)


def confidence_interval(tau_hat, sigma2_hat, n, level=0.95):
    """``tau_hat -/+ z_{(1+level)/2} sqrt(sigma2_hat / n)``."""
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    if sigma2_hat < 0:
        raise ValueError("variance estimate must be nonnegative")
    half = normal_quantile((1.0 + level) / 2.0) * math.sqrt(sigma2_hat / n)
    return tau_hat - half, tau_hat + half


def _estimate(method, obs, tau, sigma2, df_a, df_b, level, fit_a=None, fit_b=None):
    lo, hi = confidence_interval(tau, sigma2, obs.n, level)
    return AceEstimate(method, float(tau), float(sigma2), lo, hi, int(df_a),
                       int(df_b), fit_a, fit_b)


def difference_in_means(obs, level=0.95):
    """``Ybar_A - Ybar_B`` with the Neyman variance ``(n/n_A) s2_A + (n/n_B) s2_B``."""
    yA, _ = obs.group("A")
    yB, _ = obs.group("B")
    if yA.size < 2 or yB.size < 2:
        raise DegenerateDfError("each group needs at least 2 units")
    n = obs.n
    sigma2 = n / yA.size * np.var(yA, ddof=1) + n / yB.size * np.var(yB, ddof=1)
    return _estimate("unadjust", obs, yA.mean() - yB.mean(), sigma2, 1, 1, level)


def adjusted_ace(obs, beta_a_hat, beta_b_hat):
    """``[Ybar_A - xbar_A' beta_a] - [Ybar_B - xbar_B' beta_b]``.

    The population covariate mean is zero, so no further shift is needed.
    """
    yA, XA = obs.group("A")
    yB, XB = obs.group("B")
    beta_a_hat = np.asarray(beta_a_hat, dtype=float)
    beta_b_hat = np.asarray(beta_b_hat, dtype=float)
    return float((yA.mean() - XA.mean(axis=0) @ beta_a_hat)
                 - (yB.mean() - XB.mean(axis=0) @ beta_b_hat))


def _coef(f):
    return f.coef if isinstance(f, Fit) else np.asarray(f, dtype=float)


def group_residual_variance(obs, which, fit, df_rule="df_adjusted"):
    """``RSS / (n_z - d)`` of the group-centered regression."""
    if df_rule not in DF_RULES:
        raise ValueError(f"unknown df rule {df_rule!r}")
    y, X = obs.centered_group(which)
    coef = _coef(fit)
    r = y - X @ coef
    if df_rule == "df_adjusted":
        d = fit.df if isinstance(fit, Fit) else int(np.count_nonzero(coef)) + 1
    else:
        d = 1 if df_rule == "minus_one" else 0
    if y.size - d <= 0:
        raise DegenerateDfError(
            f"group {which}: {y.size} units but {d} degrees of freedom")
    return float(r @ r) / (y.size - d)


def conservative_variance(obs, fit_a, fit_b, df_rule="df_adjusted"):
    """``(n/n_A) s2_eA + (n/n_B) s2_eB`` from the group residuals.

    Parameters
    ----------
    fit_a, fit_b : Fit or array_like
        Fitted adjustment vectors.  Under ``df_adjusted`` a `Fit` supplies
        its own df (``p + 1`` for OLS); a bare vector uses
        ``||coef||_0 + 1``.
    df_rule : {'df_adjusted', 'unadjusted', 'minus_one'}
        Residual degrees of freedom subtracted: the fit's df, none, or one.
    """
    n = obs.n
    return (n / obs.n_A * group_residual_variance(obs, "A", fit_a, df_rule)
            + n / obs.n_B * group_residual_variance(obs, "B", fit_b, df_rule))


class _GroupFits:
    """Per-group fits shared between methods of one observation."""

    def __init__(self, obs, cv):
        self.obs = obs
        self.cv = cv or CvConfig()
        self._val = {}
        self._cache = {}

    def validator(self, which):
        if which not in self._val:
            y, X = self.obs.centered_group(which)
            self._val[which] = CrossValidator(y, X, self.cv)
        return self._val[which]

    def fit(self, which, kind):
        key = (which, kind)
        if key in self._cache:
            return self._cache[key]
        try:
            fit = self._fit(which, kind)
        except (PenadjError, ValueError, np.linalg.LinAlgError) as exc:
            exc.args = (f"group {which}: {exc}",)
            exc.group = which
            raise
        self._cache[key] = fit
        return fit

    def _fit(self, which, kind):
        if kind == "ols":
            y, X = self.obs.centered_group(which)
            return fit_ols(y, X)
        val = self.validator(which)
        if kind == "ridge":
            return val.ridge().fit
        if kind == "lasso":
            return val.elastic_net("lasso").fit
        if kind in ("en", "naive_en"):
            naive, res = val.naive_and_rescaled()
            self._cache[(which, "naive_en")] = naive
            self._cache[(which, "en")] = res.fit
            return self._cache[(which, kind)]
        if kind == "adaptive_lasso":
            return val.adaptive_lasso().fit
        raise ValueError(f"unknown adjustment kind {kind!r}")


def fit_group_adjustments(obs, kind, cv=None):
    """Fit the adjustment separately in the treated and control groups.

    Each group is centered at its own means and gets its own
    cross-validated tuning.  Returns ``(fit_a, fit_b)``.
    """
    fits = _GroupFits(obs, cv)
    return fits.fit("A", kind), fits.fit("B", kind)


_DF_RULE = {"ols": "df_adjusted", "lasso": "df_adjusted", "en": "df_adjusted",
            "naive_en": "df_adjusted", "adaptive_lasso": "df_adjusted",
            "ridge": "minus_one"}


def estimate_all(obs, methods=METHODS, cv=None, level=0.95):
    """Run every requested estimator on one observed experiment.

    A failing method yields an `AceEstimate` with ``error`` set and NaN
    values; the other methods are unaffected.  The naive and rescaled
    elastic nets share one selection, and the lasso fit is reused as the
    adaptive lasso's initial estimator in high dimension.
    """
    fits = _GroupFits(obs, cv)
    out = []
    for method in methods:
        try:
            if method == "unadjust":
                out.append(difference_in_means(obs, level))
                continue
            if method not in _DF_RULE:
                raise ValueError(f"unknown method {method!r}")
            fa, fb = fits.fit("A", method), fits.fit("B", method)
            tau = adjusted_ace(obs, fa.coef, fb.coef)
            sigma2 = conservative_variance(obs, fa, fb, _DF_RULE[method])
            out.append(_estimate(method, obs, tau, sigma2, fa.df, fb.df, level,
                                 fa, fb))
        except (PenadjError, ValueError, np.linalg.LinAlgError) as exc:
            out.append(AceEstimate.failed(method, f"{type(exc).__name__}: {exc}"))
    return out
