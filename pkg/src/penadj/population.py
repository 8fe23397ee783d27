"""Finite-population model, projection decomposition and theoretical variances.

Potential outcomes ``a`` (treatment) and ``b`` (control) and the covariates
are fixed constants; all randomness comes from the assignment.  Population
variances use the ``n - 1`` denominator throughout.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import RankDeficiencyError

CENTER_TOL = 1e-10


def center_covariates(X_raw):
    """Subtract column means.

    Parameters
    ----------
    X_raw : array_like, shape (n, p)

    Returns
    -------
    ndarray
        Copy of `X_raw` with every column mean equal to zero.
    """
    X = np.array(X_raw, dtype=float, copy=True)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("cannot center an empty covariate matrix")
    if X.shape[1]:
        X -= X.mean(axis=0)
    return X


@dataclass(frozen=True)
class FinitePopulation:
    """Fixed potential outcomes and column-centered covariates.

    Use `FinitePopulation.from_raw` when the covariates are not yet centered.
    """

    a: np.ndarray
    b: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).ravel()
        b = np.asarray(self.b, dtype=float).ravel()
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if not (a.shape[0] == b.shape[0] == X.shape[0]):
            raise ValueError(
                f"length mismatch: a={a.shape[0]}, b={b.shape[0]}, "
                f"X rows={X.shape[0]}")
        if a.shape[0] < 2:
            raise ValueError("a population needs at least 2 units")
        if X.shape[1] and np.abs(X.mean(axis=0)).max() > CENTER_TOL * max(
                1.0, np.abs(X).max()):
            raise ValueError("covariate columns must be centered")
        for name, arr in (("a", a), ("b", b), ("X", X)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_raw(cls, a, b, X_raw):
        return cls(a, b, center_covariates(X_raw))

    @property
    def n(self):
        return self.a.shape[0]

    @property
    def p(self):
        return self.X.shape[1]


def true_ace(pop):
    """Average causal effect ``mean(a) - mean(b)`` over the population."""
    return float(pop.a.mean() - pop.b.mean())


@dataclass(frozen=True)
class Decomposition:
    """``a = abar + X beta_a + e_a`` and likewise for ``b``.

    ``min_norm`` records whether the Gram matrix was singular and the
    minimum-norm least-squares coefficients were used.
    """

    beta_a: np.ndarray
    beta_b: np.ndarray
    e_a: np.ndarray
    e_b: np.ndarray
    abar: float
    bbar: float
    min_norm: bool = False


def _project(v, X):
    vbar = float(v.mean())
    if X.shape[1] == 0:
        return np.zeros(0), v - vbar, vbar
    beta = np.linalg.lstsq(X, v - vbar, rcond=None)[0]
    return beta, v - vbar - X @ beta, vbar


def project_decomposition(pop, allow_min_norm=True):
    """Project both outcome vectors on all covariate columns.

    Parameters
    ----------
    pop : FinitePopulation
    allow_min_norm : bool
        When the Gram matrix ``X'X`` is singular (always the case for
        ``p >= n``) use the minimum-norm least-squares solution.  With the
        fallback disabled a singular Gram matrix raises
        `RankDeficiencyError`.

    Returns
    -------
    Decomposition
    """
    X = pop.X
    singular = bool(X.shape[1]) and np.linalg.matrix_rank(X) < X.shape[1]
    if singular and not allow_min_norm:
        raise RankDeficiencyError(
            f"covariate Gram matrix is singular (n={pop.n}, p={pop.p})")
    beta_a, e_a, abar = _project(pop.a, X)
    beta_b, e_b, bbar = _project(pop.b, X)
    return Decomposition(beta_a, beta_b, e_a, e_b, abar, bbar, singular)


@dataclass(frozen=True)
class TheoreticalVariances:
    p_A: float
    sigma2_e_a: float
    sigma2_e_b: float
    sigma2_e_diff: float
    sigma2_pen: float
    sigma2_unadj: float
    beta_E: np.ndarray = field(repr=False)
    delta: float


def _var(v):
    return float(np.var(v, ddof=1))


def neyman_variance(u, v, p_A):
    """``var(u)/p_A + var(v)/(1-p_A) - var(u-v)`` with n-1 denominators."""
    return _var(u) / p_A + _var(v) / (1.0 - p_A) - _var(u - v)


def theoretical_variances(decomp, pop, p_A):
    """Asymptotic variances of the adjusted and unadjusted estimators.

    ``sigma2_pen`` uses the projection errors, ``sigma2_unadj`` the raw
    outcomes.  ``delta = -var(X beta_E)`` with
    ``beta_E = (1 - p_A) beta_a + p_A beta_b``, so that
    ``sigma2_unadj - sigma2_pen = -delta / (p_A (1 - p_A))``.
    """
    p_A = float(p_A)
    if not 0.0 < p_A < 1.0:
        raise ValueError(f"p_A must lie in (0, 1), got {p_A}")
    s_a = _var(decomp.e_a)
    s_b = _var(decomp.e_b)
    s_diff = _var(decomp.e_a - decomp.e_b)
    beta_E = (1.0 - p_A) * decomp.beta_a + p_A * decomp.beta_b
    delta = -_var(pop.X @ beta_E) if pop.p else 0.0
    return TheoreticalVariances(
        p_A=p_A,
        sigma2_e_a=s_a,
        sigma2_e_b=s_b,
        sigma2_e_diff=s_diff,
        sigma2_pen=s_a / p_A + s_b / (1.0 - p_A) - s_diff,
        sigma2_unadj=neyman_variance(pop.a, pop.b, p_A),
        beta_E=beta_E,
        delta=delta,
    )


def write_population_csv(pop, path):
    """Write ``a,b,x1..xp`` rows; floats use the shortest round-trip text."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["a", "b"] + [f"x{j + 1}" for j in range(pop.p)])
        for i in range(pop.n):
            w.writerow([repr(float(pop.a[i])), repr(float(pop.b[i]))]
                       + [repr(float(v)) for v in pop.X[i]])


def read_population_csv(path, center=True):
    """Load a population written by `write_population_csv`.

    Covariates are re-centered by default so hand-made files need not be
    centered already.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header[:2] != ["a", "b"]:
        raise ValueError(f"{path}:1: header must start with a,b")
    width = len(header)
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise ValueError(
                f"{path}:{lineno}: expected {width} fields, got {len(row)}")
        try:
            data.append([float(v) for v in row])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    arr = np.array(data, dtype=float).reshape(len(data), width)
    X = arr[:, 2:]
    if center:
        return FinitePopulation.from_raw(arr[:, 0], arr[:, 1], X)
    return FinitePopulation(arr[:, 0], arr[:, 1], X)
