"""Simulation populations: a sparse linear signal plus a mild exponential term.

For each unit ``a_i = x_i'beta_a + exp(0.15 x_i'beta_a) + eps_a`` and the
same with ``beta_b`` for ``b_i``.  Everything is drawn once from one seeded
stream in the order covariates, coefficients, errors; covariates are
centered after the outcomes are computed.

Examples 1 and 2 use AR(1) correlation 0.85, example 3 equicorrelation 0.75,
example 4 three latent factors each shared by a block of five columns.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import linalg

from .errors import NumericalError
from .population import FinitePopulation

EXP_SCALE = 0.15
FACTOR_NOISE_SD = 0.1       # N(0, 0.01) idiosyncratic noise
BLOCK = 5

_DEFAULTS = {1: (10, 3.0), 2: (10, 3.0), 3: (10, 3.0), 4: (15, 2.0)}


@dataclass(frozen=True)
class ExampleSpec:
    """Which example to draw and at what size.

    ``s`` and ``sigma_noise`` default to the example's own values (10 and 3
    for examples 1-3, 15 and 2 for example 4).
    """

    example_id: int
    n: int = 200
    p: int = 50
    s: Optional[int] = None
    sigma_noise: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.example_id not in _DEFAULTS:
            raise ValueError(f"example_id must be 1-4, got {self.example_id}")
        s_def, sig_def = _DEFAULTS[self.example_id]
        if self.s is None:
            object.__setattr__(self, "s", s_def)
        if self.sigma_noise is None:
            object.__setattr__(self, "sigma_noise", sig_def)
        if self.n < 2 or self.p < 1:
            raise ValueError("need n >= 2 and p >= 1")
        if not 0 <= self.s <= self.p:
            raise ValueError(f"need 0 <= s <= p, got s={self.s}, p={self.p}")
        if self.example_id == 4 and (self.p < 3 * BLOCK or self.s > 3 * BLOCK):
            raise ValueError("example 4 needs p >= 15 and s <= 15")
        if self.sigma_noise < 0:
            raise ValueError("sigma_noise must be nonnegative")


def covariance_matrix(example_id, p):
    """Population covariance of the covariates for an example."""
    idx = np.arange(p)
    if example_id in (1, 2):
        return 0.85 ** np.abs(idx[:, None] - idx[None, :])
    if example_id == 3:
        S = np.full((p, p), 0.75)
        np.fill_diagonal(S, 1.0)
        return S
    if example_id == 4:
        S = np.eye(p)
        for g in range(3):
            blk = slice(g * BLOCK, (g + 1) * BLOCK)
            S[blk, blk] = 1.0
        S[idx[:3 * BLOCK], idx[:3 * BLOCK]] += FACTOR_NOISE_SD ** 2
        return S
    raise ValueError(f"example_id must be 1-4, got {example_id}")


class Draw(NamedTuple):
    population: FinitePopulation
    beta_a: np.ndarray
    beta_b: np.ndarray
    X_raw: np.ndarray


def _covariates(spec, rng):
    n, p = spec.n, spec.p
    if spec.example_id == 4:
        Z = rng.standard_normal((n, 3 + p))
        W, X = Z[:, :3], Z[:, 3:].copy()
        X[:, :3 * BLOCK] *= FACTOR_NOISE_SD
        X[:, :3 * BLOCK] += np.repeat(W, BLOCK, axis=1)
        return X
    S = covariance_matrix(spec.example_id, p)
    try:
        L = linalg.cholesky(S, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"covariance factorization failed: {exc}") from None
    return rng.standard_normal((n, p)) @ L.T


def _coefficients(spec, rng):
    p, s = spec.p, spec.s
    beta_a = np.zeros(p)
    beta_b = np.zeros(p)
    if spec.example_id in (1, 3):
        beta_a[:s] = 0.5
        beta_b[:s] = 0.25
    elif spec.example_id == 2:
        beta_a[:s] = rng.uniform(0.0, 1.0, s)
        beta_b[:s] = rng.uniform(0.0, 1.0, s)
    else:
        beta_a[:s] = np.array([0.5, 0.75, 1.0]).repeat(BLOCK)[:s]
        beta_b[:s] = beta_a[:s] - 0.25
    return beta_a, beta_b


def draw(spec):
    """Population together with its generating coefficients."""
    rng = np.random.default_rng(spec.seed)
    X = _covariates(spec, rng)
    beta_a, beta_b = _coefficients(spec, rng)
    eps_a = rng.standard_normal(spec.n) * spec.sigma_noise
    eps_b = rng.standard_normal(spec.n) * spec.sigma_noise
    lin_a = X @ beta_a
    lin_b = X @ beta_b
    a = lin_a + np.exp(EXP_SCALE * lin_a) + eps_a
    b = lin_b + np.exp(EXP_SCALE * lin_b) + eps_b
    return Draw(FinitePopulation.from_raw(a, b, X), beta_a, beta_b, X)


def generate(spec):
    """Draw the fixed population of an example."""
    return draw(spec).population
