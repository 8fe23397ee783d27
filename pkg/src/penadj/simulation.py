"""Monte Carlo over completely randomized assignments of a fixed population.

Replication ``r`` draws its assignment from a generator seeded with
``replication_seed(base_seed, r)``, so any single replication can be re-run
in isolation and parallel runs give the same records as serial ones.
"""

import csv
import hashlib
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .dgp import ExampleSpec, generate
from .errors import BudgetExceededError
from .estimators import (METHODS, Assignment, ObservedExperiment,
                         estimate_all, normal_quantile)
from .population import FinitePopulation, read_population_csv, true_ace
from .solvers import CvConfig

MASK64 = (1 << 64) - 1
ENUMERATION_BUDGET = 1_000_000
WORKERS_ENV = "PENADJ_WORKERS"
METRICS = ("bias2", "variance", "mse", "coverage", "mean_length")


def splitmix64(x):
    """One SplitMix64 step: add the golden-ratio increment, then finalize."""
    z = (int(x) + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def replication_seed(base_seed, rep):
    """``splitmix64(splitmix64(base_seed) XOR rep)`` as an unsigned 64-bit int."""
    return splitmix64(splitmix64(int(base_seed) & MASK64) ^ (int(rep) & MASK64))


def draw_assignment(n, n_A, rng):
    """Uniform treated set of size `n_A` by a partial Fisher-Yates shuffle.

    Parameters
    ----------
    rng : numpy.random.Generator or int
        An integer is used as a seed.
    """
    if not 2 <= n_A <= n - 2:
        raise ValueError(f"need 2 <= n_A <= n - 2, got n_A={n_A}, n={n}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    idx = np.arange(n)
    for i in range(n_A):
        j = i + int(rng.integers(n - i))
        idx[i], idx[j] = idx[j], idx[i]
    return Assignment(np.sort(idx[:n_A]), n)


def assignment_digest(assignment):
    data = np.asarray(assignment.treated, dtype="<i8").tobytes()
    return hashlib.sha256(data).hexdigest()[:16]


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation scenario.

    ``population`` is an `ExampleSpec`, a CSV path, or a ready
    `FinitePopulation`.
    """

    population: Union[ExampleSpec, str, FinitePopulation]
    n_A: int
    methods: tuple = METHODS
    replications: int = 1000
    base_seed: int = 0
    cv: CvConfig = field(default_factory=CvConfig)
    ci_level: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not 0 < self.ci_level < 1:
            raise ValueError("ci_level must lie in (0, 1)")

    def load_population(self):
        src = self.population
        if isinstance(src, FinitePopulation):
            pop = src
        elif isinstance(src, ExampleSpec):
            pop = generate(src)
        else:
            pop = read_population_csv(os.fspath(src))
        if not 2 <= self.n_A <= pop.n - 2:
            raise ValueError(f"need 2 <= n_A <= n - 2, got n_A={self.n_A}, n={pop.n}")
        return pop


@dataclass
class ReplicationRecord:
    rep_index: int
    estimates: list
    assignment_digest: str

    def estimate(self, method):
        for e in self.estimates:
            if e.method == method:
                return e
        raise KeyError(method)


def run_one(pop, config, rep, keep_fits=False):
    """Replication ``rep`` of a scenario, reproducible on its own."""
    rng = np.random.default_rng(replication_seed(config.base_seed, rep))
    asg = draw_assignment(pop.n, config.n_A, rng)
    obs = ObservedExperiment.from_population(pop, asg)
    ests = estimate_all(obs, config.methods, config.cv, config.ci_level)
    if not keep_fits:
        for e in ests:
            e.fit_a = e.fit_b = None
    return ReplicationRecord(rep, ests, assignment_digest(asg))


_WORKER = {}


def _init_worker(pop, config):
    _WORKER["pop"] = pop
    _WORKER["config"] = config


def _run_chunk(reps):
    return [run_one(_WORKER["pop"], _WORKER["config"], r) for r in reps]


def worker_count(workers=None):
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    return max(1, int(workers))


def run_replications(config, workers=None, population=None, progress=None):
    """All replications of a scenario, ordered by replication index.

    Parameters
    ----------
    workers : int, optional
        Process count; defaults to the ``PENADJ_WORKERS`` environment
        variable, else 1.  Output does not depend on it.
    population : FinitePopulation, optional
        Skip loading when the caller already has the population.
    progress : callable, optional
        Called with the number of finished replications.
    """
    pop = population if population is not None else config.load_population()
    R = config.replications
    workers = worker_count(workers)
    if workers == 1 or R == 1:
        out = []
        for r in range(R):
            out.append(run_one(pop, config, r))
            if progress:
                progress(r + 1)
        return out
    size = max(1, min(25, math.ceil(R / (4 * workers))))
    chunks = [range(s, min(R, s + size)) for s in range(0, R, size)]
    out = []
    with ProcessPoolExecutor(workers, initializer=_init_worker,
                             initargs=(pop, config)) as ex:
        for recs in ex.map(_run_chunk, chunks):
            out.extend(recs)
            if progress:
                progress(len(out))
    return out


# exact enumeration ---------------------------------------------------------

@dataclass
class ExactMoments:
    """Moments of each estimator over every assignment (1/N variance)."""

    method: str
    mean: float
    variance: float
    coverage: float
    count: int


@dataclass
class EnumerationResult:
    n: int
    n_A: int
    count: int
    tau: float
    neyman_variance: float
    moments: dict

    @property
    def identity_residual(self):
        """Enumerated minus closed-form variance of the unadjusted estimator."""
        return self.moments["unadjust"].variance - self.neyman_variance


def _combinations(n, k):
    count = math.comb(n, k)
    idx = np.fromiter(itertools.chain.from_iterable(
        itertools.combinations(range(n), k)), dtype=np.int64, count=count * k)
    return idx.reshape(count, k)


def enumerate_assignments(pop, n_A, methods=("unadjust",), cv=None, level=0.95,
                          budget=ENUMERATION_BUDGET):
    """Exact mean, variance and coverage over all ``C(n, n_A)`` assignments.

    Subsets are visited in lexicographic order.  The unadjusted estimator
    is evaluated in vectorized form; other methods run per assignment.
    """
    n = pop.n
    if not 2 <= n_A <= n - 2:
        raise ValueError(f"need 2 <= n_A <= n - 2, got n_A={n_A}, n={n}")
    count = math.comb(n, n_A)
    if count > budget:
        raise BudgetExceededError(count, budget)
    tau = true_ace(pop)
    n_B = n - n_A
    combos = _combinations(n, n_A)
    moments = {}
    z = normal_quantile((1.0 + level) / 2.0)
    for method in methods:
        if method == "unadjust":
            sa, sb = pop.a[combos].sum(1), pop.b.sum() - pop.b[combos].sum(1)
            qa = (pop.a[combos] ** 2).sum(1)
            qb = (pop.b ** 2).sum() - (pop.b[combos] ** 2).sum(1)
            est = sa / n_A - sb / n_B
            s2a = (qa - sa ** 2 / n_A) / (n_A - 1)
            s2b = (qb - sb ** 2 / n_B) / (n_B - 1)
            sig2 = n / n_A * np.maximum(s2a, 0) + n / n_B * np.maximum(s2b, 0)
            half = z * np.sqrt(sig2 / n)
            cover = (est - half <= tau) & (tau <= est + half)
        else:
            est = np.empty(count)
            cover = np.empty(count, dtype=bool)
            for i, c in enumerate(combos):
                obs = ObservedExperiment.from_population(pop, Assignment(c, n))
                e = estimate_all(obs, (method,), cv, level)[0]
                est[i] = e.tau_hat
                cover[i] = e.ci_low <= tau <= e.ci_high
        mean = float(est.mean())
        moments[method] = ExactMoments(method, mean, float(((est - mean) ** 2).mean()),
                                       float(cover.mean()), count)
    var_a, var_b = np.var(pop.a, ddof=1), np.var(pop.b, ddof=1)
    var_d = np.var(pop.a - pop.b, ddof=1)
    neyman = float(var_a / n_A + var_b / n_B - var_d / n)
    return EnumerationResult(n, n_A, count, tau, neyman, moments)


# metrics --------------------------------------------------------------------

@dataclass
class MethodMetrics:
    method: str
    bias2: float
    variance: float
    mse: float
    coverage: float
    mean_length: float
    se: dict
    n_used: int
    n_failed: int

    def as_dict(self):
        d = {k: getattr(self, k) for k in METRICS}
        d.update({f"{k}_se": self.se[k] for k in METRICS})
        d["n_used"] = self.n_used
        d["n_failed"] = self.n_failed
        return d


@dataclass
class MetricsSummary:
    tau_true: float
    ci_level: float
    methods: dict

    def __getitem__(self, method):
        return self.methods[method]


def _metric_table(tau_hat, covered, length, tau, idx=None):
    """All five metrics, one row per resample (or a single row)."""
    if idx is None:
        idx = np.arange(tau_hat.size)[None, :]
    t = tau_hat[idx]
    mean = t.mean(axis=1)
    return {
        "bias2": (mean - tau) ** 2,
        "variance": ((t - mean[:, None]) ** 2).mean(axis=1),
        "mse": ((t - tau) ** 2).mean(axis=1),
        "coverage": covered[idx].mean(axis=1),
        "mean_length": length[idx].mean(axis=1),
    }


def bootstrap_se(tau_hat, metric, B=500, seed=0, tau_true=0.0, ci_low=None,
                 ci_high=None):
    """Bootstrap standard error of one metric.

    Resamples the per-replication estimates with replacement `B` times and
    returns the standard deviation (``ddof=1``) of the recomputed metric.
    ``ci_low`` and ``ci_high`` are needed for coverage and length only.
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    t = np.asarray(tau_hat, dtype=float)
    lo = t if ci_low is None else np.asarray(ci_low, dtype=float)
    hi = t if ci_high is None else np.asarray(ci_high, dtype=float)
    idx = np.random.default_rng(seed).integers(0, t.size, (B, t.size))
    vals = _metric_table(t, (lo <= tau_true) & (tau_true <= hi), hi - lo,
                         tau_true, idx)[metric]
    return float(np.std(vals, ddof=1))


def summarize(records, tau_true, ci_level=0.95, B=500, seed=0):
    """Bias^2, variance, MSE, coverage and mean length per method.

    Variance uses the 1/R convention so ``mse = bias2 + variance``.
    Failed replications are excluded per method and counted.  All
    bootstrap SEs of a method share one set of resample indices.
    """
    if not records:
        raise ValueError("no records to summarize")
    order = []
    for rec in records:
        for e in rec.estimates:
            if e.method not in order:
                order.append(e.method)
    out = {}
    for k, method in enumerate(order):
        ests = [rec.estimate(method) for rec in records]
        good = [e for e in ests if e.ok]
        failed = len(ests) - len(good)
        if not good:
            nan = float("nan")
            out[method] = MethodMetrics(method, nan, nan, nan, nan, nan,
                                        {m: nan for m in METRICS}, 0, failed)
            continue
        t = np.array([e.tau_hat for e in good])
        lo = np.array([e.ci_low for e in good])
        hi = np.array([e.ci_high for e in good])
        covered = (lo <= tau_true) & (tau_true <= hi)
        point = {m: float(v[0]) for m, v in
                 _metric_table(t, covered, hi - lo, tau_true).items()}
        idx = np.random.default_rng([int(seed) & MASK64, k]).integers(
            0, t.size, (B, t.size))
        boot = _metric_table(t, covered, hi - lo, tau_true, idx)
        se = {m: float(np.std(boot[m], ddof=1)) for m in METRICS}
        out[method] = MethodMetrics(method, point["bias2"], point["variance"],
                                    point["mse"], point["coverage"],
                                    point["mean_length"], se, t.size, failed)
    return MetricsSummary(float(tau_true), ci_level, out)


# output ---------------------------------------------------------------------

def fmt(x):
    """Shortest round-trip text for a number."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


RECORD_COLUMNS = ("rep", "method", "tau_hat", "sigma2_hat", "ci_low",
                  "ci_high", "df_a", "df_b")


def write_records_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for rec in records:
            for e in rec.estimates:
                w.writerow([rec.rep_index, e.method, fmt(e.tau_hat),
                            fmt(e.sigma2_hat), fmt(e.ci_low), fmt(e.ci_high),
                            e.df_a, e.df_b])


SCALED = ("bias2", "variance", "mse")


def summary_rows(summary):
    """Table layout: squared-error metrics x1000, coverage and length raw."""
    header = ["method"]
    for m in METRICS:
        suffix = "_x1000" if m in SCALED else ""
        header += [m + suffix, m + "_se" + suffix]
    header += ["n_used", "n_failed"]
    rows = [header]
    for method, mm in summary.methods.items():
        row = [method]
        for m in METRICS:
            k = 1000.0 if m in SCALED else 1.0
            row += [fmt(getattr(mm, m) * k), fmt(mm.se[m] * k)]
        row += [mm.n_used, mm.n_failed]
        rows.append(row)
    return rows


def write_summary_csv(summary, path):
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(summary_rows(summary))


def summary_json(summary):
    payload = {"tau_true": summary.tau_true, "ci_level": summary.ci_level,
               "methods": {m: mm.as_dict() for m, mm in summary.methods.items()}}
    return json.dumps(payload, sort_keys=True, indent=2, allow_nan=True) + "\n"


def write_summary_json(summary, path):
    with open(path, "w") as fh:
        fh.write(summary_json(summary))
