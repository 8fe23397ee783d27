"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime or
numerical failure.  The ``PENADJ_WORKERS`` environment variable sets the
number of replication processes for ``simulate``.
"""

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import os
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .dgp import ExampleSpec, generate
from .diagnostics import diagnose
from .errors import PenadjError
from .estimators import ObservedExperiment, estimate_all
from .population import (read_population_csv, true_ace,
                         write_population_csv)
from .simulation import (WORKERS_ENV, ScenarioConfig, enumerate_assignments,
                         run_replications, summarize, worker_count,
                         write_records_csv, write_summary_csv,
                         write_summary_json)
from .solvers import CvConfig

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

METHOD_ALIASES = {
    "unadjust": "unadjust", "unadjusted": "unadjust", "dim": "unadjust",
    "ols": "ols", "lasso": "lasso", "en": "en", "naive_en": "naive_en",
    "naiveen": "naive_en", "adaptive_lasso": "adaptive_lasso", "ada": "adaptive_lasso",
    "ridge": "ridge",
}


class ConfigError(Exception):
    """Bad configuration, reported with file and line."""


class UsageError(Exception):
    pass


def canonical_method(name):
    key = name.strip().lower()
    if key not in METHOD_ALIASES:
        raise ValueError(f"unknown method {name!r}")
    return METHOD_ALIASES[key]


# configuration --------------------------------------------------------------

SCHEMA = {
    "example": {"id": int, "n": int, "p": int, "s": int, "sigma_noise": float,
                "seed": int, "population": str},
    "solver": {"standardize": bool},
    "cv": {"folds": int, "n_lambda1": int, "lambda1_min_ratio": float,
           "lambda2_grid": "floats", "seed": int, "ridge_n_lambda": int,
           "ridge_max_factor": float, "ridge_min_ratio": float,
           "max_r2": float},
    "run": {"n_a": int, "replications": int, "base_seed": int,
            "methods": "methods", "ci_level": float, "bootstrap": int,
            "bootstrap_seed": int},
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(kind, text):
    if kind is int:
        return int(text)
    if kind is float:
        v = float(text)
        if not math.isfinite(v):
            raise ValueError(f"{text!r} is not finite")
        return v
    if kind is bool:
        t = text.lower()
        if t in _TRUE:
            return True
        if t in _FALSE:
            return False
        raise ValueError(f"{text!r} is not a boolean")
    if kind == "floats":
        return tuple(_convert(float, v) for v in text.split(",") if v.strip())
    if kind == "methods":
        return tuple(canonical_method(v) for v in text.split(",") if v.strip())
    return text


def parse_config(path):
    """Read a sectioned ``key = value`` file into typed dicts.

    Comments start with ``#`` or ``;``.  Every error names the file and
    line.
    """
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    out = {name: {} for name in SCHEMA}
    section = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        where = f"{path}:{lineno}"
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{where}: malformed section header")
            section = line[1:-1].strip().lower()
            if section not in SCHEMA:
                raise ConfigError(f"{where}: unknown section [{section}]")
            continue
        if "=" not in line and ":" not in line:
            raise ConfigError(f"{where}: expected key = value")
        if section is None:
            raise ConfigError(f"{where}: key outside any section")
        sep = min(i for i in (line.find("="), line.find(":")) if i >= 0)
        key = line[:sep].strip().lower()
        value = line[sep + 1:].split(" #")[0].strip()
        if key not in SCHEMA[section]:
            raise ConfigError(f"{where}: unknown key {key!r} in [{section}]")
        if key in out[section]:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        try:
            out[section][key] = (_convert(SCHEMA[section][key], value), lineno)
        except ValueError as exc:
            raise ConfigError(f"{where}: {key}: {exc}") from None
    return out


def _val(cfg, section, key, default=None):
    return cfg[section][key][0] if key in cfg[section] else default


def _line(cfg, section, key, path):
    if key in cfg[section]:
        return f"{path}:{cfg[section][key][1]}"
    return f"{path}"


def build_scenario(cfg, path):
    """Turn a parsed config into a `ScenarioConfig` and run options."""
    ex = cfg["example"]
    base = os.path.dirname(os.path.abspath(path))
    if "population" in ex:
        if "id" in ex:
            raise ConfigError(f"{_line(cfg, 'example', 'id', path)}: "
                              "give either id or population, not both")
        pop_path = _val(cfg, "example", "population")
        if not os.path.isabs(pop_path):
            pop_path = os.path.join(base, pop_path)
        source = pop_path
    elif "id" in ex:
        kw = {k: _val(cfg, "example", k) for k in ("n", "p", "s",
                                                   "sigma_noise", "seed")
              if k in ex}
        try:
            source = ExampleSpec(_val(cfg, "example", "id"), **kw)
        except ValueError as exc:
            raise ConfigError(
                f"{_line(cfg, 'example', 'id', path)}: {exc}") from None
    else:
        raise ConfigError(f"{path}: [example] needs id or population")
    cv_kw = {k: v for k, (v, _) in cfg["cv"].items()}
    cv_kw["standardize"] = _val(cfg, "solver", "standardize", False)
    try:
        cv = CvConfig(**cv_kw)
    except ValueError as exc:
        key = next(iter(cfg["cv"]), None)
        where = _line(cfg, "cv", key, path) if key else path
        raise ConfigError(f"{where}: {exc}") from None
    if "n_a" not in cfg["run"]:
        raise ConfigError(f"{path}: [run] needs n_A")
    run_kw = {"n_A": _val(cfg, "run", "n_a")}
    for key, name in (("replications", "replications"),
                      ("base_seed", "base_seed"), ("methods", "methods"),
                      ("ci_level", "ci_level")):
        if key in cfg["run"]:
            run_kw[name] = _val(cfg, "run", key)
    try:
        scenario = ScenarioConfig(source, cv=cv, **run_kw)
    except ValueError as exc:
        raise ConfigError(f"{path}: [run]: {exc}") from None
    opts = {"bootstrap": _val(cfg, "run", "bootstrap", 500),
            "bootstrap_seed": _val(cfg, "run", "bootstrap_seed",
                                   scenario.base_seed)}
    if opts["bootstrap"] < 2:
        raise ConfigError(f"{_line(cfg, 'run', 'bootstrap', path)}: "
                          "bootstrap must be at least 2")
    return scenario, opts


def scenario_payload(scenario, opts, population_digest):
    """Everything that affects results, as plain JSON-able data."""
    src = scenario.population
    if isinstance(src, ExampleSpec):
        source = {"example": dataclasses.asdict(src)}
    else:
        source = {"population_sha256": population_digest}
    return {
        "source": source,
        "n_A": scenario.n_A,
        "methods": list(scenario.methods),
        "replications": scenario.replications,
        "base_seed": scenario.base_seed,
        "ci_level": scenario.ci_level,
        "cv": dataclasses.asdict(scenario.cv),
        "bootstrap": opts["bootstrap"],
        "bootstrap_seed": opts["bootstrap_seed"],
        "version": __version__,
    }


def config_digest(payload):
    """SHA-256 of the canonical (sorted-key, compact) JSON form."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _file_digest(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


@dataclasses.dataclass
class RunManifest:
    config_digest: str
    tool_version: str
    base_seed: int
    started: str
    finished: str
    outputs: dict
    config: dict

    def write(self, path):
        with open(path, "w") as fh:
            json.dump(dataclasses.asdict(self), fh, sort_keys=True, indent=2)
            fh.write("\n")


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# commands ---------------------------------------------------------------------

def cmd_simulate(config_path, out_dir, workers=None, quiet=True):
    cfg = parse_config(config_path)
    scenario, opts = build_scenario(cfg, config_path)
    started = _now()
    try:
        pop = scenario.load_population()
    except ValueError as exc:
        raise ConfigError(f"{_line(cfg, 'run', 'n_a', config_path)}: {exc}") from None
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, name) for name in
             ("population.csv", "records.csv", "summary.csv", "summary.json",
              "manifest.json")}
    write_population_csv(pop, paths["population.csv"])
    payload = scenario_payload(scenario, opts, _file_digest(paths["population.csv"]))

    t0 = time.time()

    def report(k):
        if k == scenario.replications or k % 50 == 0:
            print(f"  {k}/{scenario.replications} replications "
                  f"({time.time() - t0:.0f}s)", file=sys.stderr)

    records = run_replications(scenario, workers, pop, None if quiet else report)
    summary = summarize(records, true_ace(pop), scenario.ci_level,
                        opts["bootstrap"], opts["bootstrap_seed"])
    write_records_csv(records, paths["records.csv"])
    write_summary_csv(summary, paths["summary.csv"])
    write_summary_json(summary, paths["summary.json"])
    RunManifest(config_digest(payload), __version__, scenario.base_seed,
                started, _now(), paths, payload).write(paths["manifest.json"])
    failed = {m: mm.n_failed for m, mm in summary.methods.items() if mm.n_failed}
    if failed:
        print(f"method failures excluded from summary: {failed}", file=sys.stderr)
    return EXIT_OK


def read_experiment_csv(path):
    """Load ``Y,T,x1..xp``; covariates are centered on load."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise UsageError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header[:2] != ["Y", "T"]:
        raise UsageError(f"{path}:1: header must start with Y,T")
    Y, T, X = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise UsageError(f"{path}:{lineno}: expected {len(header)} fields, "
                             f"got {len(row)}")
        try:
            vals = [float(v) for v in row]
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: {exc}") from None
        if vals[1] not in (0.0, 1.0):
            raise UsageError(f"{path}:{lineno}: T must be 0 or 1")
        Y.append(vals[0])
        T.append(vals[1] == 1.0)
        X.append(vals[2:])
    T = np.array(T, dtype=bool)
    if not T.any():
        raise UsageError(f"{path}: treatment group empty")
    if T.all():
        raise UsageError(f"{path}: control group empty")
    if T.sum() < 2 or (~T).sum() < 2:
        raise UsageError(f"{path}: each group needs at least 2 units")
    X = np.array(X, dtype=float).reshape(len(Y), len(header) - 2)
    if X.shape[1]:
        X = X - X.mean(axis=0)
    return np.array(Y), T, X


def cmd_estimate(data_csv, method, cv=None, level=0.95):
    Y, T, X = read_experiment_csv(data_csv)
    method = canonical_method(method)
    if method == "unadjust":
        X = np.zeros((Y.size, 0))
    obs = ObservedExperiment(Y, T, X)
    est = estimate_all(obs, (method,), cv, level)[0]
    if not est.ok:
        print(f"error: {est.error}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(est.to_dict(), sort_keys=True))
    return EXIT_OK


def _load_population(args):
    if args.population:
        return read_population_csv(args.population)
    if args.config:
        cfg = parse_config(args.config)
        scenario, _ = build_scenario(cfg, args.config)
        return scenario.load_population()
    if args.example:
        return generate(ExampleSpec(args.example, n=args.n, p=args.p,
                                    seed=args.seed))
    raise UsageError("give --population, --config or --example")


def cmd_diagnose(args):
    pop = _load_population(args)
    p_A = args.p_a
    lam1 = args.lambda1
    if lam1 is None:
        lam1 = math.sqrt(2.0 * math.log(max(pop.p, 2)) / pop.n)
    rep = diagnose(pop, p_A, lam1, args.lambda2_a, args.lambda2_b)
    sys.stdout.write(rep.to_json())
    return EXIT_OK


def cmd_oracle(population_csv, n_A, methods=("unadjust",), level=0.95):
    pop = read_population_csv(population_csv)
    res = enumerate_assignments(pop, n_A, methods, level=level)
    out = {
        "n": res.n, "n_A": res.n_A, "assignments": res.count, "tau": res.tau,
        "neyman_variance": res.neyman_variance,
        "identity_residual": res.identity_residual
        if "unadjust" in res.moments else None,
        "methods": {m: {"mean": mo.mean, "variance": mo.variance,
                        "coverage": mo.coverage}
                    for m, mo in res.moments.items()},
    }
    print(json.dumps(out, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_generate(args):
    pop = _load_population(args)
    write_population_csv(pop, args.out)
    return EXIT_OK


# argument parsing -------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_cv_flags(p):
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--cv-seed", type=int, default=0)
    p.add_argument("--lambda2-grid", default="0,0.01,0.1,1.0",
                   help="comma-separated l2 grid for the elastic net")
    p.add_argument("--standardize", action="store_true")


def _add_source_flags(p):
    p.add_argument("--population", help="population CSV (a,b,x1..xp)")
    p.add_argument("--config", help="scenario config file")
    p.add_argument("--example", type=int, choices=(1, 2, 3, 4))
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--p", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = _Parser(prog="penadj", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run a Monte Carlo scenario")
    p.add_argument("config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=None,
                   help=f"process count (default: ${WORKERS_ENV} or 1)")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("estimate", help="estimate the effect from one data file")
    p.add_argument("data", help="CSV with columns Y,T,x1..xp")
    p.add_argument("--method", default="lasso")
    p.add_argument("--level", type=float, default=0.95)
    _add_cv_flags(p)

    p = sub.add_parser("diagnose", help="report condition diagnostics")
    _add_source_flags(p)
    p.add_argument("--p-a", type=float, default=0.5, help="treated fraction")
    p.add_argument("--lambda1", type=float, default=None,
                   help="sparsity threshold (default sqrt(2 log p / n))")
    p.add_argument("--lambda2-a", type=float, default=0.0)
    p.add_argument("--lambda2-b", type=float, default=0.0)

    p = sub.add_parser("oracle", help="exact moments by enumeration")
    p.add_argument("population")
    p.add_argument("--n-a", type=int, required=True)
    p.add_argument("--methods", default="unadjust")
    p.add_argument("--level", type=float, default=0.95)

    p = sub.add_parser("generate", help="write a population CSV")
    _add_source_flags(p)
    p.add_argument("--out", required=True)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            if args.workers is not None and args.workers < 1:
                raise UsageError("--workers must be at least 1")
            return cmd_simulate(args.config, args.out, worker_count(args.workers),
                                quiet=args.quiet)
        if args.command == "estimate":
            try:
                grid = tuple(float(v) for v in args.lambda2_grid.split(","))
                cv = CvConfig(folds=args.folds, seed=args.cv_seed,
                              lambda2_grid=grid, standardize=args.standardize)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
            try:
                method = canonical_method(args.method)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
            return cmd_estimate(args.data, method, cv, args.level)
        if args.command == "diagnose":
            return cmd_diagnose(args)
        if args.command == "oracle":
            try:
                methods = tuple(canonical_method(m) for m in args.methods.split(","))
            except ValueError as exc:
                raise UsageError(str(exc)) from None
            return cmd_oracle(args.population, args.n_a, methods, args.level)
        if args.command == "generate":
            return cmd_generate(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PenadjError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
