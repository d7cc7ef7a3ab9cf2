"""Experiment engine: worst-case and random-order runs, bound checks, validators, reports.

Random-order trials draw their randomness from ``SeedSequence(master_seed +
trial)``; the first child stream flips instance coins (Walsh family), the
second shuffles the arrival order.  Trials are run as one batch per
algorithm and reduced in trial-index order, so equal configs give
byte-identical reports.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .balancing import ALGORITHMS, arrivals_for, make_policy, make_record, play, RunRecord
from .instances import gen_example1, gen_random, gen_walsh_instance, read_instance
from .model import Instance
from .offline import DEFAULT_CAP, OptResult, opt_bound
from .smoothing import INF, PNormParams, SmoothingParams, effective_p, lp_norm, psi_gradient, radius

SCHEMA = 1
DET_TOL = 1e-9
CSV_HEADER = ["trial", "algorithm", "order", "seed", "load", "linf_load", "opt_bound",
              "opt_kind", "ratio", "switch_time"]


# --- configuration -----------------------------------------------------------


def _coerce(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    if value.lower() in ("true", "false"):
        return value.lower() == "true"
    return value


@dataclass(frozen=True)
class InstanceSource:
    """Where the instance comes from: a file or a named generator with arguments."""

    kind: str
    args: tuple = ()

    @classmethod
    def parse(cls, text: str) -> "InstanceSource":
        """Parse ``kind:key=val,key=val`` (``file:<path>`` for files)."""
        kind, _, rest = text.partition(":")
        kind = kind.strip().lower()
        if kind == "file":
            return cls("file", (("path", rest),))
        args = []
        for part in filter(None, (s.strip() for s in rest.split(","))):
            key, eq, val = part.partition("=")
            if not eq:
                raise ValueError(f"bad generator argument {part!r}")
            args.append((key.strip(), _coerce(val.strip())))
        src = cls(kind, tuple(sorted(args)))
        src.build(0)  # fail early on bad arguments
        return src

    @property
    def options(self) -> dict:
        return dict(self.args)

    @property
    def resampled(self) -> bool:
        """True when every trial draws a fresh instance (the Walsh coins)."""
        return self.kind == "walsh" and "coins" not in self.options

    def build(self, seed=None) -> Instance:
        o = self.options
        if self.kind == "file":
            return read_instance(o["path"])
        if self.kind == "example1":
            return gen_example1(int(o.get("m", 3)), float(o.get("eps", 0.5)))
        if self.kind == "walsh":
            coins = o.get("coins")
            if coins is not None:
                coins = [int(c) for c in str(coins)]
            return gen_walsh_instance(int(o.get("p", 2)), coin_seed=o.get("seed", seed), coins=coins)
        if self.kind == "random":
            return gen_random(int(o.get("m", 4)), int(o.get("k", 2)), int(o.get("n", 8)),
                              seed=o.get("seed", 0), distribution=str(o.get("dist", "uniform")),
                              vary_k=bool(o.get("vary_k", False)), cap=o.get("cap"))
        raise ValueError(f"unknown instance source {self.kind!r}")

    def describe(self) -> str:
        if self.kind == "file":
            return f"file:{self.options['path']}"
        return self.kind + (":" + ",".join(f"{k}={v}" for k, v in self.args) if self.args else "")


@dataclass
class ExperimentConfig:
    source: InstanceSource
    algorithms: tuple = ALGORITHMS
    p: float = 2.0
    eps: float = 0.5
    order: str = "given"  # "given" | "random"
    trials: int = 1
    master_seed: int = 0
    opt_mode: str = "auto"
    cap: int = DEFAULT_CAP
    fmt: str = "csv"
    out: Optional[str] = None

    def __post_init__(self):
        self.algorithms = tuple(self.algorithms)
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {a!r}")
        if not 0 < self.eps <= 1:
            raise ValueError("eps must lie in (0, 1]")
        if self.order not in ("given", "random"):
            raise ValueError("order must be 'given' or 'random'")
        if self.order == "random" and self.trials < 1:
            raise ValueError("random order needs trials >= 1")
        if self.fmt not in ("csv", "json"):
            raise ValueError("format must be csv or json")

    def to_dict(self) -> dict:
        return {
            "source": self.source.describe(),
            "algorithms": list(self.algorithms),
            "p": "inf" if self.p == INF else self.p,
            "eps": self.eps,
            "order": self.order,
            "trials": self.trials if self.order == "random" else 1,
            "master_seed": self.master_seed,
            "opt_mode": self.opt_mode,
            "cap": self.cap,
        }


# --- report ------------------------------------------------------------------


@dataclass
class Aggregate:
    algorithm: str
    trials: int
    mean_load: float
    std_load: float
    stderr_load: float
    max_load: float
    mean_linf_load: float
    mean_ratio: Optional[float]


@dataclass
class BoundCheck:
    algorithm: str
    name: str
    kind: str  # "deterministic" | "expectation" | "lower"
    bound: float
    observed: float
    stderr: float
    satisfied: Optional[bool]


@dataclass
class ExperimentReport:
    config: dict
    p_run: float
    rows: List[RunRecord] = field(default_factory=list)
    trials_of: List[int] = field(default_factory=list)
    aggregates: Dict[str, Aggregate] = field(default_factory=dict)
    bounds: List[BoundCheck] = field(default_factory=list)

    @property
    def all_satisfied(self) -> bool:
        return all(b.satisfied is not False for b in self.bounds)

    def loads(self, algorithm: str) -> np.ndarray:
        return np.array([r.final_load for r in self.rows if r.algorithm == algorithm])


def aggregate(algorithm: str, rows: Sequence[RunRecord]) -> Aggregate:
    loads = np.array([r.final_load for r in rows], dtype=float)
    n = len(loads)
    std = float(np.std(loads, ddof=1)) if n > 1 else 0.0
    ratios = [r.ratio for r in rows if r.ratio is not None]
    return Aggregate(
        algorithm=algorithm,
        trials=n,
        mean_load=float(np.mean(loads)) if n else math.nan,
        std_load=std,
        stderr_load=std / math.sqrt(n) if n else math.nan,
        max_load=float(np.max(loads)) if n else math.nan,
        mean_linf_load=float(np.mean([r.linf_load for r in rows])) if n else math.nan,
        mean_ratio=float(np.mean(ratios)) if ratios else None,
    )


# --- theoretical bounds -----------------------------------------------------


def _greedy_const(p):
    return p / math.log(1.5)


def _half_offset(p, m, eps):
    # psi of one half is at most c OPT + p ((2m)^{1/p} - 1) / eps
    return p * math.expm1(math.log(2 * m) / p) / eps


def deterministic_bound(algorithm: str, opt: float, p: float, m: int, eps: float) -> tuple:
    """Worst-case bound with explicit constants, from the refined greedy guarantee."""
    c = _greedy_const(p)
    if algorithm == "greedy":
        return "greedy_worst", c * opt
    if algorithm == "greedy_wr":
        return "greedy_wr_worst", 2 * c * opt
    smooth = 2 * c * opt + 2 * _half_offset(p, m, eps)
    if algorithm == "smooth_greedy":
        return "smooth_greedy_worst", smooth
    return "ultimate_worst", radius(p, m, eps) + m ** (1.0 / p) + smooth


def expectation_bound(algorithm: str, opt: float, p: float, m: int, eps: float):
    """Random-order bound on the expected load, or None when no explicit one exists."""
    R = radius(p, m, eps)
    if algorithm == "greedy_wr":
        return "greedy_wr_random", (1 + 4 * eps) * opt + (3 * p + 1) * m ** (1 - 1.0 / p) / eps
    if algorithm == "smooth_greedy":
        return "smooth_greedy_random", math.exp(2 * eps) * (opt + 4 * R)
    if algorithm == "ultimate":
        return "ultimate_random", (1 + 4 * eps) * (opt + 6 * R)
    return None


WALSH_FACTOR = 1.01


def _bound_checks(report, algorithm, rows, opts: List[OptResult], p, m, eps, cfg, walsh):
    checks = []
    loads = np.array([r.final_load for r in rows])
    values = np.array([o.value for o in opts])
    kinds = {o.kind for o in opts}
    rigorous = kinds <= {"exact", "analytic"}
    name, _ = deterministic_bound(algorithm, 0.0, p, m, eps)
    per_row = np.array([deterministic_bound(algorithm, v, p, m, eps)[1] for v in values])
    ok = bool(np.all(loads <= per_row + DET_TOL * np.maximum(1.0, per_row)))
    checks.append(BoundCheck(algorithm, name, "deterministic", float(np.max(per_row)),
                             float(np.max(loads)), 0.0, ok if (ok or rigorous) else None))
    if cfg.order == "random" and len(rows) > 1:
        agg = report.aggregates[algorithm]
        mean_opt = float(np.mean(values))
        exp = expectation_bound(algorithm, mean_opt, p, m, eps)
        if exp is not None:
            ok = agg.mean_load <= exp[1] + 3 * agg.stderr_load
            checks.append(BoundCheck(algorithm, exp[0], "expectation", exp[1], agg.mean_load,
                                     agg.stderr_load, ok if (ok or rigorous) else None))
        if walsh and kinds == {"analytic"}:
            lower = WALSH_FACTOR * mean_opt
            checks.append(BoundCheck(algorithm, "walsh_lower", "lower", lower, agg.mean_load,
                                     agg.stderr_load, agg.mean_load >= lower - 3 * agg.stderr_load))
    return checks


# --- running -----------------------------------------------------------------


def trial_streams(master_seed: int, trial: int):
    """(coin stream, order stream) for one trial."""
    coin, order = np.random.SeedSequence(master_seed + trial).spawn(2)
    return coin, order


def trial_permutation(n: int, master_seed: int, trial: int) -> np.ndarray:
    _, order = trial_streams(master_seed, trial)
    return np.random.default_rng(order).permutation(n)


def _opt_for(inst, params, cfg, cache):
    key = (inst, params.p, cfg.opt_mode, cfg.cap)
    if key not in cache:
        cache[key] = opt_bound(inst, params, cap=cfg.cap, mode=cfg.opt_mode)
    return cache[key]


def run_experiment(cfg: ExperimentConfig, opt_cache: Optional[dict] = None) -> ExperimentReport:
    """Run every configured algorithm and compare against the explicit-constant bounds.

    ``opt_cache`` may be shared between calls (e.g. an eps sweep) so each
    distinct instance is solved once.
    """
    base = cfg.source.build(cfg.master_seed)
    m = base.m
    if cfg.p == INF:
        p_run = effective_p(m, cfg.eps) if m >= 2 else 2.0
    else:
        p_run = float(cfg.p)
    params = PNormParams(p_run, m)
    report = ExperimentReport(cfg.to_dict(), p_run)
    if not cfg.algorithms:
        return report

    cache = {} if opt_cache is None else opt_cache
    if cfg.order == "given":
        instances = [base]
        orders = np.arange(base.n)[None, :]
        seeds = [None]
    else:
        instances, perms, seeds = [], [], []
        for trial in range(cfg.trials):
            coin, order = trial_streams(cfg.master_seed, trial)
            inst = cfg.source.build(coin) if cfg.source.resampled else base
            instances.append(inst)
            perms.append(np.random.default_rng(order).permutation(base.n))
            seeds.append(cfg.master_seed + trial)
        orders = np.array(perms, dtype=np.int64).reshape(cfg.trials, base.n)
    opts = [_opt_for(inst, params, cfg, cache) for inst in instances]

    if cfg.source.resampled:
        tensors = np.stack([inst.option_tensor() for inst in instances])
        arrivals = tensors[np.arange(len(instances))[:, None], orders]
    else:
        arrivals = arrivals_for(base, orders)

    for name in cfg.algorithms:
        policy = make_policy(name, params, cfg.eps)
        res = play(policy, arrivals)
        choices, loads, switch = res.choices, res.loads, res.switch_times
        rows = []
        for i, inst in enumerate(instances):
            rec = make_record(
                name, inst, params, choices[i], loads[i], opts[i],
                None if switch is None else switch[i],
                order_mode=cfg.order, seed=seeds[i],
                order=orders[i] if cfg.order == "random" else None,
            )
            rows.append(rec)
            report.rows.append(rec)
            report.trials_of.append(i)
        report.aggregates[name] = aggregate(name, rows)
        report.bounds.extend(
            _bound_checks(report, name, rows, opts, p_run, m, cfg.eps, cfg, cfg.source.kind == "walsh")
        )
    return report


def run_sweep(cfg: ExperimentConfig, values: Sequence[float], parameter: str = "eps") -> Dict[str, list]:
    """Mean load per algorithm as ``parameter`` ranges over ``values``."""
    series: Dict[str, list] = {a: [] for a in cfg.algorithms}
    cache: dict = {}
    for x in values:
        kw = asdict(cfg)
        kw["source"] = cfg.source
        kw[parameter] = x
        rep = run_experiment(ExperimentConfig(**kw), cache)
        for a in cfg.algorithms:
            series[a].append((float(x), rep.aggregates[a].mean_load))
    return series


# --- correlation validators --------------------------------------------------


@dataclass
class ValidationRecord:
    name: str
    empirical_mean: float
    stderr: float
    rhs: float
    passed: bool
    trials: int
    detail: str = ""


def _without_replacement(rng, trials: int, n: int, size: int) -> np.ndarray:
    # first `size` positions of independent uniform permutations
    return np.argsort(rng.random((trials, n)), axis=1, kind="stable")[:, :size]


def validate_corr_sum(vectors, kappa: int, eps: float, params: PNormParams, trials: int = 10_000,
                      seed=0) -> ValidationRecord:
    """Monte-Carlo check of E||Y^1+...+Y^kappa||_p <= e^eps ||sum_t E Y^t||_p + R.

    Each E Y^t is the set average, so the first right-hand term is kappa times
    the norm of the mean vector.
    """
    y = np.asarray(vectors, dtype=float)
    n, m = y.shape
    if not 1 <= kappa <= n:
        raise ValueError("kappa must lie in [1, n]")
    rng = np.random.default_rng(seed)
    idx = _without_replacement(rng, trials, n, kappa)
    sums = y[idx].sum(axis=1)
    vals = lp_norm(sums, params.p)
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    rhs = math.exp(eps) * kappa * float(lp_norm(y.mean(axis=0), params.p)) + radius(params.p, m, eps)
    return ValidationRecord("corr_sum", mean, se, rhs, mean <= rhs + 3 * se, trials,
                            f"n={n} m={m} p={params.p:g} kappa={kappa} eps={eps}")


def validate_break_corr(vectors, t: int, eps: float, params: PNormParams, trials: int = 10_000,
                        seed=0, strategy: str = "gradient") -> ValidationRecord:
    """Monte-Carlo check of E<Y^t, Z> <= e^eps ||E Y^t||_p + R / (n - t + 1).

    ``strategy`` picks Z from the first t-1 samples: "gradient" plays the
    psi-gradient at their sum, "fixed" the flat unit vector m^{-1/q} 1.
    """
    y = np.asarray(vectors, dtype=float)
    n, m = y.shape
    if not 1 <= t <= n:
        raise ValueError("t must lie in [1, n]")
    rng = np.random.default_rng(seed)
    idx = _without_replacement(rng, trials, n, t)
    prefix = y[idx[:, : t - 1]].sum(axis=1)
    current = y[idx[:, t - 1]]
    if strategy == "gradient":
        z = psi_gradient(prefix, SmoothingParams(params, eps))
    elif strategy == "fixed":
        z = np.full((trials, m), m ** (-1.0 / params.q))
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    vals = np.sum(current * z, axis=1)
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    rhs = math.exp(eps) * float(lp_norm(y.mean(axis=0), params.p)) + radius(params.p, m, eps) / (n - t + 1)
    return ValidationRecord("break_corr", mean, se, rhs, mean <= rhs + 3 * se, trials,
                            f"n={n} m={m} p={params.p:g} t={t} eps={eps} Z={strategy}")


def corr_fixture_suite(count: int = 50, seed: int = 0, m: int = 8) -> List[tuple]:
    """Vector sets for the correlation validators: (vectors, p) pairs.

    Mostly random 0/1 sets, plus a few structured ones (identical vectors,
    unit vectors, uniform reals).
    """
    rng = np.random.default_rng(seed)
    suite = []
    for i in range(count):
        p = 2.0 if i % 2 == 0 else 4.0
        n = int(rng.integers(4, 25))
        if i == 0:
            y = np.tile(rng.integers(0, 2, m).astype(float), (n, 1))
        elif i == 1:
            y = np.eye(m)
        elif i % 10 == 9:
            y = rng.random((n, m))
        else:
            y = (rng.random((n, m)) < rng.uniform(0.2, 0.8)).astype(float)
        suite.append((y, p))
    return suite


def run_validation_suite(trials: int = 10_000, seed: int = 0, eps: float = 0.5,
                         suite=None) -> List[ValidationRecord]:
    """Both validators on every fixture set, at kappa, t in {small, n/2, n}."""
    suite = corr_fixture_suite() if suite is None else suite
    records = []
    for i, (y, p) in enumerate(suite):
        n, m = y.shape
        params = PNormParams(p, m)
        for kappa in sorted({min(2, n), max(1, n // 2), n}):
            records.append(validate_corr_sum(y, kappa, eps, params, trials, seed=(seed, i, kappa)))
        for t in sorted({1, max(1, n // 2), n}):
            for strategy in ("gradient", "fixed"):
                records.append(validate_break_corr(y, t, eps, params, trials,
                                                   seed=(seed, i, t, int(strategy == "fixed")),
                                                   strategy=strategy))
    return records


# --- emission ----------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _row_dict(trial: int, r: RunRecord) -> dict:
    return {
        "trial": trial,
        "algorithm": r.algorithm,
        "order": r.order_mode,
        "seed": r.seed,
        "load": r.final_load,
        "linf_load": r.linf_load,
        "opt_bound": r.opt_bound,
        "opt_kind": r.opt_kind,
        "ratio": r.ratio,
        "switch_time": r.switch_time,
    }


def report_to_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for trial, r in zip(report.trials_of, report.rows):
        d = _row_dict(trial, r)
        w.writerow([_fmt(d[c]) for c in CSV_HEADER])
    if report.rows:
        agg_fields = ["algorithm", "trials", "mean_load", "std_load", "stderr_load", "max_load",
                      "mean_linf_load", "mean_ratio"]
        w.writerow(["#agg"] + agg_fields)
        for a in report.aggregates.values():
            w.writerow(["#agg"] + [_fmt(getattr(a, f)) for f in agg_fields])
        bound_fields = ["algorithm", "name", "kind", "bound", "observed", "stderr", "satisfied"]
        w.writerow(["#bound"] + bound_fields)
        for b in report.bounds:
            w.writerow(["#bound"] + [_fmt(getattr(b, f)) for f in bound_fields])
    return buf.getvalue()


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def report_to_json(report: ExperimentReport) -> str:
    doc = {
        "schema": SCHEMA,
        "config": report.config,
        "p_run": report.p_run,
        "rows": [
            {k: _clean(v) for k, v in _row_dict(t, r).items()}
            | {"assignment": list(r.assignment.choices),
               "order_permutation": None if r.order is None else list(r.order)}
            for t, r in zip(report.trials_of, report.rows)
        ],
        "aggregates": {k: {f: _clean(v) for f, v in asdict(a).items()} for k, a in report.aggregates.items()},
        "bounds": [{f: _clean(v) for f, v in asdict(b).items()} for b in report.bounds],
        "all_satisfied": report.all_satisfied,
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def emit_report(report: ExperimentReport, fmt: str = "csv", path=None) -> str:
    """Serialize ``report`` as csv or json; write it to ``path`` if given. Returns the text."""
    if fmt == "csv":
        text = report_to_csv(report)
    elif fmt == "json":
        text = report_to_json(report)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def emit_series(series: Dict[str, list], prefix) -> List[str]:
    """Write one ``<prefix>.<algorithm>.dat`` file of whitespace-separated (x, y) pairs per algorithm."""
    paths = []
    for alg, points in series.items():
        path = f"{os.fspath(prefix)}.{alg}.dat"
        with open(path, "w", encoding="utf-8") as fh:
            for x, y in points:
                fh.write(f"{x!r} {y!r}\n")
        paths.append(path)
    return paths


def trial_series(report: ExperimentReport) -> Dict[str, list]:
    """Per-algorithm (trial index, load) points for plotting a single run."""
    out: Dict[str, list] = {}
    for t, r in zip(report.trials_of, report.rows):
        out.setdefault(r.algorithm, []).append((float(t), r.final_load))
    return out
