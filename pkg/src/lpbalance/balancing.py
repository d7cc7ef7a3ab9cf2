"""Online algorithms for l_p generalized load balancing.

Each algorithm is a small stateful policy that sees one job at a time and
returns the chosen option.  Policies are batched: ``start(n, m, batch)``
sets up ``batch`` independent runs and ``choose`` takes a ``(batch, k, m)``
array with one job per run.  A single run is just ``batch=1``, so the code
path that replays 10^4 random orders is the same one the scalar API uses.

Ties go to the lowest option index (``np.argmin``), with strict comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import Assignment, Instance, JobMatrix
from .smoothing import PNormParams, SmoothingParams, lp_norm, psi

ALGORITHMS = ("greedy", "greedy_wr", "smooth_greedy", "ultimate")


def restart_point(n: int) -> int:
    """Number of jobs before the restart; odd n keeps the first phase longer."""
    return (n + 1) // 2


def _pick(scores: np.ndarray) -> np.ndarray:
    return np.argmin(scores, axis=-1)


class Greedy:
    """Assign each job to the option that least increases the l_p load."""

    name = "greedy"
    deterministic = True

    def __init__(self, params: PNormParams):
        self.params = params
        self.p = params.p

    def start(self, n: int, m: int, batch: int = 1) -> None:
        self.n = n
        self.t = 0
        self.load = np.zeros((batch, m))

    def _score(self, cand):
        return lp_norm(cand, self.p)

    def _before_step(self):
        pass

    def choose(self, options: np.ndarray) -> np.ndarray:
        self._before_step()
        cand = self.load[:, None, :] + options
        idx = _pick(self._score(cand))
        self.load = cand[np.arange(len(idx)), idx]
        self.t += 1
        return idx


class GreedyWR(Greedy):
    """Greedy with its load state reset to zero after the first ceil(n/2) jobs."""

    name = "greedy_wr"

    def _before_step(self):
        if self.t == restart_point(self.n) and self.t > 0:
            self.load = np.zeros_like(self.load)


class SmoothGreedy(GreedyWR):
    """Greedy with restart on the smoothed norm psi instead of ||.||_p.

    Only integral choices are considered: the best single option per job.
    """

    name = "smooth_greedy"

    def __init__(self, sp: SmoothingParams):
        super().__init__(sp.base)
        self.sp = sp

    def _score(self, cand):
        return psi(cand, self.sp)


class Ultimate:
    """Greedy until the l_p load exceeds R, then SmoothGreedy on the rest.

    The job that pushes the load over R is still placed by greedy; the
    second phase starts from a zero load and restarts at the midpoint of the
    remaining n - t_bar jobs.
    """

    name = "ultimate"
    deterministic = True

    def __init__(self, sp: SmoothingParams):
        self.sp = sp
        self.p = sp.p
        self.threshold = sp.radius

    def start(self, n: int, m: int, batch: int = 1) -> None:
        self.n = n
        self.t = 0
        self.load = np.zeros((batch, m))  # phase-1 load (all greedy jobs)
        self.seg = np.zeros((batch, m))  # phase-2 load since the last (re)start
        self.switched = np.zeros(batch, dtype=bool)
        self.switch_time = np.full(batch, n, dtype=np.int64)
        self.restart_at = np.zeros(batch, dtype=np.int64)  # absolute step of the phase-2 restart

    def choose(self, options: np.ndarray) -> np.ndarray:
        rows = np.arange(len(options))
        reset = self.switched & (self.t == self.restart_at)
        if reset.any():
            self.seg[reset] = 0.0

        greedy_cand = self.load[:, None, :] + options
        smooth_cand = self.seg[:, None, :] + options
        g_idx = _pick(lp_norm(greedy_cand, self.p))
        s_idx = _pick(psi(smooth_cand, self.sp))
        idx = np.where(self.switched, s_idx, g_idx)

        phase1 = ~self.switched
        self.load = np.where(phase1[:, None], greedy_cand[rows, g_idx], self.load)
        self.seg = np.where(self.switched[:, None], smooth_cand[rows, s_idx], self.seg)
        self.t += 1

        crossed = phase1 & (lp_norm(self.load, self.p) > self.threshold)
        if crossed.any():
            self.switched |= crossed
            self.switch_time[crossed] = self.t
            remaining = self.n - self.t
            self.restart_at[crossed] = self.t + restart_point(remaining)
        return idx


def make_policy(name: str, params: PNormParams, eps: Optional[float] = None):
    if name == "greedy":
        return Greedy(params)
    if name == "greedy_wr":
        return GreedyWR(params)
    if name in ("smooth_greedy", "ultimate"):
        if eps is None:
            raise ValueError(f"{name} needs eps")
        sp = SmoothingParams(params, eps)
        return SmoothGreedy(sp) if name == "smooth_greedy" else Ultimate(sp)
    raise ValueError(f"unknown algorithm {name!r}; expected one of {ALGORITHMS}")


@dataclass
class BatchRun:
    """Outcome of running one policy on a batch of arrival sequences."""

    choices: np.ndarray  # (batch, n) option index per arrival
    loads: np.ndarray  # (batch, m) total load vectors
    switch_times: Optional[np.ndarray] = None


def play(policy, arrivals: np.ndarray) -> BatchRun:
    """Feed ``arrivals`` (batch x n x kmax x m, already in arrival order) to a policy."""
    arrivals = np.asarray(arrivals, dtype=float)
    batch, n, _, m = arrivals.shape
    policy.start(n, m, batch)
    choices = np.empty((batch, n), dtype=np.int64)
    total = np.zeros((batch, m))
    rows = np.arange(batch)
    for t in range(n):
        idx = policy.choose(arrivals[:, t])
        choices[:, t] = idx
        total = total + arrivals[rows, t, idx]
    return BatchRun(choices, total, getattr(policy, "switch_time", None))


def arrivals_for(inst: Instance, orders=None) -> np.ndarray:
    """Option tensor of ``inst`` gathered into arrival order for each row of ``orders``."""
    opts = inst.option_tensor()
    if orders is None:
        return opts[None]
    orders = np.asarray(orders, dtype=np.int64).reshape(-1, inst.n)
    return opts[orders]


@dataclass
class RunRecord:
    algorithm: str
    order_mode: str
    seed: Optional[int]
    final_load: float
    linf_load: float
    opt_bound: float
    opt_kind: str
    ratio: Optional[float]
    switch_time: Optional[int]
    assignment: Assignment
    order: Optional[tuple] = None


def make_record(name, inst, params, choices, load, opt=None, switch_time=None,
                order_mode="given", seed=None, order=None) -> RunRecord:
    final = float(lp_norm(load, params.p))
    if opt is None:
        value, kind = math.nan, "none"
    elif isinstance(opt, (int, float)):
        value, kind = float(opt), "given"
    else:
        value, kind = float(opt.value), opt.kind
    ratio = final / value if value > 0 else None
    return RunRecord(
        algorithm=name,
        order_mode=order_mode,
        seed=seed,
        final_load=final,
        linf_load=float(np.max(load)) if len(load) else 0.0,
        opt_bound=value,
        opt_kind=kind,
        ratio=ratio,
        switch_time=None if switch_time is None else int(switch_time),
        assignment=Assignment(tuple(int(c) for c in choices)),
        order=None if order is None else tuple(int(i) for i in order),
    )


def _run(policy, inst: Instance, params: PNormParams, opt) -> RunRecord:
    res = play(policy, arrivals_for(inst))
    st = None if res.switch_times is None else res.switch_times[0]
    return make_record(policy.name, inst, params, res.choices[0], res.loads[0], opt, st)


def greedy_step(current, job: JobMatrix, params: PNormParams) -> int:
    """Option of ``job`` minimizing ||current + option||_p (lowest index on ties)."""
    cand = np.asarray(current, dtype=float)[None, :] + job.options
    return int(_pick(lp_norm(cand, params.p)))


def run_greedy(inst: Instance, params: PNormParams, opt=None) -> RunRecord:
    return _run(Greedy(params), inst, params, opt)


def run_greedy_wr(inst: Instance, params: PNormParams, opt=None) -> RunRecord:
    return _run(GreedyWR(params), inst, params, opt)


def run_smooth_greedy(inst: Instance, sp: SmoothingParams, opt=None) -> RunRecord:
    return _run(SmoothGreedy(sp), inst, sp.base, opt)


def run_ultimate(inst: Instance, sp: SmoothingParams, opt=None) -> RunRecord:
    return _run(Ultimate(sp), inst, sp.base, opt)


REFINED_CONSTANT_TOL = 1e-9


def refined_constant(p: float) -> float:
    """Explicit constant p / ln(3/2) of the refined greedy guarantee."""
    return p / math.log(1.5)


def check_refined_guarantee(inst: Instance, tau: int, params: PNormParams, opt_oracle=None) -> bool:
    """Check ||S^n|| - 2^{1/p} ||S^{tau-1}|| <= (p / ln 1.5) * OPT(jobs tau..n) for plain greedy.

    ``tau`` is 1-based.  ``opt_oracle(instance, params)`` must return an
    object with a ``value``; it defaults to exhaustive enumeration, which
    raises :class:`~lpbalance.errors.OracleTooLarge` on big suffixes.
    """
    if not params.finite:
        raise ValueError("the refined guarantee is stated for finite p")
    if not 1 <= tau <= inst.n:
        raise ValueError(f"tau must lie in [1, n={inst.n}]")
    if opt_oracle is None:
        from .offline import brute_force_opt as opt_oracle

    res = play(Greedy(params), arrivals_for(inst))
    opts = inst.option_tensor()
    chosen = opts[np.arange(inst.n), res.choices[0]]
    full = res.loads[0]
    prefix = np.zeros(inst.m)
    for t in range(tau - 1):
        prefix = prefix + chosen[t]
    p = params.p
    full_norm = float(lp_norm(full, p))
    prefix_norm = float(lp_norm(prefix, p))
    if full_norm <= 2.0 ** (1.0 / p) * prefix_norm:
        # ||S^n||^p <= 2 ||S^{tau-1}||^p: the left side is already <= 0
        return True
    suffix_opt = opt_oracle(inst.subsequence(tau - 1), params).value
    lhs = full_norm - 2.0 ** (1.0 / p) * prefix_norm
    return lhs <= refined_constant(p) * suffix_opt + REFINED_CONSTANT_TOL
