"""Offline optimum oracles.

``brute_force_opt`` enumerates every integral assignment (with identical
partial load vectors merged, which keeps 0/1 instances cheap).
``fractional_lower_bound`` runs conditional gradient on the fractional
relaxation and returns a certified lower bound from the duality gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import EnumerationTooLarge
from .model import Assignment, Instance
from .smoothing import PNormParams, dual_norm, lp_norm

DEFAULT_CAP = 10**6


@dataclass(frozen=True)
class OptResult:
    value: float
    kind: str  # "exact" | "lower_bound" | "analytic"
    certificate: Any = None


def _first_unique_rows(a: np.ndarray) -> np.ndarray:
    """Sorted indices of the first occurrence of each distinct row."""
    a = a + 0.0  # folds -0.0 into 0.0 so equal rows have equal bytes
    rows = a.view(np.dtype((np.void, a.dtype.itemsize * a.shape[1]))).ravel()
    _, first = np.unique(rows, return_index=True)
    return np.sort(first)


def brute_force_opt(inst: Instance, params: PNormParams, cap: int = DEFAULT_CAP) -> OptResult:
    """Exact optimum by enumeration; ties go to the lexicographically smallest assignment.

    Raises:
        EnumerationTooLarge: if the product of option counts exceeds ``cap``.
    """
    count = inst.assignment_count()
    if count > cap:
        raise EnumerationTooLarge(f"{count} assignments exceed the cap {cap}")
    if inst.n == 0:
        return OptResult(0.0, "exact", Assignment(()))

    # States are kept in lexicographic order of their (first) prefix; merging
    # equal partial loads keeps the first, i.e. smallest, prefix.
    loads = np.zeros((1, inst.m))
    parents, picks = [], []
    for job in inst.jobs:
        k = job.k
        if k == 1:
            # a shift keeps the states distinct and in order
            loads = loads + job.options[0]
            parents.append(None)
            picks.append(None)
            continue
        expanded = np.ascontiguousarray((loads[:, None, :] + job.options[None, :, :]).reshape(-1, inst.m))
        keep = _first_unique_rows(expanded)
        parents.append(keep // k)
        picks.append(keep % k)
        loads = expanded[keep]

    values = lp_norm(loads, params.p)
    best = int(np.argmin(values))
    choices = []
    state = best
    for par, pick in zip(reversed(parents), reversed(picks)):
        if par is None:
            choices.append(0)
            continue
        choices.append(int(pick[state]))
        state = int(par[state])
    choices.reverse()
    return OptResult(float(values[best]), "exact", Assignment(tuple(choices)))


def _dual_value(g: np.ndarray, opts: np.ndarray, valid: np.ndarray, p: float) -> float:
    # weak duality: any g >= 0 with ||g||_q <= 1 gives OPT >= sum_t min_j <g, A^t_j>
    scores = np.where(valid, opts @ g, np.inf)
    nq = float(dual_norm(g, p))
    return float(scores.min(axis=1).sum()) / max(1.0, nq)


def fractional_lower_bound(inst: Instance, params: PNormParams, max_iters: int = 5000,
                           tol: float = 1e-4) -> OptResult:
    """Certified lower bound on OPT from the fractional relaxation.

    Conditional gradient over the product of per-job simplices, starting at
    the uniform assignment.  The certificate is the final duality gap; the
    returned value is the best dual bound seen, which never exceeds the
    integral (or fractional) optimum.
    """
    if not params.finite:
        raise ValueError("fractional_lower_bound needs a finite p")
    p = params.p
    if inst.n == 0:
        return OptResult(0.0, "lower_bound", 0.0)
    ks = np.array(inst.ks)
    kmax = int(ks.max())
    opts = np.zeros((inst.n, kmax, inst.m))
    valid = np.arange(kmax)[None, :] < ks[:, None]
    for t, job in enumerate(inst.jobs):
        opts[t, : job.k] = job.options

    x = valid / ks[:, None]
    load = np.einsum("tj,tjm->m", x, opts)
    best_lb = 0.0
    gap = math.inf
    rows = np.arange(inst.n)
    for _ in range(max_iters):
        value = float(lp_norm(load, p))
        if value <= 0:
            return OptResult(0.0, "lower_bound", 0.0)
        g = np.power(load / value, p - 1.0)  # gradient of ||.||_p at load
        scores = np.where(valid, opts @ g, np.inf)
        pick = scores.argmin(axis=1)
        target = opts[rows, pick].sum(axis=0)
        gap = max(0.0, float(g @ load - g @ target))
        best_lb = max(best_lb, _dual_value(g, opts, valid, p))
        if gap <= tol * value:
            break
        direction = target - load
        res = minimize_scalar(
            lambda s: float(lp_norm(np.maximum(load + s * direction, 0.0), p)),
            bounds=(0.0, 1.0),
            method="bounded",
            options={"xatol": 1e-10},
        )
        step = float(res.x)
        if float(lp_norm(load + step * direction, p)) > value:
            step = 2.0 / (_ + 2.0)
        x = (1.0 - step) * x
        x[rows, pick] += step
        load = np.einsum("tj,tjm->m", x, opts)
    return OptResult(best_lb, "lower_bound", gap)


def analytic_applies(inst: Instance, params: PNormParams) -> bool:
    if inst.analytic_opt is None:
        return False
    return inst.analytic_p is None or inst.analytic_p == params.p


def opt_bound(inst: Instance, params: PNormParams, cap: int = DEFAULT_CAP,
              mode: str = "auto", max_iters: int = 5000, tol: float = 1e-4) -> OptResult:
    """Best available handle on OPT: analytic, else exact, else a lower bound.

    ``mode`` forces one route ("analytic", "brute", "fractional").
    """
    if mode in ("auto", "analytic") and analytic_applies(inst, params):
        return OptResult(float(inst.analytic_opt), "analytic", inst.provenance)
    if mode == "analytic":
        raise ValueError("instance carries no analytic optimum for this p")
    if mode == "brute" or (mode == "auto" and inst.assignment_count() <= cap):
        return brute_force_opt(inst, params, cap)
    if mode in ("auto", "fractional"):
        return fractional_lower_bound(inst, params, max_iters, tol)
    raise ValueError(f"unknown opt mode {mode!r}")


def optional_opt(inst: Instance, params: PNormParams, **kw) -> Optional[OptResult]:
    """opt_bound, or None when no route applies (e.g. fractional with p = INF)."""
    try:
        return opt_bound(inst, params, **kw)
    except ValueError:
        return None
