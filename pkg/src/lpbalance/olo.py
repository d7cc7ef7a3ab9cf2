"""Online linear optimization over the nonnegative l_q unit ball.

The player is the smoothed-baseline gradient rule: in round t it plays the
gradient of psi at the sum of the adversary vectors seen so far.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import OutOfRange
from .smoothing import PNormParams, SmoothingParams, lp_norm, psi, psi_gradient

TOL = 1e-9


@dataclass(frozen=True)
class OloPlayerState:
    sp: SmoothingParams
    accumulated: np.ndarray
    round: int = 0

    @classmethod
    def fresh(cls, sp: SmoothingParams) -> "OloPlayerState":
        return cls(sp, np.zeros(sp.m), 0)


@dataclass(frozen=True)
class RegretRecord:
    reward: float
    hindsight_opt: float
    radius: float
    eps: float
    bound_satisfied: bool
    # e^eps * reward >= psi(s^n) - psi(0), the per-run telescoping step
    telescoping_satisfied: bool = True
    rounds: int = 0

    @property
    def guaranteed(self) -> float:
        return math.exp(-self.eps) * (self.hindsight_opt - self.radius)


def _check_cube(w: np.ndarray, m: int) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape[-1] != m:
        raise ValueError(f"adversary vector has length {w.shape[-1]}, expected {m}")
    if not np.all(np.isfinite(w)) or w.min(initial=0.0) < 0 or w.max(initial=0.0) > 1:
        raise OutOfRange("adversary vectors must lie in [0,1]^m")
    return w


def olo_next_action(state: OloPlayerState) -> np.ndarray:
    return psi_gradient(state.accumulated, state.sp)


def olo_observe(state: OloPlayerState, w) -> OloPlayerState:
    w = _check_cube(w, state.sp.m)
    return OloPlayerState(state.sp, state.accumulated + w, state.round + 1)


def hindsight_opt(ws, params: PNormParams) -> float:
    """Best fixed action's reward, ||sum_t w^t||_p by norm duality."""
    ws = np.asarray(ws, dtype=float).reshape(-1, params.m)
    return float(lp_norm(ws.sum(axis=0), params.p))


def play_actions(ws, sp: SmoothingParams) -> np.ndarray:
    """All actions of the player against a fixed sequence, shape (n, m).

    Row t is the gradient at the exclusive prefix sum; the prefix sums are
    accumulated in the same order as repeated :func:`olo_observe` calls.
    """
    ws = _check_cube(np.asarray(ws, dtype=float).reshape(-1, sp.m), sp.m)
    prefix = np.zeros_like(ws)
    if len(ws) > 1:
        prefix[1:] = np.cumsum(ws[:-1], axis=0)
    return psi_gradient(prefix, sp)


def run_olo_game(ws, sp: SmoothingParams) -> RegretRecord:
    """Play the gradient player against ``ws`` and account the regret.

    Raises:
        OutOfRange: if some vector leaves the unit cube.
    """
    ws = _check_cube(np.asarray(ws, dtype=float).reshape(-1, sp.m), sp.m)
    actions = play_actions(ws, sp)
    reward = float(np.sum(ws * actions))
    total = ws.sum(axis=0)
    best = float(lp_norm(total, sp.p))
    R = sp.radius
    bound_ok = reward >= math.exp(-sp.eps) * (best - R) - TOL
    lhs = math.exp(sp.eps) * reward
    rhs = float(psi(total, sp)) - float(psi(np.zeros(sp.m), sp))
    tele_ok = lhs >= rhs - TOL * max(1.0, abs(rhs))
    return RegretRecord(reward, best, R, sp.eps, bool(bound_ok), bool(tele_ok), len(ws))


SEQUENCE_KINDS = ("random", "constant", "ones", "alternating")


def benchmark_sequence(kind: str, n: int, m: int, rng) -> np.ndarray:
    """Adversary sequences for the OLO benchmark, shape (n, m)."""
    ws = np.zeros((n, m))
    if kind == "random":
        return rng.random((n, m))
    if kind == "constant":
        ws[:, 0] = 1.0
    elif kind == "ones":
        ws[:] = 1.0
    elif kind == "alternating":
        # unit spikes that alternate between the first two coordinates
        ws[np.arange(n), np.arange(n) % min(2, m)] = 1.0
    else:
        raise ValueError(f"unknown sequence kind {kind!r}")
    return ws
