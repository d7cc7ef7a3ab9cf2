"""l_p norms, the smoothed norm psi and the linearization estimate.

Every function here works on the last axis of its array arguments, so a
batch of load vectors of shape ``(..., m)`` is handled in one call.  A 1-D
input gives a scalar (or a 1-D vector for the gradients).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ZeroVector

INF = math.inf

__all__ = [
    "INF",
    "PNormParams",
    "SmoothingParams",
    "lp_norm",
    "dual_norm",
    "psi",
    "psi_gradient",
    "linlp_vector",
    "linlp_bound",
    "effective_p",
    "radius",
]


@dataclass(frozen=True)
class PNormParams:
    p: float
    m: int

    def __post_init__(self):
        if not (self.p == INF or self.p >= 2):
            raise ValueError(f"p must be >= 2 or INF, got {self.p}")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m}")

    @property
    def q(self) -> float:
        """Hölder conjugate p / (p - 1)."""
        if self.p == INF:
            raise ValueError("the conjugate exponent of INF is not used here")
        return self.p / (self.p - 1.0)

    @property
    def finite(self) -> bool:
        return self.p != INF


@dataclass(frozen=True)
class SmoothingParams:
    base: PNormParams
    eps: float

    def __post_init__(self):
        if not self.base.finite:
            raise ValueError("smoothing needs a finite p; map INF through effective_p first")
        if not 0 < self.eps <= 1:
            raise ValueError(f"eps must lie in (0, 1], got {self.eps}")

    @classmethod
    def of(cls, p: float, m: int, eps: float) -> "SmoothingParams":
        return cls(PNormParams(p, m), eps)

    @property
    def p(self) -> float:
        return self.base.p

    @property
    def m(self) -> int:
        return self.base.m

    @property
    def radius(self) -> float:
        # derived on every access so it can never go stale
        return radius(self.p, self.m, self.eps)


def radius(p: float, m: int, eps: float) -> float:
    """Additive smoothing error p (m^{1/p} - 1) / eps."""
    return p * math.expm1(math.log(m) / p) / eps


def _as_loads(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        raise ValueError("expected a vector of loads")
    return u


def lp_norm(u, p: float):
    """l_p norm along the last axis, computed after scaling by the max entry.

    The scaled entries lie in [0, 1], so their p-th powers never overflow;
    p = INF returns the max entry.
    """
    u = _as_loads(u)
    if p == INF:
        return u.max(axis=-1)
    top = u.max(axis=-1, keepdims=True)
    scale = np.where(top > 0, top, 1.0)
    s = np.sum(np.power(u / scale, p), axis=-1)
    return top[..., 0] * np.power(s, 1.0 / p)


def dual_norm(v, p: float):
    """l_q norm of v where q is the conjugate of p."""
    return lp_norm(v, p / (p - 1.0))


def _log_weights(u, sp: SmoothingParams):
    # a_i = p log(1 + eps u_i / p) = log f(u_i)
    p = sp.p
    a = p * np.log1p(sp.eps * _as_loads(u) / p)
    amax = a.max(axis=-1, keepdims=True)
    lse = amax[..., 0] + np.log(np.sum(np.exp(a - amax), axis=-1))
    return a, lse


def psi(u, sp: SmoothingParams):
    """Smoothed norm (p/eps) ||1 + eps u / p||_p - p/eps.

    Evaluated as (p/eps) expm1(logsumexp(a) / p) with a_i = p log1p(eps u_i / p),
    which avoids both overflow for large p and the cancellation of the
    two p/eps terms near the origin.
    """
    _, lse = _log_weights(u, sp)
    return sp.p / sp.eps * np.expm1(lse / sp.p)


def psi_gradient(u, sp: SmoothingParams) -> np.ndarray:
    """Gradient of psi: (1 + eps u_i/p)^{p-1} / (sum_j (1 + eps u_j/p)^p)^{1-1/p}.

    In log form this is softmax(a)_i ** (1 - 1/p), so its l_q norm is 1 up
    to rounding.
    """
    a, lse = _log_weights(u, sp)
    return np.exp((1.0 - 1.0 / sp.p) * (a - lse[..., None]))


def linlp_vector(u, params: PNormParams) -> np.ndarray:
    """The dual vector g(u) = (u_i / ||u||_p)^{p-1} of the linearization bound.

    Raises:
        ZeroVector: if u is the origin.
    """
    if not params.finite:
        raise ValueError("linlp_vector needs a finite p")
    u = _as_loads(u)
    norm = lp_norm(u, params.p)
    if np.any(norm <= 0):
        raise ZeroVector("linearization is undefined at u = 0")
    return np.power(u / np.asarray(norm)[..., None], params.p - 1.0)


def linlp_bound(u, v, params: PNormParams):
    """Upper estimate ||u||_p + <g(u), v> + (p - 1) ||v||_p^2 / (2 ||u||_p) of ||u + v||_p."""
    u = _as_loads(u)
    v = _as_loads(v)
    g = linlp_vector(u, params)
    nu = lp_norm(u, params.p)
    nv = lp_norm(v, params.p)
    return nu + np.sum(g * v, axis=-1) + (params.p - 1.0) * nv**2 / (2.0 * nu)


def effective_p(m: int, eps: float) -> float:
    """Finite exponent max(2, ln m / eps) standing in for l_inf."""
    if m < 2:
        raise ValueError("effective_p needs m >= 2")
    if not 0 < eps <= 1:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    return max(2.0, math.log(m) / eps)
