"""Instance families and the instance file format.

Families: the all-(1-eps) trap, the Walsh-system random-order lower bound,
the adaptive worst-case adversary, and seeded random instances.
"""

from __future__ import annotations

import functools
import io
import itertools
import json
import math
import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import NondeterministicAlgorithm, ParseError, RangeError
from .model import Assignment, Instance, JobMatrix
from .smoothing import INF

SCHEMA = 1


def gen_example1(m: int, eps: float) -> Instance:
    """m jobs; job i may load every machine by 1 - eps or only machine i by 1.

    Greedy (with or without restart) always takes the spread option and ends
    at l_inf load m (1 - eps), while OPT = 1 in l_inf.
    """
    if m < 1:
        raise ValueError("m must be positive")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    spread = np.full(m, 1.0 - eps)
    jobs = [JobMatrix.from_options([spread, np.eye(m)[i]]) for i in range(m)]
    return Instance(m, jobs, analytic_opt=1.0, analytic_p=INF,
                    provenance=f"example1(m={m}, eps={eps}); OPT=1 in l_inf")


@dataclass(frozen=True)
class WalshSystem:
    d: int
    vectors: np.ndarray  # (d, 2^d); row i-1 is v^i

    @property
    def m(self) -> int:
        return 1 << self.d

    def pick(self, i: int, complemented: bool = False) -> np.ndarray:
        """v^i (1-based i) or its complement."""
        v = self.vectors[i - 1]
        return 1.0 - v if complemented else v.copy()

    def intersection_count(self, subset: Sequence[int], complements: Sequence[bool]) -> int:
        mask = np.ones(self.m, dtype=bool)
        for i, c in zip(subset, complements):
            mask &= self.pick(i, c) == 1
        return int(mask.sum())

    def verify(self) -> None:
        """Exhaustive intersection check over all subsets and complement patterns."""
        for size in range(self.d + 1):
            for subset in itertools.combinations(range(1, self.d + 1), size):
                for pattern in itertools.product((False, True), repeat=size):
                    got = self.intersection_count(subset, pattern)
                    if got != self.m >> size:
                        raise AssertionError(
                            f"subset {subset} pattern {pattern}: {got} != {self.m >> size}"
                        )


def walsh_vectors(d: int) -> WalshSystem:
    """Columns of the 2^d x d matrix whose rows are all d-bit strings in increasing order."""
    return _walsh_vectors(d)


@functools.lru_cache(maxsize=None)
def _walsh_vectors(d: int) -> WalshSystem:
    if not 1 <= d <= 20:
        raise ValueError("d must lie in [1, 20]")
    rows = np.arange(1 << d)
    bits = (rows[None, :] >> np.arange(d - 1, -1, -1)[:, None]) & 1
    bits = bits.astype(float)
    bits.setflags(write=False)  # shared through the cache
    system = WalshSystem(d, bits)
    if d <= 6:
        system.verify()
    return system


def walsh_opt(p: int) -> float:
    m = 2**p
    return p * m ** (1.0 / p) / 2.0


def gen_walsh_instance(p: int, coin_seed=None, coins: Optional[Sequence[int]] = None) -> Instance:
    """The random-order lower-bound family on m = 2^p machines.

    For each i <= p/2 there is a forced job u^i (v^i or its complement by a
    fair coin) and a free job with options v^i and its complement.  ``coins``
    (1 = complemented) overrides the seeded coin flips.
    """
    if p < 2 or p % 2:
        raise ValueError("p must be an even integer >= 2")
    if p > 20:
        raise ValueError("m = 2^p must not exceed 2^20")
    system = walsh_vectors(p)
    half = p // 2
    if coins is None:
        coins = np.random.default_rng(coin_seed).integers(0, 2, size=half)
    coins = [int(c) for c in coins]
    if len(coins) != half:
        raise ValueError(f"need {half} coins")
    jobs = []
    for i in range(1, half + 1):
        v, vc = system.pick(i), system.pick(i, True)
        u = vc if coins[i - 1] else v
        jobs.append(JobMatrix.from_options([u]))
        jobs.append(JobMatrix.from_options([v, vc]))
    return Instance(2**p, jobs, analytic_opt=walsh_opt(p), analytic_p=float(p),
                    provenance=f"walsh(p={p}, coins={''.join(map(str, coins))}); OPT=p m^(1/p)/2")


@dataclass
class AdversaryRound:
    active: tuple
    pairs: tuple
    deactivated: tuple
    round_load: np.ndarray


@dataclass
class AdversaryTranscript:
    p: int
    M: int
    rounds: List[AdversaryRound]
    instance: Instance
    choices: Assignment
    algorithm_load: np.ndarray
    witness: Assignment
    witness_load: np.ndarray
    opt_upper: float = field(default=0.0)

    @property
    def m(self) -> int:
        return self.instance.m

    def lower_bound(self) -> float:
        """Load any algorithm is forced into: p M m^{1/p} / 2^{2 + 1/p}."""
        p = self.p
        return p * self.M * self.m ** (1.0 / p) / 2 ** (2 + 1.0 / p)


def gen_adversarial_wc(algorithm, M: int, p: int) -> AdversaryTranscript:
    """Drive a deterministic online policy through the halving adversary.

    ``algorithm`` is a policy from :mod:`lpbalance.balancing` (anything with
    ``start(n, m, batch)`` and ``choose(options)``).  m = 2^{p+1}; in each of
    the log m rounds the active machines are paired in ascending order, M
    copies of the job {e^a, e^b} are sent per pair, and the member that got
    less load during the round is deactivated (lower index on ties).
    """
    if not getattr(algorithm, "deterministic", False):
        raise NondeterministicAlgorithm("the adversary needs a deterministic algorithm")
    if int(p) != p or p < 2:
        raise ValueError("p must be an integer >= 2")
    if M < 1:
        raise ValueError("M must be positive")
    m = 2 ** (p + 1)
    if m > 2**16:
        raise ValueError("m = 2^(p+1) must not exceed 2^16")
    n = M * (m - 1)
    eye = np.eye(m)
    algorithm.start(n, m, 1)

    active = list(range(m))
    rounds, jobs, choices, witness = [], [], [], []
    total = np.zeros(m)
    for _ in range(p + 1):
        pairs = [(active[i], active[i + 1]) for i in range(0, len(active), 2)]
        round_load = np.zeros(m)
        for a, b in pairs:
            job = JobMatrix.from_options([eye[a], eye[b]])
            for _copy in range(M):
                j = int(algorithm.choose(job.options[None])[0])
                machine = (a, b)[j]
                round_load[machine] += 1.0
                total[machine] += 1.0
                jobs.append(job)
                choices.append(j)
        dropped = []
        for a, b in pairs:
            lose = b if round_load[b] < round_load[a] else a
            dropped.append(lose)
        for (a, b), lose in zip(pairs, dropped):
            witness.extend([0 if lose == a else 1] * M)
        rounds.append(AdversaryRound(tuple(active), tuple(pairs), tuple(dropped), round_load))
        active = [j for j in active if j not in set(dropped)]

    inst = Instance(m, jobs, provenance=f"adversary(p={p}, M={M})")
    witness = Assignment(witness)
    return AdversaryTranscript(
        p=p,
        M=M,
        rounds=rounds,
        instance=inst,
        choices=Assignment(choices),
        algorithm_load=total,
        witness=witness,
        witness_load=inst.load_of(witness.choices),
        opt_upper=M * m ** (1.0 / p),
    )


def _parse_distribution(distribution: str):
    name, _, arg = distribution.partition(":")
    name = name.strip().lower()
    if name == "uniform":
        return name, None
    if name == "bernoulli":
        rho = float(arg) if arg else 0.5
        if not 0 <= rho <= 1:
            raise ValueError("bernoulli rate must lie in [0, 1]")
        return name, rho
    if name == "sparse":
        s = int(arg) if arg else 1
        if s < 0:
            raise ValueError("sparsity must be nonnegative")
        return name, s
    raise ValueError(f"unknown distribution {distribution!r}")


def _draw_job(rng, m, k, kind, arg):
    if kind == "uniform":
        return rng.random((m, k))
    if kind == "bernoulli":
        return (rng.random((m, k)) < arg).astype(float)
    a = np.zeros((m, k))
    s = min(arg, m)
    for j in range(k):
        rows = rng.choice(m, size=s, replace=False)
        a[rows, j] = rng.random(s)
    return a


def gen_random(m: int, k: int, n: int, seed=None, distribution: str = "uniform",
               vary_k: bool = False, cap: Optional[int] = None) -> Instance:
    """Seeded random instance.

    ``distribution`` is "uniform", "bernoulli:<rho>" or "sparse:<s>".  With
    ``vary_k`` each job gets k_t uniform in 1..k.  With ``cap`` the option
    counts are trimmed (dropping trailing options of random jobs) until the
    number of assignments is at most ``cap``.
    """
    if m < 1 or k < 1 or n < 0:
        raise ValueError("need m, k >= 1 and n >= 0")
    kind, arg = _parse_distribution(distribution)
    rng = np.random.default_rng(seed)
    ks = rng.integers(1, k + 1, size=n) if vary_k else np.full(n, k)
    if cap is not None:
        while math.prod(int(x) for x in ks) > cap:
            big = np.flatnonzero(ks > 1)
            ks[rng.choice(big)] -= 1
    jobs = [JobMatrix(_draw_job(rng, m, int(kt), kind, arg)) for kt in ks]
    return Instance(m, jobs, provenance=f"random(m={m}, k={k}, n={n}, seed={seed}, {distribution})")


# --- file format -------------------------------------------------------------


def instance_to_dict(inst: Instance) -> dict:
    doc = {
        "schema": SCHEMA,
        "m": inst.m,
        "jobs": [job.entries.tolist() for job in inst.jobs],
    }
    if inst.analytic_opt is not None:
        doc["analytic_opt"] = inst.analytic_opt
        doc["analytic_p"] = "inf" if inst.analytic_p == INF else inst.analytic_p
    if inst.provenance:
        doc["provenance"] = inst.provenance
    return doc


def dumps_instance(inst: Instance) -> str:
    # json writes floats with repr(), the shortest string that reads back bit-exactly
    return json.dumps(instance_to_dict(inst), indent=1) + "\n"


def write_instance(inst: Instance, dest) -> None:
    text = dumps_instance(inst)
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        dest.write(text)


def _number(x, where):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ParseError(f"{where}: expected a number, got {x!r}")
    return float(x)


def instance_from_dict(doc) -> Instance:
    if not isinstance(doc, dict):
        raise ParseError("instance document must be an object", 1, 1)
    if "m" not in doc:
        raise ParseError("missing field 'm'", 1, 1)
    m = doc["m"]
    if isinstance(m, bool) or not isinstance(m, int) or m < 1:
        raise ParseError(f"'m' must be a positive integer, got {m!r}")
    raw_jobs = doc.get("jobs", [])
    if not isinstance(raw_jobs, list):
        raise ParseError("'jobs' must be an array")
    jobs = []
    for t, rows in enumerate(raw_jobs):
        if not isinstance(rows, list) or len(rows) != m:
            raise ParseError(f"job {t}: expected {m} rows")
        widths = {len(r) if isinstance(r, list) else -1 for r in rows}
        if len(widths) != 1 or widths.pop() < 1:
            raise ParseError(f"job {t}: rows must be nonempty arrays of equal length")
        entries = [[_number(x, f"job {t}") for x in r] for r in rows]
        a = np.array(entries)
        if a.min() < 0 or a.max() > 1:
            raise RangeError(f"job {t}: entries must lie in [0, 1]")
        jobs.append(JobMatrix(a))
    opt = doc.get("analytic_opt")
    ap = doc.get("analytic_p")
    if opt is not None:
        opt = _number(opt, "analytic_opt")
        ap = INF if ap == "inf" else (None if ap is None else _number(ap, "analytic_p"))
    return Instance(m, jobs, analytic_opt=opt, analytic_p=ap if opt is not None else None,
                    provenance=str(doc.get("provenance", "")))


def loads_instance(text: str) -> Instance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    return instance_from_dict(doc)


def read_instance(src) -> Instance:
    """Read an instance from a path or a text stream.

    Raises:
        ParseError: malformed document (line/column when the JSON itself is broken).
        RangeError: an entry outside [0, 1].
    """
    if isinstance(src, (str, os.PathLike)):
        with open(src, encoding="utf-8") as fh:
            text = fh.read()
    elif isinstance(src, io.IOBase) or hasattr(src, "read"):
        text = src.read()
    else:
        raise TypeError("read_instance expects a path or a readable stream")
    return loads_instance(text)


def adversary_vectors(inst: Instance) -> np.ndarray:
    """Stack single-option jobs as OLO adversary vectors (n x m)."""
    if any(k != 1 for k in inst.ks):
        raise ValueError("only instances whose jobs have exactly one option encode an OLO sequence")
    if inst.n == 0:
        return np.zeros((0, inst.m))
    return np.stack([job.options[0] for job in inst.jobs])

