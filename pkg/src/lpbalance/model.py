"""Jobs, instances and assignments for generalized load balancing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import RangeError


@dataclass(frozen=True, eq=False)
class JobMatrix:
    """One job: an m x k matrix whose columns are the processing options."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"job must be a nonempty m x k matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)) or a.min() < 0 or a.max() > 1:
            raise RangeError("job entries must lie in [0, 1]")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @classmethod
    def from_options(cls, options: Sequence[Sequence[float]]) -> "JobMatrix":
        """Build from a list of k load vectors (one per option)."""
        return cls(np.asarray(options, dtype=float).T)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def k(self) -> int:
        return self.entries.shape[1]

    @property
    def options(self) -> np.ndarray:
        """k x m view: row j is the load vector of option j."""
        return self.entries.T

    def __eq__(self, other):
        if not isinstance(other, JobMatrix):
            return NotImplemented
        return self.entries.shape == other.entries.shape and np.array_equal(
            self.entries, other.entries
        )

    def __hash__(self):
        return hash((self.entries.shape, self.entries.tobytes()))


@dataclass(frozen=True)
class Instance:
    """An ordered job sequence on m machines.

    ``analytic_opt`` is a known closed-form optimum; ``analytic_p`` says
    which norm it refers to (it only applies when the run uses that p).
    """

    m: int
    jobs: tuple = ()
    analytic_opt: Optional[float] = None
    analytic_p: Optional[float] = None
    provenance: str = ""

    def __post_init__(self):
        object.__setattr__(self, "jobs", tuple(self.jobs))
        if self.m < 1:
            raise ValueError("m must be positive")
        for t, job in enumerate(self.jobs):
            if not isinstance(job, JobMatrix):
                raise TypeError(f"job {t} is not a JobMatrix")
            if job.m != self.m:
                raise ValueError(f"job {t} has {job.m} rows, instance has m={self.m}")
        if self.analytic_opt is not None and self.analytic_opt < 0:
            raise ValueError("analytic_opt must be nonnegative")

    @property
    def n(self) -> int:
        return len(self.jobs)

    @property
    def ks(self) -> tuple:
        return tuple(job.k for job in self.jobs)

    def assignment_count(self) -> int:
        return math.prod(self.ks)

    def permuted(self, order: Sequence[int]) -> "Instance":
        order = list(order)
        if sorted(order) != list(range(self.n)):
            raise ValueError("order must be a permutation of range(n)")
        return Instance(
            self.m,
            tuple(self.jobs[i] for i in order),
            self.analytic_opt,
            self.analytic_p,
            self.provenance,
        )

    def subsequence(self, start: int, stop: Optional[int] = None) -> "Instance":
        """Jobs start..stop-1 (0-based); drops the analytic optimum."""
        return Instance(self.m, self.jobs[start:stop], provenance=self.provenance)

    def option_tensor(self) -> np.ndarray:
        """n x kmax x m array of options; short jobs are padded with copies of option 0.

        A padded copy ties with option 0 and so never wins a lowest-index argmin.
        """
        kmax = max(self.ks, default=1)
        out = np.empty((self.n, kmax, self.m))
        for t, job in enumerate(self.jobs):
            opts = job.options
            out[t, : job.k] = opts
            out[t, job.k :] = opts[0]
        return out

    def load_of(self, choices: Sequence[int]) -> np.ndarray:
        """Total load vector of an assignment, summed in job order."""
        if len(choices) != self.n:
            raise ValueError("assignment length differs from n")
        total = np.zeros(self.m)
        for job, j in zip(self.jobs, choices):
            if not 0 <= j < job.k:
                raise IndexError(f"option {j} out of range for a job with k={job.k}")
            total = total + job.options[j]
        return total

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.m == other.m
            and self.jobs == other.jobs
            and self.analytic_opt == other.analytic_opt
            and self.analytic_p == other.analytic_p
            and self.provenance == other.provenance
        )


@dataclass(frozen=True)
class Assignment:
    choices: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "choices", tuple(int(c) for c in self.choices))

    def __len__(self):
        return len(self.choices)

    def validate(self, inst: Instance) -> None:
        if len(self.choices) != inst.n:
            raise ValueError("assignment length differs from n")
        for t, (j, k) in enumerate(zip(self.choices, inst.ks)):
            if not 0 <= j < k:
                raise IndexError(f"job {t}: option {j} not in range({k})")
