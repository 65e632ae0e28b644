"""Exact run-length combinatorics for finite Bernoulli blocks.

A block of T slots is "controllable" when its success/failure sequence
contains a run of at least v consecutive successes.  ``chi`` evaluates the
probability of that event in closed form (inclusion-exclusion over run
placements); ``chi_bruteforce`` recomputes it by enumerating all 2^T
sequences and is the ground-truth oracle for ``chi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "BlockShape",
    "chi",
    "chi_bruteforce",
    "truncated_geometric_mean",
]

_BRUTE_FORCE_MAX_T = 24


@dataclass(frozen=True)
class BlockShape:
    """Slots per block (T) and required success-run length (v)."""

    T: int
    v: int

    def __post_init__(self):
        if self.T < 1:
            raise ValueError(f"block length T must be >= 1, got {self.T}")
        if self.v < 1:
            raise ValueError(f"run length v must be >= 1, got {self.v}")
        if self.v > self.T:
            # v > T can never be satisfied; treat as a configuration mistake
            # rather than silently returning probability 0.
            raise ValueError(f"run length v={self.v} exceeds block length T={self.T}")


def _check_prob(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0) or np.any(np.isnan(arr)):
        raise ValueError(f"{name} must lie in [0, 1], got {x!r}")
    return arr


def chi(shape: BlockShape, x):
    """Probability that T i.i.d. Bernoulli(x) slots contain a run of >= v ones.

    Accepts a scalar or ndarray ``x``; returns the same shape.  The
    alternating inclusion-exclusion sum can undershoot 0 (or overshoot 1) by
    a few ulps, so the result is clamped to [0, 1].
    """
    arr = _check_prob(x)
    T, v = shape.T, shape.v
    total = np.zeros_like(arr)
    one_minus = 1.0 - arr
    for l in range(1, (T + 1) // (v + 1) + 1):
        # binomials computed in exact integer arithmetic, one float conversion
        coeff = float(math.comb(T - l * v, l - 1))
        boundary = arr + ((T - l * v + 1) / l) * one_minus
        term = coeff * boundary * arr ** (l * v) * one_minus ** (l - 1)
        total += term if l % 2 == 1 else -term
    out = np.clip(total, 0.0, 1.0)
    return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out


@lru_cache(maxsize=32)
def _run_histogram(T: int) -> np.ndarray:
    """counts[o, r] = number of length-T bit strings with o ones, max run r."""
    states = np.arange(1 << T, dtype=np.uint32)
    ones = np.zeros(states.shape, dtype=np.int64)
    run = np.zeros(states.shape, dtype=np.int64)
    best = np.zeros(states.shape, dtype=np.int64)
    for i in range(T):
        bit = (states >> i) & 1
        ones += bit
        run = (run + 1) * bit
        np.maximum(best, run, out=best)
    counts = np.zeros((T + 1, T + 1), dtype=np.int64)
    np.add.at(counts, (ones, best), 1)
    return counts


def chi_bruteforce(shape: BlockShape, x: float) -> float:
    """Run probability by direct enumeration of all 2^T sequences.

    Independent oracle for ``chi``: sums the Bernoulli weight
    x^ones (1-x)^zeros of every sequence whose longest success run is >= v.
    Enumeration is cached per T, so repeated (v, x) queries are cheap.
    """
    if shape.T > _BRUTE_FORCE_MAX_T:
        raise ValueError(
            f"brute-force enumeration limited to T <= {_BRUTE_FORCE_MAX_T}, got T={shape.T}"
        )
    xf = float(_check_prob(x))
    counts = _run_histogram(shape.T)
    T, v = shape.T, shape.v
    total = 0.0
    for o in range(T + 1):
        n_qualifying = int(counts[o, v:].sum())
        if n_qualifying:
            total += n_qualifying * xf**o * (1.0 - xf) ** (T - o)
    return total


def truncated_geometric_mean(p: float, T: int):
    """Mean number of leading failures in a T-slot block given >= 1 success.

    Evaluates q/p - T q^T / (1 - q^T) with q = 1 - p.  The same expression is
    the mean number of trailing failure slots after the last success, by
    symmetry of the within-block failure runs.  Clamped to the analytic
    range [0, T-1] (the two fractions cancel exactly at T=1, where float
    round-off can leave a ~1e-13 residue).
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    arr = np.asarray(p, dtype=float)
    if np.any(arr <= 0.0) or np.any(arr > 1.0):
        raise ValueError(f"p must lie in (0, 1], got {p!r}")
    q = 1.0 - arr
    qT = q**T
    out = np.clip(q / arr - T * qT / (1.0 - qT), 0.0, float(T - 1))
    return float(out) if np.ndim(p) == 0 else out
