"""
Truncated probability generating functions.

A PGF truncated at degree s holds Pr(Y = j) for j < s and Pr(Y >= s) at
degree s, i.e. the distribution of min(Y, s). Products of truncated PGFs
stay exact after merging the overflow back into degree s, because
min(X + Y, s) = min(min(X, s) + min(Y, s), s).
"""

import logging
import threading
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

from data.constants import CLAMP_TOLERANCE
from distributions import Pmf, PopulationModel
from single_round import even_params

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TruncatedPoly:
    """Coefficients for degrees 0..cap; all overflow mass sits at ``cap``."""

    coeffs: np.ndarray
    cap: int

    def __post_init__(self):
        object.__setattr__(self, 'coeffs', _fold(np.asarray(self.coeffs, dtype=np.float64), int(self.cap)))

    @property
    def mass(self) -> float:
        return float(self.coeffs.sum())

    def __len__(self):
        return self.coeffs.size


def _fold(coeffs, cap):
    """Merge degrees above ``cap`` into ``cap``, pad to length cap + 1, clamp."""
    if cap < 0:
        raise ValueError(f"degree cap must be non-negative, got {cap}")
    out = np.zeros(cap + 1)
    head = coeffs[:cap + 1]
    out[:head.size] = head
    if coeffs.size > cap + 1:
        out[cap] += coeffs[cap + 1:].sum()
    out[out < 0.0] = 0.0
    total = out.sum()
    if total > 0.0 and abs(total - 1.0) > CLAMP_TOLERANCE:
        out /= total
    out.setflags(write=False)
    return out


def unit_poly(cap: int = 0) -> TruncatedPoly:
    return TruncatedPoly(np.array([1.0]), cap)


def truncated_pgf(d: Pmf, s: int) -> TruncatedPoly:
    """PGF of min(X, s) for X ~ d."""
    if s < 0:
        raise ValueError(f"degree cap must be non-negative, got {s}")
    coeffs = np.zeros(s + 1)
    head = d.probs[:s]
    coeffs[:head.size] = head
    coeffs[s] = d.survival(s)
    return TruncatedPoly(coeffs, s)


def poly_mul_trunc(p: TruncatedPoly, q: TruncatedPoly, s: int) -> TruncatedPoly:
    a = _fold(p.coeffs, s)
    b = _fold(q.coeffs, s)
    return TruncatedPoly(np.convolve(a, b), s)


def poly_pow_trunc(p: TruncatedPoly, e: int, s: int) -> TruncatedPoly:
    """p**e by repeated squaring, truncating to degree s after every product."""
    if e < 0:
        raise ValueError(f"exponent must be non-negative, got {e}")
    result = unit_poly(s)
    base = TruncatedPoly(p.coeffs, s)
    while e:
        if e & 1:
            result = poly_mul_trunc(result, base, s)
        e >>= 1
        if e:
            base = poly_mul_trunc(base, base, s)
    return result


class PowerCache:
    """Memo of population-averaged truncated PGF powers, keyed (k, e, cap).

    One cache serves one population; lookups are guarded so concurrent
    sweeps see consistent entries.
    """

    def __init__(self, population: PopulationModel):
        self.population = population
        self._bases: Dict[int, TruncatedPoly] = {}
        self._powers: Dict[Tuple[int, int, int], TruncatedPoly] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def base(self, k: int) -> TruncatedPoly:
        with self._lock:
            g = self._bases.get(k)
        if g is None:
            g = truncated_pgf(self.population.mean, k)
            with self._lock:
                self._bases.setdefault(k, g)
        return g

    def power(self, k: int, e: int, cap: int) -> TruncatedPoly:
        key = (k, e, cap)
        with self._lock:
            hit = self._powers.get(key)
            if hit is not None:
                self.hits += 1
                return hit
            self.misses += 1
        value = poly_pow_trunc(self.base(k), e, cap)
        with self._lock:
            return self._powers.setdefault(key, value)

    def __len__(self):
        return len(self._powers)


def next_frontier_dist(p: PopulationModel, n: int, s: int, cache: PowerCache = None) -> np.ndarray:
    """Pr(N = m), m = 0..s, for the even allocation of s units over n members."""
    if n <= 0:
        raise ValueError("next frontier distribution needs a non-empty frontier")
    if s == 0:
        return np.array([1.0])
    if cache is None:
        cache = PowerCache(p)
    params = even_params(s, n)
    low = cache.power(params.a, n - params.c, s)
    high = cache.power(params.a + 1, params.c, s)
    return np.array(poly_mul_trunc(low, high, s).coeffs)


def greedy_frontier_dist(frontier: Sequence[Pmf], alloc: Sequence[int]) -> np.ndarray:
    """Distribution of sum_i min(k_i, X_i) as a product of truncated PGFs."""
    if len(alloc) != len(frontier):
        raise ValueError(f"allocation has {len(alloc)} entries for a frontier of {len(frontier)}")
    cap = int(sum(alloc))
    result = unit_poly(cap)
    for d, k in zip(frontier, alloc):
        if k > 0:
            result = poly_mul_trunc(result, truncated_pgf(d, int(k)), cap)
    return np.array(result.coeffs)
