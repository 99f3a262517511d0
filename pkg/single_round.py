"""
Single-round allocation of a round budget over a realized frontier.

The expected number of recruits of an allocation decomposes into survival
probabilities, so the unit-by-unit greedy rule is optimal.
"""

import heapq
import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import comb

from data.constants import MAX_ENUMERATION
from distributions import Pmf, PopulationModel, population_prefix, population_survival

logger = logging.getLogger(__name__)


class EnumerationLimitError(ValueError):
    pass


@dataclass(frozen=True)
class Allocation:
    """Units per frontier member, k_1..k_n."""

    units: Tuple[int, ...]

    def __post_init__(self):
        units = tuple(int(k) for k in self.units)
        if any(k < 0 for k in units):
            raise ValueError(f"allocation entries must be non-negative, got {units}")
        object.__setattr__(self, 'units', units)

    @classmethod
    def zeros(cls, n: int) -> "Allocation":
        return cls((0,) * n)

    @property
    def total(self) -> int:
        return sum(self.units)

    def __len__(self):
        return len(self.units)

    def __iter__(self):
        return iter(self.units)

    def __getitem__(self, i):
        return self.units[i]


@dataclass(frozen=True)
class EvenParams:
    a: int
    c: int


def marginal_prefix(d: Pmf, k: int) -> float:
    """sum_{l=1}^{k} p_D(l), the expected value of min(k, X)."""
    tail = d.survival_table
    return float(tail[1:k + 1].sum()) if k > 0 else 0.0


def _check_lengths(alloc, frontier):
    if len(alloc) != len(frontier):
        raise ValueError(f"allocation has {len(alloc)} entries for a frontier of {len(frontier)}")


def expected_reward(alloc: Sequence[int], frontier: Sequence[Pmf]) -> float:
    """E[sum_i min(k_i, X_i)] for the allocation."""
    _check_lengths(alloc, frontier)
    return float(sum(marginal_prefix(d, int(k)) for k, d in zip(alloc, frontier)))


def greedy_sequence(frontier: Sequence[Pmf], s: int) -> List[int]:
    """Member indices in the order the greedy rule hands out units.

    Each unit goes to the member with the largest next survival probability,
    lowest index first on ties. Stops early once every remaining marginal is 0.
    """
    if s < 0:
        raise ValueError(f"round budget must be non-negative, got {s}")
    heap = [(-d.survival(1), i) for i, d in enumerate(frontier)]
    heapq.heapify(heap)
    counts = [0] * len(frontier)
    picks = []
    while heap and len(picks) < s:
        neg_marginal, i = heapq.heappop(heap)
        if neg_marginal >= 0.0:
            break
        counts[i] += 1
        picks.append(i)
        heapq.heappush(heap, (-frontier[i].survival(counts[i] + 1), i))
    return picks


def greedy_allocate(frontier: Sequence[Pmf], s: int) -> Allocation:
    """Per-member unit counts of the greedy rule for round budget s."""
    counts = [0] * len(frontier)
    for i in greedy_sequence(frontier, s):
        counts[i] += 1
    return Allocation(tuple(counts))


def compositions(n, s):
    """All non-negative integer vectors of length n with sum <= s."""
    if n == 0:
        yield ()
        return
    for k in range(s + 1):
        for rest in compositions(n - 1, s - k):
            yield (k,) + rest


def brute_force_allocate(frontier: Sequence[Pmf], s: int) -> Tuple[Allocation, float]:
    """Exhaustive maximization of the expected reward over all allocations."""
    n = len(frontier)
    count = comb(s + n, n, exact=True)
    if count > MAX_ENUMERATION:
        raise EnumerationLimitError(f"{count} allocations exceed the enumeration limit {MAX_ENUMERATION}")
    # per-member value of k units, k = 0..s
    values = [[marginal_prefix(d, k) for k in range(s + 1)] for d in frontier]
    best, best_value = (0,) * n, 0.0
    for ks in compositions(n, s):
        v = float(sum(values[i][k] for i, k in enumerate(ks)))
        if v > best_value:
            best, best_value = ks, v
    return Allocation(best), expected_reward(best, frontier)


def even_params(s: int, n: int) -> EvenParams:
    if n <= 0:
        raise ValueError("even allocation needs a non-empty frontier")
    if s < 0:
        raise ValueError(f"round budget must be non-negative, got {s}")
    a = s // n
    return EvenParams(a=a, c=s - a * n)


def even_value(p: PopulationModel, s: int, n: int) -> float:
    """Population-level single-round value of the even allocation."""
    params = even_params(s, n)
    return n * population_prefix(p, params.a) + params.c * population_survival(p, params.a + 1)


def single_round_values(frontier: Sequence[Pmf], s_max: int) -> np.ndarray:
    """v_s for s = 0..s_max along the greedy path."""
    picks = greedy_sequence(frontier, s_max)
    counts = [0] * len(frontier)
    gains = []
    for i in picks:
        counts[i] += 1
        gains.append(frontier[i].survival(counts[i]))
    gains += [0.0] * (s_max - len(picks))
    return np.concatenate([[0.0], np.cumsum(gains)])
