"""
Population-level surrogate value table U(r, n) and the round-budget rule
that plans against it.

U(r, n) is the best discounted number of recruits from remaining budget r
and a frontier of n members whose distributions are drawn from the
population but not observed. The table is filled row by row in r; each
entry maximizes over the round budget s with the even allocation, whose
next-frontier distribution comes from truncated PGF powers.
"""

import hashlib
import json
import logging
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from distributions import Pmf, PopulationModel
from pgf import PowerCache, greedy_frontier_dist, next_frontier_dist
from single_round import even_value, greedy_sequence

logger = logging.getLogger(__name__)


def _offset(r):
    return r * (r + 1) // 2


@dataclass(frozen=True, eq=False)
class ValueTable:
    """Triangular table u(r, n), 0 <= n <= r <= budget_cap, stored r-major."""

    values: np.ndarray
    budget_cap: int
    discount: float
    population_digest: str = ''
    choices: Optional[np.ndarray] = None

    def __post_init__(self):
        expected = _offset(self.budget_cap + 1)
        if self.values.shape != (expected,):
            raise ValueError(f"table for budget {self.budget_cap} needs {expected} entries, got {self.values.shape}")
        if not 0.0 < self.discount < 1.0:
            raise ValueError(f"discount must lie in (0, 1), got {self.discount}")

    def entry(self, r: int, n: int) -> float:
        if not 0 <= n <= r <= self.budget_cap:
            raise IndexError(f"({r}, {n}) is outside the table of budget {self.budget_cap}")
        return float(self.values[_offset(r) + n])

    def row(self, r: int) -> np.ndarray:
        return self.values[_offset(r):_offset(r + 1)]

    def best_round_budget(self, r: int, n: int) -> int:
        """Maximizing s recorded for (r, n) during the sweep."""
        if self.choices is None:
            raise ValueError("table was loaded without round-budget choices")
        return int(self.choices[_offset(r) + min(n, r)])


def lookup(t: ValueTable, r: int, n: int) -> float:
    """u(r, min(n, r)); members beyond the remaining budget cannot get a unit."""
    if r < 0 or r > t.budget_cap:
        raise ValueError(f"remaining budget {r} outside table range 0..{t.budget_cap}")
    if n < 0:
        raise ValueError(f"frontier size must be non-negative, got {n}")
    return t.entry(r, min(n, r))


def compute_table(p: PopulationModel, b: int, gamma: float, cache: PowerCache = None) -> ValueTable:
    """Fill u(r, n) for every 0 <= n <= r <= b, rows in increasing r.

    Each entry maximizes the even-allocation value of a round budget s plus
    the discounted table value of the next frontier distribution.
    """
    if b < 0:
        raise ValueError(f"budget must be non-negative, got {b}")
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"discount must lie in (0, 1), got {gamma}")
    started = time.perf_counter()
    cache = cache if cache is not None else PowerCache(p)

    values = np.zeros(_offset(b + 1))
    choices = np.zeros(_offset(b + 1), dtype=np.int64)
    # clamped[r, m] = u(r, min(m, r)), filled once row r is final
    clamped = np.zeros((b + 1, b + 1))
    transitions = {}
    immediate = {}

    for r in range(1, b + 1):
        base = _offset(r)
        for n in range(1, r + 1):
            objectives = np.empty(r + 1)
            # s = 0 recruits nobody and ends the process
            objectives[0] = 0.0
            for s in range(1, r + 1):
                key = (n, s)
                if key not in transitions:
                    transitions[key] = next_frontier_dist(p, n, s, cache)
                    immediate[key] = even_value(p, s, n)
                cont = float(np.dot(transitions[key], clamped[r - s, :s + 1]))
                objectives[s] = immediate[key] + gamma * cont
            s_best = int(np.argmax(objectives))
            values[base + n] = objectives[s_best]
            choices[base + n] = s_best
        row = values[base:base + r + 1]
        clamped[r, :r + 1] = row
        clamped[r, r + 1:] = row[r]
        logger.debug("surrogate row r=%d done, u(r,1)=%.6f", r, row[1])

    elapsed = time.perf_counter() - started
    logger.info("surrogate table b=%d gamma=%.3f built in %.2fs (%d cached powers, %d hits)",
                b, gamma, elapsed, len(cache), cache.hits)
    values.setflags(write=False)
    choices.setflags(write=False)
    return ValueTable(values=values, budget_cap=b, discount=float(gamma),
                      population_digest=p.digest(), choices=choices)


def round_budget_objectives(t: ValueTable, frontier_estimates: Sequence[Pmf], r: int) -> np.ndarray:
    """Expected N + gamma * u(r - s, N) for s = 0..r under greedy allocation."""
    if not frontier_estimates:
        raise ValueError("cannot plan for an empty frontier")
    if r < 0 or r > t.budget_cap:
        raise ValueError(f"remaining budget {r} outside table range 0..{t.budget_cap}")
    picks = greedy_sequence(frontier_estimates, r)
    counts = [0] * len(frontier_estimates)
    objectives = np.zeros(r + 1)
    dist = np.array([1.0])
    for s in range(r + 1):
        if 0 < s <= len(picks):
            counts[picks[s - 1]] += 1
            dist = greedy_frontier_dist(frontier_estimates, counts)
        m = np.arange(dist.size)
        # lookup clamp n -> min(n, r - s), vectorized over m
        cont = t.row(r - s)[np.minimum(m, r - s)]
        objectives[s] = float(np.dot(dist, m + t.discount * cont))
    return objectives


def select_round_budget(t: ValueTable, frontier_estimates: Sequence[Pmf], r: int) -> int:
    """Smallest s maximizing the surrogate objective."""
    return int(np.argmax(round_budget_objectives(t, frontier_estimates, r)))


def table_checksum(t: ValueTable) -> str:
    return hashlib.sha256(np.ascontiguousarray(t.values, dtype='<f8').tobytes()).hexdigest()


def save_table(t: ValueTable, path) -> str:
    """Write the table as JSON and return its SHA-256 checksum."""
    checksum = table_checksum(t)
    payload = {
        'budget_cap': t.budget_cap,
        'discount': t.discount,
        'population_digest': t.population_digest,
        'checksum': checksum,
        'values': [float(v) for v in t.values],
        'choices': None if t.choices is None else [int(v) for v in t.choices],
    }
    with open(path, 'w') as f:
        json.dump(payload, f)
    return checksum


def load_table(path) -> ValueTable:
    """Read a table written by ``save_table``; a stored checksum must match."""
    with open(path, 'r') as f:
        payload = json.load(f)
    choices = payload.get('choices')
    table = ValueTable(
        values=np.array(payload['values'], dtype=np.float64),
        budget_cap=int(payload['budget_cap']),
        discount=float(payload['discount']),
        population_digest=payload.get('population_digest', ''),
        choices=None if choices is None else np.array(choices, dtype=np.int64),
    )
    if payload.get('checksum') and payload['checksum'] != table_checksum(table):
        raise ValueError(f"checksum mismatch in table file {path}")
    return table
