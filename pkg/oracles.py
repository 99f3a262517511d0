"""
Exhaustive reference computations for tiny instances.

Everything here enumerates: referral outcomes, allocations, round budgets
and next-frontier compositions. It is only usable at toy scale and exists to
check the fast paths.
"""

import itertools
import logging
import math
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import comb

from data.constants import MAX_ENUMERATION
from diagnostics import realized_regret, single_round_bound, tightness_instance
from distributions import Pmf, PopulationModel, point_mass
from pgf import greedy_frontier_dist, next_frontier_dist
from single_round import (EnumerationLimitError, compositions, brute_force_allocate, even_params,
                          even_value, expected_reward, greedy_allocate, single_round_values)
from surrogate_dp import compute_table, lookup

logger = logging.getLogger(__name__)

ORACLE_TOLERANCE = 1e-9


def outcome_distribution(frontier: Sequence[Pmf], alloc: Sequence[int]) -> np.ndarray:
    """Pr(sum_i min(k_i, X_i) = m) by walking every joint outcome of the X_i."""
    if len(frontier) != len(alloc):
        raise ValueError(f"allocation has {len(alloc)} entries for a frontier of {len(frontier)}")
    active = [(d, int(k)) for d, k in zip(frontier, alloc) if k > 0]
    out = np.zeros(int(sum(alloc)) + 1)
    supports = [[(x, px) for x, px in enumerate(d.probs) if px > 0] for d, _ in active]
    for outcome in itertools.product(*supports):
        prob, total = 1.0, 0
        for (x, px), (_, k) in zip(outcome, active):
            prob *= px
            total += min(k, x)
        out[total] += prob
    return out


def _check_size(n, s):
    count = comb(s + n, n, exact=True)
    if count > MAX_ENUMERATION:
        raise EnumerationLimitError(f"{count} allocations exceed the enumeration limit {MAX_ENUMERATION}")


def _bellman_solver(pmf: Pmf, gamma: float):
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"discount must lie in (0, 1), got {gamma}")
    memo: Dict[Tuple[int, int], float] = {}

    def value(r, n):
        if r == 0 or n == 0:
            return 0.0
        key = (r, n)
        if key in memo:
            return memo[key]
        _check_size(n, r)
        best = 0.0
        for s in range(1, r + 1):
            # members are interchangeable, so non-increasing allocations suffice
            for ks in compositions(n, s):
                if any(a < b for a, b in zip(ks, ks[1:])):
                    continue
                dist = outcome_distribution([pmf] * n, ks)
                v = float(sum(q * (m + gamma * value(r - s, m)) for m, q in enumerate(dist) if q > 0))
                best = max(best, v)
        memo[key] = best
        return best

    return value


def exact_bellman_value(pmf: Pmf, r: int, n: int, gamma: float) -> float:
    """Optimal discounted recruits when every member, present and future, has ``pmf``.

    Maximizes over every round budget and every allocation of it, so it
    makes no use of even allocations or truncated PGFs.
    """
    return _bellman_solver(pmf, gamma)(r, n)


def exact_bellman_table(pmf: Pmf, budget: int, gamma: float) -> np.ndarray:
    """``exact_bellman_value`` for every 0 <= n <= r <= budget, indexed [r, n].

    Entries with n > r are left at zero. One memo is shared across the table.
    """
    value = _bellman_solver(pmf, gamma)
    out = np.zeros((budget + 1, budget + 1))
    for r in range(budget + 1):
        for n in range(r + 1):
            out[r, n] = value(r, n)
    return out


class HeterogeneousOracle:
    """Optimal value over frontiers of mixture-component labels.

    New members draw their component i.i.d. from the mixture weights; the
    value of a frontier depends only on its multiset of labels.
    """

    def __init__(self, population: PopulationModel, gamma: float):
        if not 0.0 < gamma < 1.0:
            raise ValueError(f"discount must lie in (0, 1), got {gamma}")
        self.population = population
        self.gamma = gamma
        self._memo: Dict[Tuple[int, Tuple[int, ...]], float] = {}
        self._next: Dict[Tuple[int, int], float] = {}

    def continuation(self, r: int, m: int) -> float:
        """E[V(r, next frontier)] for m fresh members."""
        key = (r, m)
        if key not in self._next:
            weights = self.population.weights
            total = 0.0
            for labels in itertools.combinations_with_replacement(range(len(weights)), m):
                counts = np.bincount(labels, minlength=len(weights)) if m else np.zeros(len(weights), int)
                coef = math.factorial(m) / math.prod(math.factorial(int(c)) for c in counts)
                prob = coef * float(np.prod(weights ** counts))
                total += prob * self.value(r, labels)
            self._next[key] = total
        return self._next[key]

    def action_value(self, r: int, labels: Sequence[int], s: int, alloc: Sequence[int]) -> float:
        frontier = [self.population.components[c][1] for c in labels]
        dist = outcome_distribution(frontier, alloc)
        return float(sum(q * (m + self.gamma * self.continuation(r - s, m))
                         for m, q in enumerate(dist) if q > 0))

    def value(self, r: int, labels: Sequence[int]) -> float:
        labels = tuple(sorted(labels))
        if r == 0 or not labels:
            return 0.0
        key = (r, labels)
        if key in self._memo:
            return self._memo[key]
        _check_size(len(labels), r)
        best = 0.0
        for s in range(1, r + 1):
            for ks in compositions(len(labels), s):
                best = max(best, self.action_value(r, labels, s, ks))
        self._memo[key] = best
        return best


def exact_heterogeneous_value(population: PopulationModel, r: int, frontier: Sequence[int], gamma: float,
                              first_round_budget: Optional[int] = None,
                              first_allocation: Optional[Sequence[int]] = None) -> float:
    """Optimal value of a labelled frontier, optionally with a forced first round.

    With ``first_round_budget`` (and optionally ``first_allocation``) the
    first round is played as given and every later round optimally.
    """
    oracle = HeterogeneousOracle(population, gamma)
    if first_round_budget is None:
        return oracle.value(r, frontier)
    if not 0 <= first_round_budget <= r:
        raise ValueError(f"first round budget {first_round_budget} outside 0..{r}")
    if first_allocation is not None:
        return oracle.action_value(r, frontier, first_round_budget, first_allocation)
    return max(oracle.action_value(r, frontier, first_round_budget, ks)
               for ks in compositions(len(frontier), first_round_budget))


def _random_pmf(rng, max_value) -> Pmf:
    return Pmf(rng.dirichlet(np.ones(max_value + 1)))


def _greedy_check(rng, instances):
    worst = 0.0
    for _ in range(instances):
        n, s, k = int(rng.integers(1, 5)), int(rng.integers(0, 7)), int(rng.integers(1, 6))
        frontier = [_random_pmf(rng, k) for _ in range(n)]
        _, best = brute_force_allocate(frontier, s)
        greedy_value = expected_reward(greedy_allocate(frontier, s), frontier)
        # the incremental greedy path must land on the same value
        path_value = float(single_round_values(frontier, s)[s])
        worst = max(worst, abs(best - greedy_value), abs(path_value - greedy_value))
    return worst


def _even_check(rng, instances):
    worst = 0.0
    for _ in range(instances):
        comps = int(rng.integers(1, 4))
        weights = rng.dirichlet(np.ones(comps))
        p = PopulationModel(tuple((w, _random_pmf(rng, int(rng.integers(1, 6)))) for w in weights))
        n, s = int(rng.integers(1, 5)), int(rng.integers(0, 9))
        _, best = brute_force_allocate([p.mean] * n, s)
        worst = max(worst, abs(best - even_value(p, s, n)))
    return worst


def _transition_check(rng, instances):
    worst = 0.0
    for _ in range(instances):
        p = PopulationModel.single(_random_pmf(rng, int(rng.integers(1, 4))))
        n, s = int(rng.integers(1, 5)), int(rng.integers(0, 7))
        params = even_params(s, n)
        alloc = [params.a + 1] * params.c + [params.a] * (n - params.c)
        naive = outcome_distribution([p.mean] * n, alloc)
        worst = max(worst, float(np.abs(next_frontier_dist(p, n, s) - naive).max()))
        frontier = [_random_pmf(rng, int(rng.integers(1, 4))) for _ in range(n)]
        ks = [int(v) for v in rng.integers(0, 3, size=n)]
        worst = max(worst, float(np.abs(greedy_frontier_dist(frontier, ks) - outcome_distribution(frontier, ks)).max()))
    return worst


def exactness_families(rng, draws: int = 2):
    """Single-component pmfs with support in {0, 1, 2}.

    Point masses and two-point pmfs plus ``draws`` Dirichlet draws on all
    three points. A single-component population keeps every realized
    frontier exchangeable, so the table should match exact Bellman here.
    """
    q = float(rng.uniform(0.05, 0.95))
    fixed = [point_mass(1), point_mass(2), Pmf([q, 1.0 - q]), Pmf([0.0, q, 1.0 - q])]
    return fixed + [_random_pmf(rng, 2) for _ in range(draws)]


def _surrogate_check(rng, budget=4):
    worst = 0.0
    cases = 0
    for gamma in (0.3, 0.5, 0.9):
        for pmf in exactness_families(rng):
            table = compute_table(PopulationModel.single(pmf), budget, gamma)
            exact = exact_bellman_table(pmf, budget, gamma)
            for r in range(budget + 1):
                for n in range(r + 1):
                    worst = max(worst, abs(lookup(table, r, n) - exact[r, n]))
                    cases += 1
    return worst, cases


def _tightness_check(rng, instances):
    worst = 0.0
    for _ in range(instances):
        s = int(rng.integers(1, 6))
        x = float(rng.uniform(0.05, 1.0))
        beta = float(rng.uniform(0.0, x))
        truth, estimates = tightness_instance(s, x, beta)
        worst = max(worst, abs(realized_regret(truth, estimates, s) - single_round_bound(truth, estimates, s)))
    return worst


def run_oracle_checks(seed: int = 0, instances: int = 200) -> pd.DataFrame:
    """Compare fast paths against enumeration on small random instances."""
    rng = np.random.default_rng(seed)
    rows = []

    def record(check, count, error, tolerance):
        rows.append({'check': check, 'instances': count, 'max_error': error, 'passed': bool(error <= tolerance)})
        logger.info("%-20s %5d instances, max error %.3g", check, count, error)

    record('greedy_vs_brute', instances, _greedy_check(rng, instances), 1e-12)
    record('even_allocation', instances, _even_check(rng, instances), 1e-12)
    record('pgf_transitions', instances, _transition_check(rng, instances), 1e-12)
    error, cases = _surrogate_check(rng)
    record('surrogate_vs_bellman', cases, error, ORACLE_TOLERANCE)
    record('tightness', instances, _tightness_check(rng, instances), 1e-12)
    return pd.DataFrame(rows, columns=['check', 'instances', 'max_error', 'passed'])
