"""
Robustness quantities for planning with estimated distributions.

single_round_bound caps the single-round loss of allocating greedily under
estimates; tightness_instance builds a two-member frontier that reaches it.
multi_round_bound splits the multi-round value gap into a frontier, a
population and a heterogeneity term.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Sequence, Tuple

import numpy as np

from distributions import Pmf, PopulationModel, tv_distance
from single_round import expected_reward, greedy_allocate

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoundReport:
    frontier_term: float
    population_term: float
    heterogeneity_term: float
    total: float
    c_r_gamma: float

    def to_dict(self):
        return asdict(self)


def _survival_levels(d: Pmf, s: int) -> np.ndarray:
    """p_D(l) for l = 1..s."""
    tail = d.survival_table
    out = np.zeros(s)
    head = tail[1:s + 1]
    out[:head.size] = head
    return out


def single_round_bound(truth: Sequence[Pmf], estimates: Sequence[Pmf], s: int) -> float:
    if len(truth) != len(estimates):
        raise ValueError(f"{len(truth)} true distributions but {len(estimates)} estimates")
    if s < 0:
        raise ValueError(f"round budget must be non-negative, got {s}")
    return float(sum(np.abs(_survival_levels(d, s) - _survival_levels(e, s)).sum()
                     for d, e in zip(truth, estimates)))


def realized_regret(truth: Sequence[Pmf], estimates: Sequence[Pmf], s: int) -> float:
    """Value lost under the truth by allocating greedily on the estimates."""
    best = expected_reward(greedy_allocate(truth, s), truth)
    return best - expected_reward(greedy_allocate(estimates, s), truth)


def _mass_at(s: int, mass: float) -> Pmf:
    probs = np.zeros(s + 1)
    probs[0] = 1.0 - mass
    probs[s] += mass
    return Pmf(probs)


def tightness_instance(s: int, x: float, beta: float) -> Tuple[Tuple[Pmf, Pmf], Tuple[Pmf, Pmf]]:
    """Two-member frontier where greedy on the estimates loses exactly s * beta.

    Member 0 truly survives every level up to s with probability x - beta,
    member 1 with probability x. Both estimates sit at x - beta / 2, so the
    greedy tie rule hands every unit to member 0.
    """
    if s < 1:
        raise ValueError(f"round budget must be at least 1, got {s}")
    if not 0.0 < x <= 1.0:
        raise ValueError(f"x must lie in (0, 1], got {x}")
    if not 0.0 <= beta <= x:
        raise ValueError(f"beta must lie in [0, x], got {beta}")
    shared = x - beta / 2.0
    truth = (_mass_at(s, x - beta), _mass_at(s, x))
    estimates = (_mass_at(s, shared), _mass_at(s, shared))
    return truth, estimates


def discount_factor_term(r: int, gamma: float) -> float:
    """c = 2 * gamma * r / (1 - gamma)."""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"discount must lie in (0, 1), got {gamma}")
    return 2.0 * gamma * r / (1.0 - gamma)


def heterogeneity(p: PopulationModel) -> float:
    """E_{D~P} TV(D, mean distribution), exact over the components."""
    mean = p.mean
    return float(sum(w * tv_distance(d, mean) for w, d in p.components))


def multi_round_bound(truth_frontier: Sequence[Pmf], estimate_frontier: Sequence[Pmf],
                      truth_pop: PopulationModel, estimate_pop: PopulationModel,
                      r: int, gamma: float) -> BoundReport:
    if len(truth_frontier) != len(estimate_frontier):
        raise ValueError(f"{len(truth_frontier)} true distributions but {len(estimate_frontier)} estimates")
    if r < 0:
        raise ValueError(f"remaining budget must be non-negative, got {r}")
    c = discount_factor_term(r, gamma)
    frontier_tv = sum(tv_distance(d, e) for d, e in zip(truth_frontier, estimate_frontier))
    frontier_term = 2.0 * (1.0 + gamma) * r * frontier_tv
    population_term = c * tv_distance(truth_pop.mean, estimate_pop.mean)
    heterogeneity_term = c * r * heterogeneity(truth_pop)
    report = BoundReport(frontier_term=frontier_term, population_term=population_term,
                         heterogeneity_term=heterogeneity_term,
                         total=frontier_term + population_term + heterogeneity_term, c_r_gamma=c)
    logger.debug("bound at r=%d gamma=%.3f: %s", r, gamma, report)
    return report
