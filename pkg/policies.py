"""
Allocation policies: constant per-member units, greedy with a fixed or a
remainder-proportional round budget, and the surrogate planner.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

from data.constants import CONST_KS, GREEDY_ALPHAS
from distributions import Pmf
from single_round import Allocation, greedy_allocate
from surrogate_dp import ValueTable, select_round_budget

logger = logging.getLogger(__name__)

CONST = 'const'
GREEDY = 'greedy'
GREEDY_REMAINDER = 'greedyrem'
SURROGATE = 'surrogate'
KINDS = (CONST, GREEDY, GREEDY_REMAINDER, SURROGATE)


@dataclass(frozen=True)
class PolicySpec:
    kind: str
    param: Optional[float] = None
    budget: Optional[int] = None
    table: Optional[ValueTable] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == CONST:
            if self.param is None or int(self.param) != self.param or self.param < 1:
                raise ValueError(f"const policy needs an integer k >= 1, got {self.param}")
            object.__setattr__(self, 'param', int(self.param))
        elif self.kind in (GREEDY, GREEDY_REMAINDER):
            if self.param is None or not 0.0 < self.param <= 1.0:
                raise ValueError(f"{self.kind} policy needs alpha in (0, 1], got {self.param}")
            object.__setattr__(self, 'param', float(self.param))

    @property
    def label(self) -> str:
        if self.kind == SURROGATE:
            return SURROGATE
        return f"{self.kind}:{self.param:g}"

    def configured(self, budget: int = None, table: ValueTable = None) -> "PolicySpec":
        """Copy bound to an episode's total budget and, for the planner, its table."""
        return replace(self,
                       budget=self.budget if budget is None else budget,
                       table=self.table if table is None else table)


@dataclass(frozen=True)
class Action:
    round_budget: int
    allocation: Allocation

    def __post_init__(self):
        if self.allocation.total > self.round_budget:
            raise ValueError(f"allocation spends {self.allocation.total} of a round budget {self.round_budget}")


def parse_policy(text: str) -> PolicySpec:
    """Parse ``const:3``, ``greedy:0.2``, ``greedyrem:0.5`` or ``surrogate``."""
    kind, _, value = text.strip().lower().partition(':')
    if kind == SURROGATE:
        if value:
            raise ValueError(f"surrogate policy takes no parameter: {text!r}")
        return PolicySpec(SURROGATE)
    if not value:
        raise ValueError(f"policy {text!r} needs a parameter")
    try:
        param = int(value) if kind == CONST else float(value)
    except ValueError:
        raise ValueError(f"bad parameter in policy {text!r}") from None
    return PolicySpec(kind, param)


def policy_grid(const_ks=CONST_KS, alphas=GREEDY_ALPHAS, include_surrogate=True) -> List[PolicySpec]:
    grid = [PolicySpec(CONST, k) for k in sorted(const_ks)]
    grid += [PolicySpec(GREEDY, a) for a in sorted(alphas)]
    grid += [PolicySpec(GREEDY_REMAINDER, a) for a in sorted(alphas)]
    if include_surrogate:
        grid.append(PolicySpec(SURROGATE))
    return grid


def _fraction(alpha, amount):
    # guard against alpha * amount landing just below an integer
    return int(math.floor(alpha * amount + 1e-9))


def decide(spec: PolicySpec, remaining: int, frontier_estimates: Sequence[Pmf]) -> Action:
    """Round budget and allocation for the current frontier.

    Only the estimated distributions are consulted; realized referral counts
    are drawn after the decision.
    """
    if remaining < 0:
        raise ValueError(f"remaining budget must be non-negative, got {remaining}")
    n = len(frontier_estimates)
    if n == 0:
        raise ValueError("cannot allocate to an empty frontier")

    if spec.kind == CONST:
        units, left = [], remaining
        for _ in range(n):
            give = min(spec.param, left)
            units.append(give)
            left -= give
        alloc = Allocation(tuple(units))
        return Action(round_budget=alloc.total, allocation=alloc)

    if spec.kind in (GREEDY, GREEDY_REMAINDER):
        if spec.kind == GREEDY:
            if spec.budget is None:
                raise ValueError("greedy policy needs its total budget; call configured(budget=...)")
            s = min(remaining, max(1, _fraction(spec.param, spec.budget)))
        else:
            s = min(remaining, max(1, _fraction(spec.param, remaining)))
        # units greedy declines stay in the remaining pool
        alloc = greedy_allocate(frontier_estimates, s)
        return Action(round_budget=alloc.total, allocation=alloc)

    if spec.table is None:
        raise ValueError("surrogate policy needs a value table; call configured(table=...)")
    s = select_round_budget(spec.table, frontier_estimates, remaining) if remaining > 0 else 0
    return Action(round_budget=s, allocation=greedy_allocate(frontier_estimates, s))
