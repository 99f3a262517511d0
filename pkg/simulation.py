"""
Recruitment episodes in two environments.

DistributionEnvironment samples referral counts from each member's
distribution and draws new members from the truth population.
NetworkEnvironment recruits actual unrecruited neighbors in a contact graph.
Both feed the policies estimated distributions only.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Hashable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from joblib import Parallel, delayed

from data.constants import ROUND_CAP_FACTOR
from distributions import Pmf, PopulationModel, sample, sample_member, stream_seed
from policies import Action, PolicySpec, decide

logger = logging.getLogger(__name__)


class InfeasibleActionError(ValueError):
    pass


class NoiseChannel:
    """Maps a true distribution to the estimate a policy sees.

    ``identity`` passes it through; ``survival:<sigma>`` adds Gaussian noise
    to the survival probabilities, clips them to [0, 1] and restores a
    non-increasing tail before converting back to a pmf.
    """

    def __init__(self, sigma: float = 0.0):
        if sigma < 0:
            raise ValueError(f"noise scale must be non-negative, got {sigma}")
        self.sigma = float(sigma)

    @classmethod
    def parse(cls, text: Optional[str]) -> "NoiseChannel":
        if text is None or text.strip().lower() in ('', 'identity', 'none'):
            return cls(0.0)
        kind, _, value = text.strip().lower().partition(':')
        if kind != 'survival' or not value:
            raise ValueError(f"unknown noise channel {text!r}; use 'identity' or 'survival:<sigma>'")
        return cls(float(value))

    @property
    def label(self) -> str:
        return 'identity' if self.sigma == 0.0 else f"survival:{self.sigma:g}"

    def __call__(self, d: Pmf, rng: np.random.Generator) -> Pmf:
        if self.sigma == 0.0:
            return d
        tail = d.survival_table[1:-1] + self.sigma * rng.standard_normal(d.max_value)
        tail = np.minimum.accumulate(np.clip(tail, 0.0, 1.0))
        full = np.concatenate([[1.0], tail, [0.0]])
        return Pmf(full[:-1] - full[1:])


@dataclass(frozen=True)
class DistEnvState:
    remaining: int
    frontier: Tuple[Pmf, ...]
    frontier_estimates: Tuple[Pmf, ...]
    population_truth: PopulationModel

    def __post_init__(self):
        if len(self.frontier) != len(self.frontier_estimates):
            raise ValueError("frontier and its estimates differ in length")


@dataclass(frozen=True)
class NetEnvState:
    graph: nx.Graph
    recruited: FrozenSet[Hashable]
    frontier_nodes: Tuple[Hashable, ...]
    remaining: int
    node_estimates: Dict[Hashable, Pmf]
    frontier_estimates: Tuple[Pmf, ...] = ()


@dataclass
class EpisodeResult:
    per_round_recruits: List[int] = field(default_factory=list)
    per_round_spend: List[int] = field(default_factory=list)
    discounted_reward: float = 0.0
    termination: str = ''
    seed: Optional[int] = None

    @property
    def rounds(self) -> int:
        return len(self.per_round_recruits)

    @property
    def spend(self) -> int:
        return sum(self.per_round_spend)

    @property
    def recruits(self) -> int:
        return sum(self.per_round_recruits)


def discounted_sum(recruits: Sequence[int], gamma: float) -> float:
    total, weight = 0.0, 1.0
    for n in recruits:
        total += weight * n
        weight *= gamma
    return total


def reward_curve(result: EpisodeResult, gamma: float) -> np.ndarray:
    """Cumulative discounted reward after each round."""
    weights = gamma ** np.arange(result.rounds)
    return np.cumsum(weights * np.asarray(result.per_round_recruits, dtype=np.float64))


def _check_action(action: Action, remaining: int, n: int):
    if len(action.allocation) != n:
        raise InfeasibleActionError(f"allocation for {len(action.allocation)} members, frontier has {n}")
    if action.round_budget > remaining:
        raise InfeasibleActionError(f"round budget {action.round_budget} exceeds remaining {remaining}")
    if action.allocation.total > action.round_budget:
        raise InfeasibleActionError("allocation exceeds its round budget")


def dist_step(state: DistEnvState, action: Action, rng: np.random.Generator,
              noise: NoiseChannel = None) -> Tuple[int, DistEnvState]:
    """Play one round in the sampled environment.

    Newcomers draw their true distribution from the population; their
    estimates pass through ``noise``.
    """
    _check_action(action, state.remaining, len(state.frontier))
    noise = noise or NoiseChannel()
    recruits = 0
    for d, k in zip(state.frontier, action.allocation):
        if k > 0:
            recruits += min(k, sample(d, rng))
    newcomers = tuple(sample_member(state.population_truth, rng) for _ in range(recruits))
    estimates = tuple(noise(d, rng) for d in newcomers)
    return recruits, replace(state, remaining=state.remaining - action.round_budget,
                             frontier=newcomers, frontier_estimates=estimates)


def net_step(state: NetEnvState, action: Action, rng: np.random.Generator,
             noise: NoiseChannel = None, default_estimate: Pmf = None) -> Tuple[int, NetEnvState]:
    """Each frontier node recruits up to k_i unrecruited neighbors.

    Nodes are resolved in frontier order, so a neighbor taken by an earlier
    node is no longer available to later ones.
    """
    _check_action(action, state.remaining, len(state.frontier_nodes))
    noise = noise or NoiseChannel()
    recruited = set(state.recruited)
    newcomers = []
    for node, k in zip(state.frontier_nodes, action.allocation):
        if k <= 0:
            continue
        candidates = sorted((v for v in state.graph.neighbors(node) if v not in recruited), key=str)
        take = min(k, len(candidates))
        if take == 0:
            continue
        for j in rng.choice(len(candidates), size=take, replace=False):
            recruited.add(candidates[j])
            newcomers.append(candidates[j])
    estimates = tuple(noise(state.node_estimates.get(v, default_estimate), rng) for v in newcomers)
    return len(newcomers), replace(state, recruited=frozenset(recruited), frontier_nodes=tuple(newcomers),
                                   remaining=state.remaining - action.round_budget,
                                   frontier_estimates=estimates)


class DistributionEnvironment:
    name = 'dist'

    def __init__(self, population_truth: PopulationModel, noise: NoiseChannel = None):
        self.population_truth = population_truth
        self.noise = noise or NoiseChannel()

    def reset(self, n0: int, budget: int, rng: np.random.Generator) -> DistEnvState:
        frontier = tuple(sample_member(self.population_truth, rng) for _ in range(n0))
        estimates = tuple(self.noise(d, rng) for d in frontier)
        return DistEnvState(remaining=budget, frontier=frontier, frontier_estimates=estimates,
                            population_truth=self.population_truth)

    def step(self, state, action, rng):
        return dist_step(state, action, rng, self.noise)


class NetworkEnvironment:
    name = 'network'

    def __init__(self, graph: nx.Graph, node_estimates: Dict[Hashable, Pmf],
                 default_estimate: Pmf, noise: NoiseChannel = None):
        if graph.number_of_nodes() == 0:
            raise ValueError("network environment needs a non-empty graph")
        self.graph = graph
        self.node_estimates = node_estimates
        self.default_estimate = default_estimate
        self.noise = noise or NoiseChannel()
        self._nodes = sorted(graph.nodes, key=str)

    def reset(self, n0: int, budget: int, rng: np.random.Generator) -> NetEnvState:
        picks = rng.choice(len(self._nodes), size=min(n0, len(self._nodes)), replace=False)
        seeds = tuple(self._nodes[i] for i in picks)
        estimates = tuple(self.noise(self.node_estimates.get(v, self.default_estimate), rng) for v in seeds)
        return NetEnvState(graph=self.graph, recruited=frozenset(seeds), frontier_nodes=seeds,
                           remaining=budget, node_estimates=self.node_estimates,
                           frontier_estimates=estimates)

    def step(self, state, action, rng):
        return net_step(state, action, rng, self.noise, self.default_estimate)


def run_episode(env, policy: PolicySpec, gamma: float, budget: int, n0: int,
                rng: np.random.Generator, round_cap: int = None) -> EpisodeResult:
    """Alternate decide and step until budget, frontier or round cap runs out."""
    if round_cap is None:
        round_cap = max(1, ROUND_CAP_FACTOR * budget)
    if round_cap < 1:
        raise ValueError(f"round cap must be at least 1, got {round_cap}")
    policy = policy.configured(budget=budget)
    state = env.reset(n0, budget, rng)
    result = EpisodeResult()
    while True:
        if state.remaining == 0:
            result.termination = 'budget_exhausted'
            break
        if not state.frontier_estimates:
            result.termination = 'frontier_empty'
            break
        if result.rounds >= round_cap:
            result.termination = 'round_cap'
            break
        action = decide(policy, state.remaining, state.frontier_estimates)
        recruits, state = env.step(state, action, rng)
        result.per_round_recruits.append(recruits)
        result.per_round_spend.append(action.round_budget)
    result.discounted_reward = discounted_sum(result.per_round_recruits, gamma)
    logger.debug("episode %s: %d rounds, reward %.4f, %s", policy.label, result.rounds,
                 result.discounted_reward, result.termination)
    return result


@dataclass(frozen=True)
class BatchConfig:
    env: object
    policy: PolicySpec
    gamma: float
    budget: int
    n0: int
    round_cap: Optional[int] = None


def _run_seeded(config: BatchConfig, seed: int) -> EpisodeResult:
    result = run_episode(config.env, config.policy, config.gamma, config.budget, config.n0,
                         np.random.default_rng(seed), config.round_cap)
    result.seed = seed
    return result


def run_batch(config: BatchConfig, base_seed: int, count: int, workers: int = 1,
              backend: str = None) -> List[EpisodeResult]:
    """Independent episodes on sub-streams 0..count-1 of ``base_seed``.

    Results come back in stream order whatever the worker count.
    """
    seeds = [stream_seed(base_seed, i) for i in range(count)]
    return Parallel(n_jobs=workers, backend=backend)(delayed(_run_seeded)(config, seed) for seed in seeds)
