"""
Command-line harness: build populations, precompute surrogate tables,
run policy experiments and evaluate robustness bounds.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields, replace
from typing import List, Optional

import pandas as pd

from data.constants import (CONST_KS, DEFAULT_SEED, GAMMAS, GREEDY_ALPHAS, INITIAL_FRONTIER_SIZES,
                            MAX_DEPTH, MIN_LEAF, RUNS)
from diagnostics import multi_round_bound, realized_regret, single_round_bound, tightness_instance
from distributions import Pmf, PopulationModel, monte_carlo_mean_distribution, stream_rng, tv_distance
from experiment_statistics import ExperimentStatistics, episode_rows, reward_curve_rows, write_results
from oracles import run_oracle_checks
from policies import SURROGATE, parse_policy, policy_grid
from population_builder import (build_population, fit_partition, leaf_summary, load_edges, load_network,
                                load_node_estimates, synthetic_network, write_population,
                                write_synthetic_network)
from simulation import BatchConfig, DistributionEnvironment, NetworkEnvironment, NoiseChannel, run_batch
from surrogate_dp import compute_table, load_table, save_table

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s |%(levelname)s: %(message)s'


@dataclass
class ExperimentConfig:
    env: str = 'dist'
    budget: int = 40
    gammas: List[float] = field(default_factory=lambda: list(GAMMAS))
    initial_frontier_sizes: List[int] = field(default_factory=lambda: list(INITIAL_FRONTIER_SIZES))
    policies: List[str] = field(default_factory=lambda: [p.label for p in policy_grid(CONST_KS, GREEDY_ALPHAS)])
    runs: int = RUNS
    base_seed: int = DEFAULT_SEED
    population: Optional[str] = None
    planning_population: Optional[str] = None
    table: Optional[str] = None
    edges: Optional[str] = None
    node_estimates: Optional[str] = None
    out: str = 'results.csv'
    noise: Optional[str] = None
    round_cap: Optional[int] = None
    workers: int = 1

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path, 'r') as f:
            payload = json.load(f)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(payload) - known)
        if unknown:
            raise ValueError(f"unknown keys in experiment manifest {path}: {unknown}")
        return cls(**payload)

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Copy with every non-None override applied."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def validate(self) -> "ExperimentConfig":
        if self.env not in ('dist', 'network'):
            raise ValueError(f"env must be 'dist' or 'network', got {self.env!r}")
        if self.budget < 1:
            raise ValueError(f"budget must be at least 1, got {self.budget}")
        if self.runs < 1:
            raise ValueError(f"runs must be at least 1, got {self.runs}")
        if not self.gammas or any(not 0.0 < g < 1.0 for g in self.gammas):
            raise ValueError(f"every discount must lie in (0, 1), got {self.gammas}")
        if not self.initial_frontier_sizes or any(n < 1 for n in self.initial_frontier_sizes):
            raise ValueError(f"initial frontier sizes must be positive, got {self.initial_frontier_sizes}")
        if self.round_cap is not None and self.round_cap < 1:
            raise ValueError(f"round cap must be at least 1, got {self.round_cap}")
        if self.population is None:
            raise ValueError("a population file is required")
        if self.env == 'network' and (self.edges is None or self.node_estimates is None):
            raise ValueError("network experiments need --edges and --node-estimates")
        for text in self.policies:
            parse_policy(text)
        NoiseChannel.parse(self.noise)
        return self


def _table_path(template: str, gamma: float) -> str:
    return template.format(gamma=gamma)


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def _load_surrogate_table(config: ExperimentConfig, gamma: float, planning: PopulationModel):
    if config.table is None:
        raise ValueError("a surrogate policy was requested but no --table was given")
    path = _table_path(config.table, gamma)
    table = load_table(path)
    if abs(table.discount - gamma) > 1e-12:
        raise ValueError(f"table {path} was built for discount {table.discount}, not {gamma}")
    if table.budget_cap < config.budget:
        raise ValueError(f"table {path} covers budgets up to {table.budget_cap}, experiment needs {config.budget}")
    if table.population_digest and table.population_digest != planning.digest():
        logger.warning("table %s was built from a different population than the planning population", path)
    return table


def _environment(config: ExperimentConfig, truth: PopulationModel, planning: PopulationModel):
    noise = NoiseChannel.parse(config.noise)
    if config.env == 'dist':
        return DistributionEnvironment(truth, noise)
    graph = load_edges(config.edges)
    return NetworkEnvironment(graph, load_node_estimates(config.node_estimates), planning.mean, noise)


def cmd_simulate(config: ExperimentConfig) -> ExperimentStatistics:
    config.validate()
    truth = PopulationModel.from_json(config.population)
    planning = PopulationModel.from_json(config.planning_population) if config.planning_population else truth
    env = _environment(config, truth, planning)
    specs = [parse_policy(text) for text in config.policies]

    rows, curves = [], []
    for gamma in config.gammas:
        table = None
        if any(spec.kind == SURROGATE for spec in specs):
            table = _load_surrogate_table(config, gamma, planning)
        for n0 in config.initial_frontier_sizes:
            for spec in specs:
                policy = spec.configured(table=table) if spec.kind == SURROGATE else spec
                batch = BatchConfig(env=env, policy=policy, gamma=gamma, budget=config.budget,
                                    n0=n0, round_cap=config.round_cap)
                results = run_batch(batch, config.base_seed, config.runs, config.workers)
                rows += episode_rows(results, config.env, spec.kind, spec.param, gamma, n0, config.budget)
                curves.append(reward_curve_rows(results, gamma, {
                    'env': config.env, 'policy': spec.kind, 'param': '' if spec.param is None else spec.param,
                    'gamma': gamma, 'n0': n0, 'b': config.budget}))
                logger.info("%s gamma=%.2f n0=%d: %d episodes", spec.label, gamma, n0, len(results))

    stats = ExperimentStatistics.from_rows(rows)
    _ensure_parent(config.out)
    paths = write_results(stats, pd.concat(curves, ignore_index=True), config.out)
    stats.print_summary()
    print(f"\n✓ {len(rows)} episode rows written to {paths[0]}")
    return stats


def cmd_build_population(args) -> PopulationModel:
    graph, records = load_network(args.edges, args.covariates)
    partition = fit_partition(records, max_depth=args.max_depth, min_leaf=args.min_leaf)
    tail = args.tail if args.tail is not None else args.budget
    population, node_estimates = build_population(partition, records, tail=tail)
    out = args.out or 'population.json'
    estimates_out = args.estimates_out or f"{os.path.splitext(out)[0]}.estimates.json"
    _ensure_parent(out)
    _ensure_parent(estimates_out)
    write_population(population, node_estimates, out, estimates_out)
    print("\n🌳 Population leaves")
    print(leaf_summary(partition, records).to_string(index=False))
    print(f"\n✓ {len(population.components)} components written to {out}")
    print(f"✓ node estimates written to {estimates_out}")
    return population


def _planning_population(args) -> PopulationModel:
    """Population the tables are built on, optionally a sampled estimate of it."""
    population = PopulationModel.from_json(args.population)
    if args.mc_samples is None:
        return population
    seed = DEFAULT_SEED if args.seed is None else args.seed
    estimate = monte_carlo_mean_distribution(population, args.mc_samples, stream_rng(seed, 0),
                                             tail=max(args.budget, 1))
    logger.info("planning on a %d-draw estimate of the mean distribution (seed %d, TV %.4f)",
                args.mc_samples, seed, tv_distance(estimate, population.mean))
    return PopulationModel.single(estimate)


def cmd_precompute(args) -> List[str]:
    population = _planning_population(args)
    gammas = args.gamma or list(GAMMAS)
    out = args.out or 'table_{gamma}.json'
    if len(gammas) > 1 and '{gamma}' not in out:
        raise ValueError("several discounts need a '{gamma}' placeholder in --out")
    checksums = []
    for gamma in gammas:
        table = compute_table(population, args.budget, gamma)
        path = _table_path(out, gamma)
        _ensure_parent(path)
        checksum = save_table(table, path)
        logger.info("table checksum %s", checksum)
        print(f"✓ gamma={gamma:g} b={args.budget}: {path} (sha256 {checksum[:16]}…)")
        if args.budget > 0:
            plan = ', '.join(f"n0={n0}: s={table.best_round_budget(args.budget, n0)}"
                             for n0 in INITIAL_FRONTIER_SIZES)
            print(f"  first-round budget {plan}")
        checksums.append(checksum)
    return checksums


def _frontier_pair(path):
    if path is None:
        return [], []
    with open(path, 'r') as f:
        payload = json.load(f)
    truth = [Pmf(p) for p in payload.get('truth', [])]
    estimates = [Pmf(p) for p in payload.get('estimates', [])]
    return truth, estimates


def cmd_bounds(args) -> dict:
    if args.tightness:
        s = args.round_budget
        truth, estimates = tightness_instance(s, args.x, args.beta)
        result = {'round_budget': s, 'x': args.x, 'beta': args.beta,
                  'regret': realized_regret(truth, estimates, s),
                  'bound': single_round_bound(truth, estimates, s)}
        print(f"regret={result['regret']:.12g} bound={result['bound']:.12g}")
        return result

    gamma = (args.gamma or [GAMMAS[0]])[0]
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"discount must lie in (0, 1), got {gamma}")
    if args.population is None:
        raise ValueError("bounds need --population")
    truth_pop = PopulationModel.from_json(args.population)
    estimate_pop = PopulationModel.from_json(args.estimate_population) if args.estimate_population else truth_pop
    truth, estimates = _frontier_pair(args.frontier)
    report = multi_round_bound(truth, estimates, truth_pop, estimate_pop, args.budget, gamma)
    result = report.to_dict()
    print(json.dumps(result, indent=2, sort_keys=True))
    if args.out:
        _ensure_parent(args.out)
        pd.DataFrame([dict(result, r=args.budget, gamma=gamma)]).to_csv(args.out, index=False, float_format='%.12g')
    return result


def cmd_oracle_check(args) -> pd.DataFrame:
    table = run_oracle_checks(seed=args.seed if args.seed is not None else 0)
    print(table.to_string(index=False))
    return table


def cmd_synthesize_network(args):
    graph, covariates = synthetic_network(args.nodes, args.seed if args.seed is not None else 0)
    paths = write_synthetic_network(graph, covariates, args.out_dir)
    print(f"✓ {graph.number_of_nodes()} nodes, {graph.number_of_edges()} edges → {paths[0]}, {paths[1]}")
    return paths


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='main.py', description=__doc__)
    parser.add_argument('--verbose', action='store_true', help='debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('build-population', help='fit a degree tree and write the population model')
    p.add_argument('--edges', required=True)
    p.add_argument('--covariates')
    p.add_argument('--out')
    p.add_argument('--estimates-out')
    p.add_argument('--max-depth', type=int, default=MAX_DEPTH)
    p.add_argument('--min-leaf', type=int, default=MIN_LEAF)
    p.add_argument('--tail', type=int, help='degree tail bucket (defaults to --budget)')
    p.add_argument('--budget', type=int)

    p = sub.add_parser('precompute', help='compute surrogate value tables')
    p.add_argument('--population', required=True)
    p.add_argument('--budget', type=int, required=True)
    p.add_argument('--gamma', type=float, nargs='+')
    p.add_argument('--out')
    p.add_argument('--mc-samples', type=int, help='plan on a sampled estimate of the mean distribution')
    p.add_argument('--seed', type=int, help='seed for --mc-samples')

    p = sub.add_parser('simulate', help='run the policy grid')
    p.add_argument('--config', help='JSON experiment manifest')
    p.add_argument('--env', choices=['dist', 'network'])
    p.add_argument('--population')
    p.add_argument('--planning-population')
    p.add_argument('--table', help="table path, may contain '{gamma}'")
    p.add_argument('--edges')
    p.add_argument('--node-estimates')
    p.add_argument('--budget', type=int)
    p.add_argument('--gamma', type=float, nargs='+')
    p.add_argument('--n0', type=int, nargs='+')
    p.add_argument('--policies', nargs='+')
    p.add_argument('--runs', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--noise', help="'identity' or 'survival:<sigma>'")
    p.add_argument('--round-cap', type=int)
    p.add_argument('--workers', type=int)
    p.add_argument('--out')

    p = sub.add_parser('bounds', help='robustness bound report')
    p.add_argument('--population')
    p.add_argument('--estimate-population')
    p.add_argument('--frontier', help='JSON with "truth" and "estimates" probability lists')
    p.add_argument('--budget', type=int, default=10)
    p.add_argument('--gamma', type=float, nargs='+')
    p.add_argument('--out')
    p.add_argument('--tightness', action='store_true', help='run the two-member tightness demo')
    p.add_argument('--round-budget', type=int, default=2)
    p.add_argument('--x', type=float, default=0.9)
    p.add_argument('--beta', type=float, default=0.4)

    p = sub.add_parser('oracle-check', help='compare fast paths against enumeration')
    p.add_argument('--seed', type=int)

    p = sub.add_parser('synthesize-network', help='write a synthetic edges/covariates pair')
    p.add_argument('--nodes', type=int, default=300)
    p.add_argument('--seed', type=int)
    p.add_argument('--out-dir', default='synthetic')
    return parser


def _simulate_config(args) -> ExperimentConfig:
    config = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    return config.with_overrides(
        env=args.env, population=args.population, planning_population=args.planning_population,
        table=args.table, edges=args.edges, node_estimates=args.node_estimates, budget=args.budget,
        gammas=args.gamma, initial_frontier_sizes=args.n0, policies=args.policies, runs=args.runs,
        base_seed=args.seed, noise=args.noise, round_cap=args.round_cap, workers=args.workers, out=args.out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    try:
        if args.command == 'build-population':
            cmd_build_population(args)
        elif args.command == 'precompute':
            cmd_precompute(args)
        elif args.command == 'simulate':
            cmd_simulate(_simulate_config(args))
        elif args.command == 'bounds':
            cmd_bounds(args)
        elif args.command == 'oracle-check':
            table = cmd_oracle_check(args)
            if not table['passed'].all():
                logger.error("oracle checks failed")
                return 1
        elif args.command == 'synthesize-network':
            cmd_synthesize_network(args)
    except ValueError as exc:
        logger.error("%s", exc)
        return 2
    except OSError as exc:
        logger.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
