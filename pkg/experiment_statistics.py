import logging
from typing import Iterable, List

import numpy as np
import pandas as pd
from scipy import stats

from data.constants import EPISODE_COLUMNS
from simulation import EpisodeResult, reward_curve

logger = logging.getLogger(__name__)

CONFIG_COLUMNS = ['env', 'policy', 'param', 'gamma', 'n0', 'b']


def episode_rows(results: Iterable[EpisodeResult], env: str, policy: str, param, gamma: float,
                 n0: int, budget: int) -> List[dict]:
    """One result row per episode, in the order the episodes were run."""
    return [{
        'env': env,
        'policy': policy,
        'param': '' if param is None else param,
        'gamma': gamma,
        'n0': n0,
        'b': budget,
        'seed': res.seed,
        'rounds': res.rounds,
        'spend': res.spend,
        'recruits': res.recruits,
        'discounted_reward': res.discounted_reward,
        'termination': res.termination,
    } for res in results]


class ExperimentStatistics:
    """Summaries over a table of episode rows."""

    def __init__(self, episodes: pd.DataFrame):
        missing = [c for c in EPISODE_COLUMNS if c not in episodes.columns]
        if missing:
            raise ValueError(f"episode table is missing columns {missing}")
        self.episodes = episodes[EPISODE_COLUMNS]

    @classmethod
    def from_rows(cls, rows: List[dict]) -> "ExperimentStatistics":
        return cls(pd.DataFrame(rows, columns=EPISODE_COLUMNS))

    def summary_table(self) -> pd.DataFrame:
        """Mean discounted reward with its standard error per configuration.

        The standard error is the sample standard deviation (ddof=1) over
        sqrt(count); it is NaN for a single episode.
        """
        grouped = self.episodes.groupby(CONFIG_COLUMNS, sort=False)['discounted_reward']
        summary = grouped.agg(
            runs='count',
            mean_reward='mean',
            se_reward=lambda x: stats.sem(x, ddof=1) if len(x) > 1 else np.nan,
        ).reset_index()
        spend = self.episodes.groupby(CONFIG_COLUMNS, sort=False)[['spend', 'recruits', 'rounds']].mean()
        summary = summary.merge(spend.add_prefix('mean_').reset_index(), on=CONFIG_COLUMNS)
        return summary

    def termination_counts(self) -> pd.DataFrame:
        counts = self.episodes.groupby(CONFIG_COLUMNS + ['termination'], sort=False).size()
        return counts.unstack('termination', fill_value=0).reset_index()

    def best_baseline(self, gamma: float, n0: int) -> pd.Series:
        """Highest-mean non-surrogate configuration at (gamma, n0)."""
        summary = self.summary_table()
        pick = summary[(summary['gamma'] == gamma) & (summary['n0'] == n0) & (summary['policy'] != 'surrogate')]
        if pick.empty:
            raise ValueError(f"no baseline episodes at gamma={gamma}, n0={n0}")
        return pick.loc[pick['mean_reward'].idxmax()]

    def print_summary(self):
        print("\n📊 Policy comparison (mean discounted reward ± SE)")
        print("=" * 60)
        for _, row in self.summary_table().iterrows():
            label = row['policy'] if row['param'] == '' else f"{row['policy']}:{row['param']}"
            print(f"  {row['env']:8s} γ={row['gamma']:.2f} n0={row['n0']:<3d} {label:16s} "
                  f"{row['mean_reward']:9.4f} ± {row['se_reward']:.4f}  (runs={row['runs']})")

        surrogate = self.episodes[self.episodes['policy'] == 'surrogate']
        if not surrogate.empty and (self.episodes['policy'] != 'surrogate').any():
            print("\n🎯 Surrogate against the best baseline")
            for (gamma, n0), group in surrogate.groupby(['gamma', 'n0'], sort=False):
                best = self.best_baseline(gamma, n0)
                print(f"  γ={gamma:.2f} n0={n0:<3d} surrogate {group['discounted_reward'].mean():9.4f}"
                      f"  vs {best['policy']}:{best['param']} {best['mean_reward']:9.4f}")

        print("\n🏁 Termination reasons")
        print(self.termination_counts().to_string(index=False))


def reward_curve_rows(results: Iterable[EpisodeResult], gamma: float, config: dict) -> pd.DataFrame:
    """Mean cumulative discounted reward per round over a batch.

    Episodes that ended early hold their final value for the later rounds.
    """
    curves = [reward_curve(res, gamma) for res in results]
    if not curves:
        return pd.DataFrame(columns=CONFIG_COLUMNS + ['round', 'mean_cumulative_reward'])
    width = max(1, max(c.size for c in curves))
    padded = np.zeros((len(curves), width))
    for i, c in enumerate(curves):
        if c.size:
            padded[i, :c.size] = c
            padded[i, c.size:] = c[-1]
    frame = pd.DataFrame({'round': np.arange(1, width + 1), 'mean_cumulative_reward': padded.mean(axis=0)})
    for column in reversed(CONFIG_COLUMNS):
        frame.insert(0, column, config[column])
    return frame


def write_results(stats_: ExperimentStatistics, curves: pd.DataFrame, out_path) -> List[str]:
    """Episodes CSV at ``out_path`` plus ``.summary.csv`` and ``.curves.csv`` beside it."""
    out_path = str(out_path)
    stem = out_path[:-4] if out_path.endswith('.csv') else out_path
    paths = [out_path, f"{stem}.summary.csv", f"{stem}.curves.csv"]
    stats_.episodes.to_csv(paths[0], index=False, float_format='%.12g')
    stats_.summary_table().to_csv(paths[1], index=False, float_format='%.12g')
    curves.to_csv(paths[2], index=False, float_format='%.12g')
    logger.info("wrote %d episode rows to %s", len(stats_.episodes), paths[0])
    return paths
