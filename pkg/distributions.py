"""
Finite referral-count distributions and the population mixture built from them.

A Pmf is a dense probability vector over counts 0..K. A PopulationModel is a
weighted mixture of Pmfs; new frontier members draw their Pmf from it.
"""

import hashlib
import json
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Sequence, Tuple

import numpy as np

from data.constants import MASS_TOLERANCE

logger = logging.getLogger(__name__)


class InvalidDistributionError(ValueError):
    pass


def _as_probability_vector(probs):
    p = np.asarray(probs, dtype=np.float64).copy()
    if p.ndim != 1 or p.size == 0:
        raise InvalidDistributionError("probabilities must be a non-empty 1D sequence")
    if not np.all(np.isfinite(p)):
        raise InvalidDistributionError("probabilities must be finite")
    if np.any(p < 0.0) or np.any(p > 1.0 + MASS_TOLERANCE):
        raise InvalidDistributionError(f"probabilities must lie in [0, 1], got {p.tolist()}")
    total = float(p.sum())
    if abs(total - 1.0) > MASS_TOLERANCE:
        raise InvalidDistributionError(f"probabilities sum to {total!r}, expected 1")
    p /= total
    # dense support 0..K with K the last positive entry
    last = int(np.flatnonzero(p)[-1])
    p = p[:last + 1]
    p.setflags(write=False)
    return p


@dataclass(frozen=True, eq=False)
class Pmf:
    """Distribution over referral counts 0..K, stored densely."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'probs', _as_probability_vector(self.probs))

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, float]) -> "Pmf":
        """Densify a sparse {count: probability} mapping."""
        if not mapping:
            raise InvalidDistributionError("empty mapping")
        if min(mapping) < 0:
            raise InvalidDistributionError("counts must be non-negative")
        dense = np.zeros(max(mapping) + 1)
        for value, prob in mapping.items():
            dense[int(value)] += prob
        return cls(dense)

    @classmethod
    def from_counts(cls, values, tail=None) -> "Pmf":
        """Empirical histogram of non-negative integer observations.

        Observations at or above ``tail`` are folded into the ``tail`` bucket.
        """
        x = np.asarray(values, dtype=np.int64)
        if x.size == 0:
            raise InvalidDistributionError("no observations")
        if np.any(x < 0):
            raise InvalidDistributionError("observations must be non-negative")
        if tail is not None:
            x = np.minimum(x, int(tail))
        counts = np.bincount(x)
        return cls(counts / counts.sum())

    @property
    def max_value(self) -> int:
        return self.probs.size - 1

    @cached_property
    def survival_table(self) -> np.ndarray:
        """p(l) = Pr(X >= l) for l = 0..K+1."""
        tail = np.concatenate([np.cumsum(self.probs[::-1])[::-1], [0.0]])
        tail[0] = 1.0
        tail.setflags(write=False)
        return tail

    @cached_property
    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.probs)
        c[-1] = 1.0
        c.setflags(write=False)
        return c

    @property
    def mean(self) -> float:
        return float(np.dot(np.arange(self.probs.size), self.probs))

    def survival(self, level: int) -> float:
        return survival(self, level)

    def to_dict(self):
        return {'probs': [float(v) for v in self.probs]}

    @classmethod
    def from_dict(cls, payload) -> "Pmf":
        return cls(payload['probs'])

    def __repr__(self):
        support = {j: round(float(v), 6) for j, v in enumerate(self.probs) if v > 0}
        return f"Pmf({support})"


def point_mass(value: int) -> Pmf:
    probs = np.zeros(int(value) + 1)
    probs[-1] = 1.0
    return Pmf(probs)


@dataclass(frozen=True, eq=False)
class PopulationModel:
    """Weighted finite mixture of referral distributions."""

    components: Tuple[Tuple[float, Pmf], ...]

    def __post_init__(self):
        comps = tuple((float(w), d if isinstance(d, Pmf) else Pmf(d)) for w, d in self.components)
        if not comps:
            raise InvalidDistributionError("a population needs at least one component")
        weights = np.array([w for w, _ in comps])
        if np.any(weights <= 0.0) or not np.all(np.isfinite(weights)):
            raise InvalidDistributionError(f"component weights must be positive, got {weights.tolist()}")
        total = float(weights.sum())
        if abs(total - 1.0) > MASS_TOLERANCE:
            raise InvalidDistributionError(f"component weights sum to {total!r}, expected 1")
        object.__setattr__(self, 'components', tuple((w / total, d) for w, d in comps))

    @classmethod
    def single(cls, pmf: Pmf) -> "PopulationModel":
        return cls(((1.0, pmf),))

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.components])

    @property
    def pmfs(self) -> Sequence[Pmf]:
        return [d for _, d in self.components]

    @cached_property
    def mean(self) -> Pmf:
        width = max(d.probs.size for d in self.pmfs)
        acc = np.zeros(width)
        for w, d in self.components:
            acc[:d.probs.size] += w * d.probs
        return Pmf(acc)

    @cached_property
    def prefix_table(self) -> np.ndarray:
        """g(k) for k = 0..K+1 with g(0) = 0."""
        tail = self.mean.survival_table
        g = np.concatenate([[0.0], np.cumsum(tail[1:])])
        g.setflags(write=False)
        return g

    def to_dict(self):
        return {'components': [{'weight': w, 'probs': d.to_dict()['probs']} for w, d in self.components]}

    @classmethod
    def from_dict(cls, payload) -> "PopulationModel":
        if 'components' not in payload:
            # a bare pmf file is a one-component population
            return cls.single(Pmf.from_dict(payload))
        return cls(tuple((c['weight'], Pmf(c['probs'])) for c in payload['components']))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, path) -> "PopulationModel":
        with open(path, 'r') as f:
            return cls.from_dict(json.load(f))

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def survival(d: Pmf, level: int) -> float:
    """Pr(X >= level)."""
    if level < 0:
        raise ValueError(f"level must be non-negative, got {level}")
    table = d.survival_table
    if level >= table.size:
        return 0.0
    return float(table[level])


def tv_distance(d1: Pmf, d2: Pmf) -> float:
    """Total variation distance, shorter support padded with zeros."""
    width = max(d1.probs.size, d2.probs.size)
    a = np.zeros(width)
    b = np.zeros(width)
    a[:d1.probs.size] = d1.probs
    b[:d2.probs.size] = d2.probs
    return float(min(1.0, 0.5 * np.abs(a - b).sum()))


def mean_distribution(p: PopulationModel) -> Pmf:
    return p.mean


def population_survival(p: PopulationModel, level: int) -> float:
    # evaluated on the mean distribution so both readings agree bit for bit
    return survival(p.mean, level)


def population_prefix(p: PopulationModel, k: int) -> float:
    """g(k) = sum_{l=1}^{k} p_bar(l)."""
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    g = p.prefix_table
    return float(g[min(k, g.size - 1)])


def stream_seed(base_seed: int, index: int) -> int:
    """64-bit seed of sub-stream ``index`` of ``base_seed``.

    The pair is mixed by numpy's SeedSequence (base seed as entropy, the
    index as spawn key), so streams do not depend on the order in which
    they are created.
    """
    seq = np.random.SeedSequence(int(base_seed), spawn_key=(int(index),))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def stream_rng(base_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(stream_seed(base_seed, index))


def sample(d: Pmf, rng: np.random.Generator) -> int:
    """One draw by inverting the CDF."""
    return int(np.searchsorted(d.cdf, rng.random(), side='right'))


def sample_many(d: Pmf, size: int, rng: np.random.Generator) -> np.ndarray:
    return np.searchsorted(d.cdf, rng.random(size), side='right').astype(np.int64)


def sample_member(p: PopulationModel, rng: np.random.Generator) -> Pmf:
    """Draw one member's distribution D ~ P."""
    idx = int(np.searchsorted(np.cumsum(p.weights)[:-1], rng.random(), side='right'))
    return p.components[idx][1]


def monte_carlo_mean_distribution(p: PopulationModel, samples: int, rng: np.random.Generator,
                                  tail=None) -> Pmf:
    """Estimate the mean distribution by sampling D ~ P and then X ~ D."""
    if samples < 1:
        raise ValueError("samples must be positive")
    labels = rng.choice(len(p.components), size=samples, p=p.weights)
    draws = np.empty(samples, dtype=np.int64)
    for c, (_, d) in enumerate(p.components):
        idx = np.flatnonzero(labels == c)
        if idx.size:
            draws[idx] = sample_many(d, idx.size, rng)
    logger.debug("estimated mean distribution from %d draws", samples)
    return Pmf.from_counts(draws, tail=tail)
