import numpy as np
import pytest
from scipy.special import comb

from distributions import Pmf, PopulationModel, point_mass, sample_many
from oracles import outcome_distribution
from pgf import (PowerCache, TruncatedPoly, greedy_frontier_dist, next_frontier_dist, poly_mul_trunc,
                 poly_pow_trunc, truncated_pgf, unit_poly)
from single_round import even_params


def _coin_poly():
    return TruncatedPoly(np.array([0.5, 0.5]), 1)


def test_truncated_pgf_examples():
    assert truncated_pgf(Pmf.from_mapping({0: 0.5, 1: 0.5}), 1).coeffs.tolist() == pytest.approx([0.5, 0.5])
    assert truncated_pgf(Pmf.from_mapping({0: 0.2, 1: 0.3, 2: 0.5}), 1).coeffs.tolist() == pytest.approx([0.2, 0.8])
    assert truncated_pgf(Pmf.from_mapping({0: 0.2, 1: 0.3, 2: 0.5}), 0).coeffs.tolist() == [1.0]


def test_truncated_pgf_pads_short_support():
    poly = truncated_pgf(point_mass(1), 3)
    assert poly.coeffs.tolist() == pytest.approx([0.0, 1.0, 0.0, 0.0])


def test_poly_mul_examples():
    q = TruncatedPoly(np.array([0.2, 0.3, 0.5]), 2)
    assert poly_mul_trunc(unit_poly(0), q, 2).coeffs.tolist() == pytest.approx([0.2, 0.3, 0.5])
    assert poly_mul_trunc(_coin_poly(), _coin_poly(), 2).coeffs.tolist() == pytest.approx([0.25, 0.5, 0.25])
    assert poly_mul_trunc(_coin_poly(), _coin_poly(), 1).coeffs.tolist() == pytest.approx([0.25, 0.75])


def test_poly_pow_examples():
    assert poly_pow_trunc(_coin_poly(), 0, 0).coeffs.tolist() == [1.0]
    assert poly_pow_trunc(_coin_poly(), 2, 2).coeffs.tolist() == pytest.approx([0.25, 0.5, 0.25])
    expected = [comb(4, j) / 16 for j in range(5)]
    assert poly_pow_trunc(_coin_poly(), 4, 4).coeffs.tolist() == pytest.approx(expected)


def test_poly_pow_rejects_negative_exponent():
    with pytest.raises(ValueError):
        poly_pow_trunc(_coin_poly(), -1, 2)


def test_poly_pow_matches_chained_multiplication():
    rng = np.random.default_rng(5)
    for _ in range(60):
        s = int(rng.integers(0, 9))
        base = truncated_pgf(Pmf(rng.dirichlet(np.ones(int(rng.integers(1, 6))))), s)
        chained = base
        for e in range(1, 7):
            if e > 1:
                chained = poly_mul_trunc(chained, base, s)
            assert np.abs(poly_pow_trunc(base, e, s).coeffs - chained.coeffs).max() <= 1e-12


def test_truncated_mass_is_conserved():
    poly = poly_pow_trunc(TruncatedPoly(np.array([0.1, 0.2, 0.3, 0.4]), 3), 7, 5)
    assert poly.mass == pytest.approx(1.0, abs=1e-12)
    assert len(poly) == 6


def test_next_frontier_dist_examples():
    assert next_frontier_dist(PopulationModel.single(point_mass(1)), 4, 0).tolist() == [1.0]
    coin = PopulationModel.single(Pmf.from_mapping({0: 0.5, 1: 0.5}))
    assert next_frontier_dist(coin, 2, 3).tolist() == pytest.approx([0.25, 0.5, 0.25, 0.0])
    for n in range(1, 6):
        dist = next_frontier_dist(PopulationModel.single(point_mass(1)), n, n)
        assert dist.size == n + 1
        assert dist[-1] == pytest.approx(1.0)


def test_next_frontier_dist_rejects_empty_frontier(delta_one_population):
    with pytest.raises(ValueError):
        next_frontier_dist(delta_one_population, 0, 3)


def test_greedy_frontier_dist_examples(fair_coin):
    assert greedy_frontier_dist([fair_coin, point_mass(2)], (0, 0)).tolist() == [1.0]
    assert greedy_frontier_dist([fair_coin, fair_coin], (1, 1)).tolist() == pytest.approx([0.25, 0.5, 0.25])
    assert greedy_frontier_dist([point_mass(2)], (2,)).tolist() == pytest.approx([0.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        greedy_frontier_dist([fair_coin], (1, 1))


def test_transitions_match_enumeration():
    rng = np.random.default_rng(31)
    for _ in range(100):
        comps = int(rng.integers(1, 3))
        weights = rng.dirichlet(np.ones(comps))
        p = PopulationModel(tuple((w, Pmf(rng.dirichlet(np.ones(int(rng.integers(2, 4)))))) for w in weights))
        n, s = int(rng.integers(1, 7)), int(rng.integers(0, 13))
        params = even_params(s, n)
        alloc = [params.a + 1] * params.c + [params.a] * (n - params.c)
        naive = outcome_distribution([p.mean] * n, alloc)
        assert np.abs(next_frontier_dist(p, n, s) - naive).max() <= 1e-12

        frontier = [Pmf(rng.dirichlet(np.ones(int(rng.integers(2, 4))))) for _ in range(n)]
        ks = [int(k) for k in rng.integers(0, 3, size=n)]
        assert np.abs(greedy_frontier_dist(frontier, ks) - outcome_distribution(frontier, ks)).max() <= 1e-12


def test_next_frontier_dist_matches_sampling(demo_population):
    """Sampled frequencies fall in 3-sigma binomial bands on at least 95% of mass points."""
    rng = np.random.default_rng(5)
    draws = 100000
    comps = demo_population.pmfs
    inside, total = 0, 0
    for n, s in [(3, 5), (2, 9), (4, 14), (5, 23)]:
        params = even_params(s, n)
        alloc = np.array([params.a + 1] * params.c + [params.a] * (n - params.c))
        labels = rng.choice(len(comps), size=(draws, n), p=demo_population.weights)
        x = np.zeros((draws, n), dtype=np.int64)
        for c, d in enumerate(comps):
            mask = labels == c
            x[mask] = sample_many(d, int(mask.sum()), rng)
        counts = np.bincount(np.minimum(x, alloc).sum(axis=1), minlength=s + 1)
        freq = counts / draws
        dist = next_frontier_dist(demo_population, n, s)
        band = 3.0 * np.sqrt(dist * (1.0 - dist) / draws) + 1e-12
        inside += int((np.abs(freq - dist) <= band).sum())
        total += s + 1
    assert inside / total >= 0.95


def test_power_cache_reuses_entries(demo_population):
    cache = PowerCache(demo_population)
    first = cache.power(2, 3, 6)
    again = cache.power(2, 3, 6)
    assert first is again
    assert cache.hits == 1 and cache.misses == 1
    assert len(cache) == 1
    fresh = poly_pow_trunc(truncated_pgf(demo_population.mean, 2), 3, 6)
    assert first.coeffs.tolist() == pytest.approx(fresh.coeffs.tolist())
