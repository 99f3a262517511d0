import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from distributions import Pmf, PopulationModel, point_mass  # noqa: E402

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'data')


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def delta_one_population():
    return PopulationModel.single(point_mass(1))


@pytest.fixture
def fair_coin():
    return Pmf.from_mapping({0: 0.5, 1: 0.5})


@pytest.fixture
def worked_frontier(fair_coin):
    """({0:.5, 1:.5}, {0:.2, 1:.3, 2:.5})"""
    return [fair_coin, Pmf.from_mapping({0: 0.2, 1: 0.3, 2: 0.5})]


@pytest.fixture
def demo_population_path():
    return os.path.join(DATA_DIR, 'demo_population.json')


@pytest.fixture
def demo_population(demo_population_path):
    return PopulationModel.from_json(demo_population_path)
