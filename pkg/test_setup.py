#!/usr/bin/env python3
"""
Smoke test to verify the referral planner setup
"""

import json
import os

from data.constants import DEFAULT_SEED, EPISODE_COLUMNS, GAMMAS, TERMINATIONS
from distributions import PopulationModel
from main import ExperimentConfig, build_parser

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'data')


def test_constants():
    assert all(0.0 < g < 1.0 for g in GAMMAS)
    assert 'termination' in EPISODE_COLUMNS
    assert set(TERMINATIONS) == {'budget_exhausted', 'frontier_empty', 'round_cap'}
    print(f"✓ Constants loaded: gammas={GAMMAS}, seed={DEFAULT_SEED}")


def test_demo_population_loads():
    population = PopulationModel.from_json(os.path.join(DATA_DIR, 'demo_population.json'))
    assert len(population.components) == 2
    assert population.weights.sum() == 1.0
    print(f"✓ Loaded demo population with {len(population.components)} components")


def test_demo_manifest_is_valid():
    with open(os.path.join(DATA_DIR, 'demo_experiment.json'), 'r') as f:
        payload = json.load(f)
    config = ExperimentConfig(**dict(payload, population=os.path.join(DATA_DIR, 'demo_population.json')))
    config.validate()
    assert build_parser().parse_args(['simulate', '--config', 'x.json']).command == 'simulate'
    print("\n🎉 All setup checks passed! You're ready to run the planner.")
