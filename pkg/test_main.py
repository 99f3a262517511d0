import json
import os

import pandas as pd
import pytest

from distributions import Pmf, PopulationModel, point_mass
from main import ExperimentConfig, main
from surrogate_dp import load_table, lookup, table_checksum

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'data')


def _write_population(path, population):
    path.write_text(population.to_json())
    return str(path)


@pytest.fixture
def triangle(tmp_path):
    path = tmp_path / 'triangle.csv'
    path.write_text("u,v\n1,2\n2,3\n3,1\n")
    return str(path)


def test_build_population_single_leaf(tmp_path, triangle, capsys):
    out = tmp_path / 'pop.json'
    assert main(['build-population', '--edges', triangle, '--max-depth', '0', '--out', str(out)]) == 0
    population = PopulationModel.from_json(out)
    assert len(population.components) == 1
    assert population.pmfs[0].probs.tolist() == pytest.approx([0.0, 0.0, 1.0])
    first = out.read_bytes()
    estimates = (tmp_path / 'pop.estimates.json').read_bytes()

    assert main(['build-population', '--edges', triangle, '--max-depth', '0', '--out', str(out)]) == 0
    assert out.read_bytes() == first
    assert (tmp_path / 'pop.estimates.json').read_bytes() == estimates
    assert 'components written' in capsys.readouterr().out


def test_build_population_missing_covariates(tmp_path, triangle, caplog):
    missing = str(tmp_path / 'absent.csv')
    assert main(['build-population', '--edges', triangle, '--covariates', missing,
                 '--out', str(tmp_path / 'pop.json')]) == 1
    assert 'absent.csv' in caplog.text


def test_build_population_malformed_edges(tmp_path, caplog):
    edges = tmp_path / 'bad.csv'
    edges.write_text("1,2\n2,\n")
    assert main(['build-population', '--edges', str(edges), '--out', str(tmp_path / 'pop.json')]) == 2
    assert 'bad.csv:2' in caplog.text


def test_precompute_point_mass_table(tmp_path):
    population = _write_population(tmp_path / 'pop.json', PopulationModel.single(point_mass(1)))
    out = tmp_path / 'table.json'
    argv = ['precompute', '--population', population, '--budget', '3', '--gamma', '0.5', '--out', str(out)]
    assert main(argv) == 0
    table = load_table(out)
    assert lookup(table, 3, 1) == pytest.approx(1.75)
    checksum = table_checksum(table)
    assert main(argv) == 0
    assert table_checksum(load_table(out)) == checksum


def test_precompute_zero_budget(tmp_path):
    population = _write_population(tmp_path / 'pop.json', PopulationModel.single(point_mass(1)))
    out = tmp_path / 'table.json'
    assert main(['precompute', '--population', population, '--budget', '0', '--gamma', '0.5',
                 '--out', str(out)]) == 0
    assert load_table(out).values.tolist() == [0.0]


def test_precompute_needs_placeholder_for_several_discounts(tmp_path):
    population = _write_population(tmp_path / 'pop.json', PopulationModel.single(point_mass(1)))
    assert main(['precompute', '--population', population, '--budget', '3', '--gamma', '0.5', '0.7',
                 '--out', str(tmp_path / 'table.json')]) == 2


def test_precompute_reports_first_round_budgets(tmp_path, capsys):
    population = _write_population(tmp_path / 'pop.json', PopulationModel.single(point_mass(1)))
    assert main(['precompute', '--population', population, '--budget', '3', '--gamma', '0.5',
                 '--out', str(tmp_path / 'table.json')]) == 0
    # every frontier size clamps to three members, which take the whole budget at once
    assert 'n0=5: s=3, n0=10: s=3, n0=15: s=3' in capsys.readouterr().out


def test_precompute_on_sampled_mean_distribution(tmp_path, demo_population_path):
    def run(seed, name):
        out = tmp_path / name
        assert main(['precompute', '--population', demo_population_path, '--budget', '8', '--gamma', '0.7',
                     '--mc-samples', '500', '--seed', str(seed), '--out', str(out)]) == 0
        return load_table(out)

    first, again, other = run(4, 'a.json'), run(4, 'b.json'), run(5, 'c.json')
    assert table_checksum(first) == table_checksum(again)
    assert table_checksum(first) != table_checksum(other)
    assert first.population_digest != PopulationModel.from_json(demo_population_path).digest()


def test_precompute_sampled_point_mass_is_exact(tmp_path):
    population = _write_population(tmp_path / 'pop.json', PopulationModel.single(point_mass(1)))
    out = tmp_path / 'table.json'
    assert main(['precompute', '--population', population, '--budget', '3', '--gamma', '0.5',
                 '--mc-samples', '50', '--out', str(out)]) == 0
    assert lookup(load_table(out), 3, 1) == pytest.approx(1.75)
    assert main(['precompute', '--population', population, '--budget', '3', '--gamma', '0.5',
                 '--mc-samples', '0', '--out', str(out)]) == 2


def _simulate(tmp_path, demo_population_path, out, *extra):
    return main(['simulate', '--population', demo_population_path, '--budget', '10', '--gamma', '0.5',
                 '--n0', '2', '3', '--runs', '4', '--seed', '9', '--out', str(out), *extra])


def test_simulate_grid(tmp_path, demo_population_path):
    table = str(tmp_path / 'tables' / 'demo_{gamma}.json')
    assert main(['precompute', '--population', demo_population_path, '--budget', '10', '--gamma', '0.5',
                 '--out', table]) == 0
    policies = ['--policies', 'const:2', 'greedyrem:0.5', 'surrogate', '--table', table]
    first, second = tmp_path / 'a.csv', tmp_path / 'b.csv'
    assert _simulate(tmp_path, demo_population_path, first, *policies) == 0
    assert _simulate(tmp_path, demo_population_path, second, *policies) == 0

    episodes = pd.read_csv(first)
    assert len(episodes) == 3 * 2 * 4
    assert set(episodes['termination']) <= {'budget_exhausted', 'frontier_empty', 'round_cap'}
    assert (episodes['spend'] <= 10).all()
    assert first.read_bytes() == second.read_bytes()
    summary = pd.read_csv(tmp_path / 'a.summary.csv')
    assert len(summary) == 3 * 2
    assert os.path.exists(tmp_path / 'a.curves.csv')


def test_simulate_surrogate_without_table(tmp_path, demo_population_path, caplog):
    assert _simulate(tmp_path, demo_population_path, tmp_path / 'x.csv', '--policies', 'surrogate') == 2
    assert 'no --table' in caplog.text
    missing = str(tmp_path / 'nowhere_{gamma}.json')
    assert _simulate(tmp_path, demo_population_path, tmp_path / 'x.csv', '--policies', 'surrogate',
                     '--table', missing) == 1


def test_simulate_rejects_bad_arguments(tmp_path, demo_population_path):
    assert _simulate(tmp_path, demo_population_path, tmp_path / 'x.csv', '--policies', 'const:0') == 2
    assert _simulate(tmp_path, demo_population_path, tmp_path / 'x.csv', '--noise', 'gaussian') == 2
    assert main(['simulate', '--gamma', '0.5']) == 2


def test_simulate_from_manifest(tmp_path, demo_population_path):
    out = tmp_path / 'demo.csv'
    assert main(['simulate', '--config', os.path.join(DATA_DIR, 'demo_experiment.json'),
                 '--population', demo_population_path, '--gamma', '0.7', '--n0', '5', '--runs', '3',
                 '--policies', 'const:3', 'greedy:0.2', '--out', str(out)]) == 0
    assert len(pd.read_csv(out)) == 2 * 3


def test_manifest_rejects_unknown_keys(tmp_path):
    path = tmp_path / 'bad.json'
    path.write_text(json.dumps({'budget': 10, 'colour': 'blue'}))
    with pytest.raises(ValueError):
        ExperimentConfig.from_json(path)
    assert main(['simulate', '--config', str(path)]) == 2


def test_bounds_tightness_demo(capsys):
    assert main(['bounds', '--tightness', '--round-budget', '2', '--x', '0.9', '--beta', '0.4']) == 0
    assert capsys.readouterr().out.strip() == 'regret=0.8 bound=0.8'


def test_bounds_report(tmp_path, capsys):
    coin = Pmf.from_mapping({0: 0.5, 1: 0.5})
    population = _write_population(tmp_path / 'pop.json', PopulationModel.single(coin))
    frontier = tmp_path / 'frontier.json'
    frontier.write_text(json.dumps({'truth': [[0.5, 0.5]], 'estimates': [[0.5, 0.5]]}))
    out = tmp_path / 'bounds.csv'
    assert main(['bounds', '--population', population, '--frontier', str(frontier), '--budget', '10',
                 '--gamma', '0.5', '--out', str(out)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report['total'] == pytest.approx(0.0, abs=1e-12)
    assert report['c_r_gamma'] == pytest.approx(20.0)
    assert pd.read_csv(out)['total'].tolist() == pytest.approx([0.0], abs=1e-12)


def test_bounds_rejects_undiscounted(tmp_path):
    population = _write_population(tmp_path / 'pop.json', PopulationModel.single(point_mass(1)))
    assert main(['bounds', '--population', population, '--gamma', '1.0']) == 2


def test_oracle_check_command(capsys):
    assert main(['oracle-check', '--seed', '1']) == 0
    assert 'surrogate_vs_bellman' in capsys.readouterr().out


def test_synthesize_network_command(tmp_path):
    out_dir = tmp_path / 'net'
    assert main(['synthesize-network', '--nodes', '60', '--seed', '2', '--out-dir', str(out_dir)]) == 0
    edges = pd.read_csv(out_dir / 'edges.csv')
    covariates = pd.read_csv(out_dir / 'covariates.csv')
    assert list(edges.columns) == ['u', 'v']
    assert len(covariates) == 60
