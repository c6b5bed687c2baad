"""
Tests for the kerrlat command-line interface
"""

import csv
import json

import pytest
from click.testing import CliRunner

from cli import cli


RING = {
    'n_sites': 6,
    'boundary': 'periodic',
    'g': 0.3,
    'kappa': 0.05,
    'beta': 0.1,
    'delta': 0.2,
    'eta': 0.1,
    'gamma': 'minimum',
    'drives': 1.0,
}

HATANO_NELSON = {
    'n_sites': 8,
    'boundary': 'periodic',
    'g': 0.5,
    'kappa': 0.2,
    'beta': 0.0,
    'delta': 0.0,
    'eta': 0.1,
    'gamma': 'minimum',
    'drives': 0.0,
}


@pytest.fixture
def runner():
    return CliRunner()


def write_config(tmp_path, data, name='model.json'):
    path = tmp_path / name
    path.write_text(data if isinstance(data, str) else json.dumps(data), encoding='utf-8')
    return str(path)


def invoke(runner, tmp_path, *args, config=None):
    options = ['--out', str(tmp_path / 'out'), '--log-level', 'WARNING']
    if config is not None:
        options += ['--config', config]
    return runner.invoke(cli, options + list(args))


def test_steady_writes_json(runner, tmp_path):
    result = invoke(runner, tmp_path, 'steady', config=write_config(tmp_path, RING))
    assert result.exit_code == 0, result.output
    document = json.loads((tmp_path / 'out' / 'steady_state.json').read_text())
    assert document['converged'] is True
    assert len(document['alpha']) == 6
    assert len(document['alpha'][0]) == 2
    assert document['residual'] < 1e-9


def test_empty_config_is_a_usage_error(runner, tmp_path):
    result = invoke(runner, tmp_path, 'steady', config=write_config(tmp_path, ''))
    assert result.exit_code == 2
    assert 'n_sites' in result.output


def test_unknown_key_is_a_usage_error(runner, tmp_path):
    config = write_config(tmp_path, dict(RING, colour='blue'))
    result = invoke(runner, tmp_path, 'steady', config=config)
    assert result.exit_code == 2
    assert 'colour' in result.output


def test_missing_config_flag(runner, tmp_path):
    result = invoke(runner, tmp_path, 'noise')
    assert result.exit_code == 2


def test_bad_format_flag(runner, tmp_path):
    result = runner.invoke(cli, ['--format', 'xml', 'steady'])
    assert result.exit_code == 2


def test_noise_tables_as_csv(runner, tmp_path):
    config = write_config(tmp_path, RING)
    result = runner.invoke(cli, ['--config', config, '--out', str(tmp_path / 'out'),
                                 '--format', 'csv', '--log-level', 'WARNING', 'noise'])
    assert result.exit_code == 0, result.output
    with open(tmp_path / 'out' / 'covariance.csv', encoding='utf-8') as f:
        rows = list(csv.reader(f))
    assert rows[0] == ['i', 'j', 'cov']
    assert len(rows) == 1 + 36
    with open(tmp_path / 'out' / 'spectrum.csv', encoding='utf-8') as f:
        assert next(csv.reader(f)) == ['re', 'im', 'boundary']
    profile = json.loads((tmp_path / 'out' / 'noise.json').read_text())
    assert [row['site'] for row in profile] == list(range(6))


def test_correlations_cross_check(runner, tmp_path):
    result = invoke(runner, tmp_path, 'correlations', '--method', 'kspace',
                    config=write_config(tmp_path, RING))
    assert result.exit_code == 0, result.output
    check = json.loads((tmp_path / 'out' / 'correlations_check.json').read_text())
    assert check['method'] == 'kspace'
    assert check['max_relative_deviation'] < 1e-6


def test_correlations_need_a_ring(runner, tmp_path):
    config = write_config(tmp_path, dict(RING, boundary='open'))
    result = invoke(runner, tmp_path, 'correlations', config=config)
    assert result.exit_code == 1


def test_winding_of_hatano_nelson_loops(runner, tmp_path):
    """Both bands circle -i gamma_tot clockwise"""
    result = invoke(runner, tmp_path, 'winding', '--ref', '0,-0.5', '--photon-number', '0',
                    config=write_config(tmp_path, HATANO_NELSON))
    assert result.exit_code == 0, result.output
    document = json.loads((tmp_path / 'out' / 'winding.json').read_text())
    assert document['per_loop'] == [1, 1]
    assert 'winding: 2' in result.output


def test_winding_reference_on_band(runner, tmp_path):
    result = invoke(runner, tmp_path, 'winding', '--ref', '1,-0.5', '--photon-number', '0',
                    config=write_config(tmp_path, HATANO_NELSON))
    assert result.exit_code == 1


def test_winding_reference_must_parse(runner, tmp_path):
    result = invoke(runner, tmp_path, 'winding', '--ref', 'middle', config=write_config(tmp_path, RING))
    assert result.exit_code == 2


def test_braid_degree_command(runner, tmp_path):
    config = write_config(tmp_path, dict(RING, g=0.05, kappa=0.015, beta=1.0, delta=-0.3, eta=0.01))
    result = invoke(runner, tmp_path, 'braid', '--photon-number', '0.1', config=config)
    assert result.exit_code == 0, result.output
    document = json.loads((tmp_path / 'out' / 'braid.json').read_text())
    assert document['braid_degree'] == 1


def test_spectrum_command(runner, tmp_path):
    result = invoke(runner, tmp_path, 'spectrum', '--k-count', '64', config=write_config(tmp_path, RING))
    assert result.exit_code == 0, result.output
    table = json.loads((tmp_path / 'out' / 'spectrum.json').read_text())
    assert table['columns'] == ['re', 'im', 'boundary']
    boundaries = [row[2] for row in table['rows']]
    assert boundaries.count('periodic') == 12
    assert boundaries.count('bloch') == 128


def test_transient_trajectory(runner, tmp_path):
    result = invoke(runner, tmp_path, 'transient', '--t-end', '5', '--samples', '11',
                    config=write_config(tmp_path, RING))
    assert result.exit_code == 0, result.output
    table = json.loads((tmp_path / 'out' / 'trajectory.json').read_text())
    assert table['columns'][:3] == ['time', 're0', 'im0']
    assert len(table['rows']) == 11
    assert table['rows'][0][1:] == [0.0] * 12


def test_transient_kick(runner, tmp_path):
    config = write_config(tmp_path, dict(RING, boundary='open'))
    result = invoke(runner, tmp_path, 'transient', '--t-end', '5', '--samples', '11', '--site', '2',
                    config=config)
    assert result.exit_code == 0, result.output
    assert 'chirality ratio' in result.output
    assert (tmp_path / 'out' / 'response.json').exists()


def test_sweep_command(runner, tmp_path):
    config = write_config(tmp_path, dict(RING, g=0.05, kappa=0.015, beta=1.0, delta=-0.3, eta=0.01))
    result = invoke(runner, tmp_path, 'sweep', '--flux-min', '0.01', '--flux-max', '0.05',
                    '--points', '5', '--k-count', '128', config=config)
    assert result.exit_code == 0, result.output
    assert 'pumped braid sequence: [0]' in result.output
    table = json.loads((tmp_path / 'out' / 'flux_sweep.json').read_text())
    assert table['columns'][0] == 'flux'


def test_montecarlo_command(runner, tmp_path):
    config = write_config(tmp_path, {
        'n_sites': 1, 'g': 0.0, 'kappa': 0.0, 'beta': 0.1, 'delta': 0.0,
        'eta': 0.5, 'gamma': 0.5, 'drives': 1.0, 'rng_seed': 21,
    })
    result = invoke(runner, tmp_path, 'montecarlo', '--trajectories', '64', '--dt', '0.01',
                    '--t-relax', '2', '--t-collect', '5', '--sigma', '5', config=config)
    assert result.exit_code == 0, result.output
    summary = json.loads((tmp_path / 'out' / 'montecarlo.json').read_text())
    assert summary['seed'] == 21
    assert summary['n_trajectories'] == 64
    check = json.loads((tmp_path / 'out' / 'montecarlo_check.json').read_text())
    assert check['passed'] is True
