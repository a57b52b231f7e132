"""
test_experiments.py
Scenario parsing, sweeps, Monte Carlo rows and result files.
"""

import glob
import os

import numpy as np
import pytest

from conftest import make_config
from uplink_delay_optimizer.agents.experiment_runner import (
    Baseline,
    Scenario,
    apply_sweep,
    emit_outputs,
    load_scenario,
    run_scenario,
)
from uplink_delay_optimizer.models.system_model import BudgetRegime
from uplink_delay_optimizer.utils.config_parser import load_system_config, parse_system_config
from uplink_delay_optimizer.utils.errors import InvalidConfigError
from uplink_delay_optimizer.utils.result_store import SUMMARY_COLUMNS, decode_times, load_rows

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'uplink_delay_optimizer', 'data')
SCENARIOS = sorted(glob.glob(os.path.join(DATA_DIR, 'scenarios', '*.json')))
# full-size sweeps run with this many draws under -m slow
SLOW_DRAWS = 3


def _small_scenario(**changes):
    scenario = load_scenario(os.path.join(DATA_DIR, 'scenarios', 'two_device_power_asymmetric.json'))
    values = dict(config=scenario.config.replace(irs_elements=4), sweep_values=[100.0, 200.0], draws=2,
                  baselines=[Baseline.parse(b) for b in ('hma-dirs-pro', 'tdma-dirs-pro', 'noma-dirs-pro')])
    values.update(changes)
    return scenario.replace(**values)


def test_baseline_parsing():
    baseline = Baseline.parse('HMA-sirs-opt')
    assert baseline.id == 'hma-sirs-opt'
    assert Baseline.parse('tdma-dirs-pro').with_overrides(irs='sirs').irs == 'dirs'
    assert Baseline.parse('hma-dirs-pro').with_overrides(irs='noirs', order='des').id == 'hma-noirs-des'
    for text in ('hma-dirs', 'lte-dirs-pro', 'hma-dirs-best', 'noma-sirs-pro'):
        with pytest.raises(InvalidConfigError):
            Baseline.parse(text)


@pytest.mark.parametrize("path", SCENARIOS, ids=os.path.basename)
def test_bundled_scenarios_parse(path):
    scenario = load_scenario(path)
    assert scenario.comment
    assert scenario.sweep_values == sorted(scenario.sweep_values)
    assert scenario.baselines


def test_bundled_system_config():
    config = load_system_config(os.path.join(DATA_DIR, 'system_config.json'))
    assert config.regime is BudgetRegime.POWER
    assert config.noise_power_w == pytest.approx(1e-11)
    assert config.targets_bits == (200e3, 300e3)


def test_config_parser_rejects_mixed_budget():
    data = {'system': {
        'bandwidth_hz': 1e6, 'noise_power_dbm': -80, 'irs_elements': 2, 'bs_position': [0, 0, 0],
        'irs_position': [1, 0, 0], 'device_positions': [[2, 0, 0]], 'alpha_direct': 3, 'alpha_cascaded': 2,
        'budget': {'regime': 'energy', 'energy_j': 1, 'max_power_dbm': 5}, 'targets_kbits': 1}}
    with pytest.raises(InvalidConfigError):
        parse_system_config(data)
    del data['system']['budget']
    with pytest.raises(InvalidConfigError):
        parse_system_config(data)


def test_scenario_validation():
    config = make_config()
    base = dict(name='s', config=config, sweep_variable='target_kbits', baselines=[Baseline.parse('hma-dirs-pro')])
    with pytest.raises(InvalidConfigError):
        Scenario(sweep_values=[], **base)
    with pytest.raises(InvalidConfigError):
        Scenario(sweep_values=[2.0, 1.0], **base)
    with pytest.raises(InvalidConfigError):
        Scenario(**dict(base, baselines=[]), sweep_values=[1.0])
    with pytest.raises(InvalidConfigError):
        Scenario(**dict(base, sweep_variable='energy_j'), sweep_values=[1.0])


def test_device_count_sweep_layout():
    scenario = load_scenario(os.path.join(DATA_DIR, 'scenarios', 'ten_device_energy.json'))
    config = apply_sweep(scenario, 3)
    assert config.device_positions == ((15.0, 0.0, 0.0), (10.0, 0.0, 0.0), (5.0, 0.0, 0.0))
    np.testing.assert_allclose(config.targets_bits, [600e3, 400e3, 200e3])
    np.testing.assert_allclose(config.budgets, [1.0, 2.0, 3.0])


def test_target_sweep_changes_one_device():
    scenario = _small_scenario()
    config = apply_sweep(scenario, 350.0)
    assert config.targets_bits == (200e3, 350e3)


def test_run_scenario_rows_and_summary():
    scenario = _small_scenario()
    rows, summary, timing = run_scenario(scenario, n_jobs=1)

    assert len(rows) == 2 * 2 * 3
    assert all(row['status'] == 'ok' for row in rows)
    assert all(row['monotone'] for row in rows)
    assert list(summary.columns) == SUMMARY_COLUMNS
    assert len(summary) == 2 * 3
    assert (summary['draws_ok'] == 2).all()
    assert len(timing) == len(rows)

    by_key = {(r['sweep_value'], r['draw'], r['baseline']): r for r in rows}
    for value in scenario.sweep_values:
        for draw in range(scenario.draws):
            hma = by_key[(value, draw, 'hma-dirs-pro')]['delay_s']
            assert hma <= by_key[(value, draw, 'tdma-dirs-pro')]['delay_s'] * (1 + 1e-6)
            assert hma <= by_key[(value, draw, 'noma-dirs-pro')]['delay_s'] * (1 + 1e-6)


def test_runs_are_reproducible():
    scenario = _small_scenario(sweep_values=[100.0], draws=1)
    first, _, _ = run_scenario(scenario, n_jobs=1)
    second, _, _ = run_scenario(scenario, n_jobs=1)
    assert [r['delay_s'] for r in first] == [r['delay_s'] for r in second]


def test_infeasible_draws_are_recorded():
    config = make_config(regime=BudgetRegime.ENERGY, budgets=(0.5, 0.5), irs_elements=2)
    scenario = Scenario(name='starved', config=config, sweep_variable='energy_j', sweep_values=[1e-9, 0.5],
                        baselines=[Baseline.parse('tdma-dirs-pro'), Baseline.parse('hma-dirs-pro')], draws=1)
    rows, summary, _ = run_scenario(scenario, n_jobs=1)
    statuses = {(r['sweep_value'], r['baseline']): r['status'] for r in rows}
    assert statuses[(1e-9, 'tdma-dirs-pro')] == 'infeasible'
    assert statuses[(1e-9, 'hma-dirs-pro')] == 'infeasible'
    assert statuses[(0.5, 'tdma-dirs-pro')] == 'ok'
    starved = summary[summary['sweep_value'] == 1e-9]
    assert (starved['draws_failed'] == 1).all()
    assert starved['mean_delay_s'].isna().all()


def test_outputs_round_trip(tmp_path):
    scenario = _small_scenario(sweep_values=[100.0], draws=1)
    rows, summary, timing = run_scenario(scenario, n_jobs=1)
    paths = emit_outputs(rows, str(tmp_path), scenario=scenario, summary=summary, timing=timing)
    names = {os.path.basename(p) for p in paths}
    assert {'rows.csv', 'summary.csv', 'timing.csv', 'hma-dirs-pro.dat'} <= names

    loaded = load_rows(str(tmp_path))
    assert list(loaded['delay_s']) == [r['delay_s'] for r in rows]
    assert 'wall_time_s' in loaded.columns
    for text, row in zip(loaded['completion_times_s'], rows):
        assert decode_times(text) == tuple(row['completion_times_s'])

    with open(tmp_path / 'hma-dirs-pro.dat', encoding='utf-8') as f:
        lines = f.read().splitlines()
    assert lines[0].startswith('#')
    assert len(lines) == 2


def test_emit_outputs_needs_rows(tmp_path):
    with pytest.raises(InvalidConfigError):
        emit_outputs([], str(tmp_path))


@pytest.mark.slow
@pytest.mark.parametrize("path", SCENARIOS, ids=os.path.basename)
def test_bundled_scenario_runs(tmp_path, path):
    scenario = load_scenario(path).replace(draws=SLOW_DRAWS)
    rows, summary, timing = run_scenario(scenario)
    emit_outputs(rows, str(tmp_path), scenario=scenario, summary=summary, timing=timing)
    assert len(rows) == len(scenario.sweep_values) * SLOW_DRAWS * len(scenario.baselines)
    assert summary['draws_ok'].sum() > 0

    ok = [r for r in rows if r['status'] == 'ok']
    assert all(r['monotone'] for r in ok)
    assert all(r['iterations'] <= 50 for r in ok)

    by_key = {(r['sweep_value'], r['draw'], r['baseline']): r for r in ok}
    for (value, draw, baseline), row in by_key.items():
        if baseline != 'hma-dirs-pro':
            continue
        for other in ('tdma-dirs-pro', 'noma-dirs-pro'):
            if (value, draw, other) in by_key:
                assert row['delay_s'] <= by_key[(value, draw, other)]['delay_s'] * (1 + 1e-6)

    means = summary.pivot(index='sweep_value', columns='baseline', values='mean_delay_s')
    failed = summary.pivot(index='sweep_value', columns='baseline', values='draws_failed')
    clean = (failed[['hma-dirs-pro', 'tdma-dirs-pro', 'noma-dirs-pro']] == 0).all(axis=1)
    for other in ('tdma-dirs-pro', 'noma-dirs-pro'):
        assert (means.loc[clean, 'hma-dirs-pro'] <= means.loc[clean, other] * (1 + 1e-6)).all()


@pytest.mark.slow
def test_irs_element_sweep_trend():
    scenario = load_scenario(os.path.join(DATA_DIR, 'scenarios', 'irs_element_count.json'))
    scenario = scenario.replace(baselines=[Baseline.parse(b) for b in ('hma-dirs-pro', 'hma-sirs-pro', 'hma-noirs-pro')])
    _, summary, _ = run_scenario(scenario)
    assert (summary['draws_failed'] == 0).all()

    means = summary.pivot(index='sweep_value', columns='baseline', values='mean_delay_s')
    assert list(means.index) == [10.0, 20.0, 40.0, 80.0]
    assert np.all(np.diff(means['hma-dirs-pro'].to_numpy()) < 0.0)
    assert (means['hma-dirs-pro'] <= means['hma-sirs-pro'] * (1 + 1e-6)).all()
    assert (means['hma-sirs-pro'] <= means['hma-noirs-pro'] * (1 + 1e-6)).all()
