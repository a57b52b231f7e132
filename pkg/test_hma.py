"""
test_hma.py
End-to-end hybrid planner: dominance over the pure protocols, full-power
last device, monotone alternation, IRS modes and ordering policies.
"""

import itertools
import json

import numpy as np
import pytest

from conftest import make_config
from uplink_delay_optimizer.agents.hma_planner import HmaSettings, solve_fixed_beams, solve_hma
from uplink_delay_optimizer.agents.ordering import propose_order, tdma_snr, two_device_order_gap
from uplink_delay_optimizer.agents.tdma import aligned_beams, solve_tdma
from uplink_delay_optimizer.agents.thresholds import Regime
from uplink_delay_optimizer.models.system_model import (
    OCCUPIED_SLOT_FACTOR,
    TAU_FLOOR,
    BudgetRegime,
    aligned_beam,
    generate_channels,
    snr_gain,
    validate_beam,
)
from uplink_delay_optimizer.utils.errors import InvalidConfigError

RTOL = 1e-6


def _check_solution(config, schedule, beams, report):
    assert report.delay == pytest.approx(schedule.sum_delay)
    assert report.delay <= report.tdma_delay * (1 + RTOL)
    if report.noma_delay is not None:
        assert report.delay <= report.noma_delay * (1 + RTOL)
    if report.fixed_beam_delay is not None:
        assert report.delay <= report.fixed_beam_delay * (1 + 1e-9)
    assert report.residuals['qos_residual'] <= 1e-6
    assert report.residuals['budget_residual'] <= 1e-9
    assert report.trace.is_monotone()
    assert beams.shape == (config.device_count, config.irs_elements + 1)
    for v in beams:
        validate_beam(v, tol=1e-9)


@pytest.mark.parametrize("fixture", ["power", "energy"])
def test_hybrid_beats_pure_protocols(request, fixture):
    config = request.getfixturevalue(f"{fixture}_config")
    channels = request.getfixturevalue(f"{fixture}_channels")
    schedule, beams, report = solve_hma(config, channels)
    _check_solution(config, schedule, beams, report)
    json.dumps(report.to_dict())


def test_three_devices(three_device_config):
    channels = generate_channels(three_device_config)
    schedule, beams, report = solve_hma(three_device_config, channels)
    _check_solution(three_device_config, schedule, beams, report)
    assert len(report.slot_sum_rates) == 3


def test_last_device_transmits_at_full_power(power_config, power_channels):
    schedule, _, _ = solve_hma(power_config, power_channels)
    budget = power_config.budgets[schedule.order[-1]]
    occupied = schedule.tau > OCCUPIED_SLOT_FACTOR * TAU_FLOOR
    np.testing.assert_array_equal(schedule.powers[-1, occupied], budget)


def test_average_sum_rate_accounts_for_every_bit(energy_config, energy_channels):
    schedule, _, report = solve_hma(energy_config, energy_channels)
    carried = report.average_sum_rate * report.delay
    assert carried == pytest.approx(sum(report.residuals['throughput_bits']), rel=1e-9)


def test_alternation_is_monotone_and_bounded(power_config, power_channels):
    settings = HmaSettings(use_shortcuts=False, max_outer_iterations=5)
    _, _, report = solve_hma(power_config, power_channels, settings)
    assert report.regime is Regime.HYBRID
    assert report.trace.outer_iterations <= 5
    assert report.trace.is_monotone()
    assert report.warm_start in ('tdma', 'noma')


def test_fixed_beams_from_tdma(power_config, power_channels):
    tdma = solve_tdma(power_config, power_channels)
    order = propose_order(tdma_snr(tdma))
    schedule = solve_fixed_beams(power_config, power_channels, order, tdma.beams[list(order)])
    assert schedule.sum_delay <= tdma.sum_delay * (1 + RTOL)
    assert schedule.order == order


def test_static_beams_share_one_vector(power_config, power_channels):
    schedule, beams, report = solve_hma(power_config, power_channels, HmaSettings(static_beams=True))
    np.testing.assert_allclose(beams, np.tile(beams[0], (len(beams), 1)))
    if report.noma_delay is not None:
        assert schedule.sum_delay <= report.noma_delay * (1 + RTOL)
    assert report.residuals['qos_residual'] <= 1e-6


def test_without_irs(power_config, power_channels):
    schedule, beams, report = solve_hma(power_config, power_channels.without_irs())
    assert beams.shape == (2, 1)
    np.testing.assert_array_equal(beams, 1.0)
    assert schedule.sum_delay <= report.tdma_delay * (1 + RTOL)


def test_exhaustive_order_is_no_worse(power_config, power_channels):
    proposed, _, _ = solve_hma(power_config, power_channels)
    best, _, _ = solve_hma(power_config, power_channels, HmaSettings(order_policy="exhaustive"))
    assert best.sum_delay <= proposed.sum_delay * (1 + 1e-12)


def test_settings_from_dict():
    settings = HmaSettings.from_dict({'ao_tolerance': 1e-3, 'sca_tolerance': 1e-5, 'barrier_tolerance': 1e-7})
    assert settings.ao_tolerance == 1e-3
    assert settings.sca.tolerance == 1e-5
    assert settings.sca.solver.kkt_tol == 1e-7
    with pytest.raises(InvalidConfigError):
        HmaSettings.from_dict({'learning_rate': 0.1})


def test_energy_instance_regime_report(energy_config, energy_channels):
    _, _, report = solve_hma(energy_config, energy_channels)
    assert energy_config.regime is BudgetRegime.ENERGY
    assert len(report.regime_report.minimum_energy) == 2
    assert report.regime in (Regime.PURE_NOMA, Regime.PURE_TDMA, Regime.HYBRID)


def _grid_search_delay(config, channels, order, phases=16, power_levels=1000):
    """
    Two devices, power budgets: exhaustive grid over the shared-slot beam and
    the first position's power. The last position transmits at full power with
    its own slot aligned to it, and the slot durations follow in closed form.
    """
    noise = config.noise_power_w
    first, second = order
    b_first, b_second = channels.b[first], channels.b[second]
    l_first, l_second = config.normalized_targets[first], config.normalized_targets[second]
    p_full = config.budget_array[second]

    unit = np.exp(2j * np.pi * np.arange(phases) / phases)
    reflect = np.array(list(itertools.product(unit, repeat=config.irs_elements)))
    beams = np.hstack([reflect, np.ones((len(reflect), 1))])
    g_first = (np.abs(beams @ np.conj(b_first)) ** 2 / noise)[:, None]
    g_second = (np.abs(beams @ np.conj(b_second)) ** 2 / noise)[:, None]
    p_first = config.budget_array[first] * np.arange(1, power_levels + 1)[None, :] / power_levels

    own = np.log2(1.0 + p_first * g_first)
    shared = np.log2(1.0 + p_first * g_first + p_full * g_second) - own
    alone = np.log2(1.0 + p_full * snr_gain(b_second, aligned_beam(b_second), noise))
    tau_first = l_first / own
    with_own_slot = tau_first + np.maximum(l_second - tau_first * shared, 0.0) / alone
    shared_only = np.maximum(tau_first, l_second / shared)
    return float(min(with_own_slot.min(), shared_only.min()))


def test_two_devices_match_grid_search():
    config = make_config(irs_elements=2)
    channels = generate_channels(config)
    schedule, _, _ = solve_hma(config, channels, HmaSettings(order_policy="exhaustive"))
    best = min(_grid_search_delay(config, channels, order) for order in ((0, 1), (1, 0)))
    assert schedule.sum_delay <= 1.02 * best
    assert schedule.sum_delay >= 0.95 * best


@pytest.mark.slow
def test_order_gap_predicts_better_order():
    rng = np.random.default_rng(12)
    agree = 0
    draws = 100
    for seed in range(draws):
        near, far = sorted(rng.uniform(10.0, 45.0, 2))
        config = make_config(device_positions=((near, 0.0, 0.0), (far, 0.0, 0.0)), irs_elements=4,
                             targets_bits=tuple(rng.uniform(50e3, 400e3, 2)), rng_seed=seed)
        channels = generate_channels(config)
        aligned = aligned_beams(channels)
        delays = {order: solve_fixed_beams(config, channels, order, aligned[list(order)]).sum_delay
                  for order in ((0, 1), (1, 0))}
        gap = two_device_order_gap(config, channels)
        agree += (gap > 0) == (delays[(0, 1)] > delays[(1, 0)])
    assert agree >= 0.95 * draws
