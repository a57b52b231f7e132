"""
test_noma.py
Single-slot NOMA: tight powers, minimal duration and the beam alternation.
"""

import numpy as np
import pytest

from uplink_delay_optimizer.agents.noma import (
    noma_min_delay_fixed_beam,
    recursive_powers,
    solve_noma,
)
from uplink_delay_optimizer.agents.ordering import propose_order, tdma_snr
from uplink_delay_optimizer.agents.tdma import aligned_beams, solve_tdma
from uplink_delay_optimizer.models.system_model import device_throughputs, generate_channels
from uplink_delay_optimizer.utils.errors import DomainError, InfeasibleInstanceError


def _single_slot_throughputs(tau1, powers, gains):
    k_count = gains.size
    tau = np.zeros(k_count)
    tau[0] = tau1
    p = np.zeros((k_count, k_count))
    p[:, 0] = powers
    g = np.zeros((k_count, k_count))
    g[:, 0] = gains
    return device_throughputs(tau, p, g)


def test_recursive_powers_meet_targets_exactly():
    gains = np.array([300.0, 1200.0, 50.0])
    targets = np.array([0.2, 0.5, 0.1])
    tau1 = 0.4
    powers = recursive_powers(tau1, targets, gains)
    np.testing.assert_allclose(_single_slot_throughputs(tau1, powers, gains), targets, rtol=1e-12)


def test_recursive_powers_need_positive_duration():
    with pytest.raises(DomainError):
        recursive_powers(0.0, np.ones(2), np.ones(2))


@pytest.mark.parametrize("fixture", ["power", "energy"])
def test_fixed_beam_duration_is_minimal(request, fixture):
    config = request.getfixturevalue(f"{fixture}_config")
    channels = request.getfixturevalue(f"{fixture}_channels")
    tdma = solve_tdma(config, channels)
    order = propose_order(tdma_snr(tdma))
    v1 = aligned_beams(channels)[order[0]]
    solution = noma_min_delay_fixed_beam(config, channels, v1, order)
    budgets = config.budget_array[list(order)]
    targets = config.normalized_targets[list(order)]

    usage = solution.powers if fixture == "power" else solution.powers * solution.tau1
    assert np.all(usage <= budgets * (1 + 1e-12))
    throughputs = _single_slot_throughputs(solution.tau1, solution.powers, solution.gains)
    assert np.all(throughputs >= targets * (1 - 1e-6))

    shorter = 0.999 * solution.tau1
    tight = recursive_powers(shorter, targets, solution.gains)
    tight_usage = tight if fixture == "power" else tight * shorter
    assert np.any(tight_usage > budgets)


def test_solve_noma_trace_decreases(three_device_config):
    channels = generate_channels(three_device_config)
    solution = solve_noma(three_device_config, channels)
    trace = np.asarray(solution.trace)
    assert trace[-1] == pytest.approx(solution.delay)
    assert np.all(np.diff(trace) <= 0.0)
    assert solution.beam[-1] == 1.0
    np.testing.assert_allclose(np.abs(solution.beam), 1.0, atol=1e-12)


def test_noma_schedule_uses_first_slot_only(power_config, power_channels):
    solution = solve_noma(power_config, power_channels)
    schedule = solution.to_schedule()
    assert schedule.tau[0] == solution.tau1
    assert np.all(schedule.tau[1:] == 0.0)
    assert schedule.sum_delay == pytest.approx(solution.delay)
    assert solution.beam_plan().shape == (2, power_config.irs_elements + 1)


def test_noma_infeasible_when_energy_too_small(energy_config, energy_channels):
    starved = energy_config.replace(budgets=(1e-9, 1e-9))
    with pytest.raises(InfeasibleInstanceError):
        solve_noma(starved, energy_channels, order=(0, 1))
