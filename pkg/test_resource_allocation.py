"""
test_resource_allocation.py
Tangent bounds, the barrier solver and SCA resource allocation at fixed beams.
"""

import math

import numpy as np
import pytest

from uplink_delay_optimizer.agents.hma_planner import tdma_warm_schedule
from uplink_delay_optimizer.agents.ordering import propose_order, tdma_snr
from uplink_delay_optimizer.agents.resource_allocation import (
    sca_resource_allocation,
    taylor_bound,
    verify_schedule,
)
from uplink_delay_optimizer.agents.tdma import solve_tdma
from uplink_delay_optimizer.models.system_model import BudgetRegime, device_throughputs, slot_gains
from uplink_delay_optimizer.utils.convex_solver import (
    StructuredConvexProblem,
    perspective_log,
    solve_structured_convex,
)
from uplink_delay_optimizer.utils.errors import DomainError, InfeasibleInstanceError


@pytest.fixture
def tangent_point():
    rng = np.random.default_rng(21)
    gains = rng.uniform(100.0, 2000.0, (3, 3))
    tau_hat = rng.uniform(0.05, 0.5, 3)
    z_hat = np.tril(rng.uniform(1e-4, 1e-3, (3, 3)))
    return gains, tau_hat, z_hat


def test_taylor_bound_touches_at_expansion_point(tangent_point):
    gains, tau_hat, z_hat = tangent_point
    s_hat = float(np.sum(z_hat[0:2, 0] * gains[0:2, 0]))
    exact = float(perspective_log(tau_hat[0], s_hat))
    assert taylor_bound(tau_hat, z_hat, tau_hat, z_hat, 0, 2, gains) == pytest.approx(exact, rel=1e-12)


def test_taylor_bound_is_an_upper_bound(tangent_point):
    gains, tau_hat, z_hat = tangent_point
    rng = np.random.default_rng(22)
    for _ in range(200):
        tau = rng.uniform(1e-3, 1.0, 3)
        z = np.tril(rng.uniform(0.0, 5e-3, (3, 3)))
        for slot in range(2):
            s = float(np.sum(z[slot:2, slot] * gains[slot:2, slot]))
            exact = float(perspective_log(tau[slot], s))
            assert taylor_bound(tau_hat, z_hat, tau, z, slot, 2, gains) >= exact - 1e-12


def test_taylor_bound_edge_cases(tangent_point):
    gains, tau_hat, z_hat = tangent_point
    assert taylor_bound(tau_hat, z_hat, tau_hat, z_hat, 2, 2, gains) == 0.0
    zero = tau_hat.copy()
    zero[1] = 0.0
    with pytest.raises(DomainError):
        taylor_bound(zero, z_hat, tau_hat, z_hat, 1, 2, gains)


def _tdma_setup(config, channels):
    tdma = solve_tdma(config, channels)
    order = propose_order(tdma_snr(tdma))
    beams = tdma.beams[list(order)]
    return tdma, order, beams, tdma_warm_schedule(tdma, order)


def test_barrier_solver_improves_on_tdma(power_config, power_channels):
    tdma, order, beams, warm = _tdma_setup(power_config, power_channels)
    gains = slot_gains(power_channels, order, beams, power_config.noise_power_w)
    budgets = power_config.budget_array[list(order)]
    targets = power_config.normalized_targets[list(order)]
    z = np.array(warm.z)
    z[-1, :] = warm.tau * budgets[-1]
    problem = StructuredConvexProblem(gains=gains, budgets=budgets, targets=targets, regime=BudgetRegime.POWER,
                                      local_tau=warm.tau, local_z=z, pin_last=True)
    tau, z, report = solve_structured_convex(problem)

    assert report.converged
    assert report.duality_gap < 1e-6 * tau.sum()
    assert tau.sum() <= tdma.sum_delay * (1 + 1e-6)
    np.testing.assert_allclose(z[-1, :], tau * budgets[-1])
    powers = np.tril(z / tau[None, :])
    assert np.all(powers <= budgets[:, None] * (1 + 1e-9))
    assert np.all(device_throughputs(tau, powers, gains) >= targets * (1 - 1e-6))


def test_barrier_solver_reports_infeasibility():
    gains = np.array([[1000.0, 0.0], [800.0, 500.0]])
    targets = np.array([0.4, 0.6])
    budgets = 0.2 * targets * math.log(2.0) / np.diag(gains)
    problem = StructuredConvexProblem(gains=gains, budgets=budgets, targets=targets, regime=BudgetRegime.ENERGY,
                                      local_tau=np.ones(2), local_z=np.zeros((2, 2)))
    with pytest.raises(InfeasibleInstanceError) as info:
        solve_structured_convex(problem)
    assert info.value.certificate is not None
    assert info.value.certificate > 0.0


def test_problem_validation():
    with pytest.raises(DomainError):
        StructuredConvexProblem(gains=np.ones((2, 2)), budgets=np.ones(2), targets=np.ones(2),
                                regime=BudgetRegime.ENERGY, local_tau=np.ones(2), local_z=np.zeros((2, 2)),
                                pin_last=True)
    with pytest.raises(DomainError):
        StructuredConvexProblem(gains=np.ones((3, 3)), budgets=np.ones(2), targets=np.ones(2),
                                regime=BudgetRegime.POWER, local_tau=np.ones(2), local_z=np.zeros((2, 2)))


@pytest.mark.parametrize("fixture", ["power", "energy"])
def test_sca_schedule_is_feasible_and_tight(request, fixture):
    config = request.getfixturevalue(f"{fixture}_config")
    channels = request.getfixturevalue(f"{fixture}_channels")
    tdma, order, beams, warm = _tdma_setup(config, channels)
    schedule, iterations = sca_resource_allocation(config, channels, beams, warm)

    assert iterations >= 1
    assert schedule.sum_delay <= tdma.sum_delay * (1 + 1e-6)
    check = verify_schedule(config, channels, beams, schedule)
    assert check['qos_residual'] <= 1e-6
    assert check['budget_residual'] <= 1e-9

    targets = np.asarray(config.targets_bits)[list(order)]
    excess = (np.asarray(check['throughput_bits']) - targets) / targets
    tight = excess[:-1] if config.regime is BudgetRegime.POWER else excess
    assert np.all(tight <= 1e-6)


def test_sca_pins_last_device_at_full_power(power_config, power_channels):
    _, order, beams, warm = _tdma_setup(power_config, power_channels)
    schedule, _ = sca_resource_allocation(power_config, power_channels, beams, warm)
    budget = power_config.budgets[order[-1]]
    np.testing.assert_array_equal(schedule.powers[-1, :], np.full(len(order), budget))
