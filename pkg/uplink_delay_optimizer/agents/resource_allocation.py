"""
resource_allocation.py
Slot durations and powers for fixed beams by successive convex
approximation, followed by a tightening pass and an independent check
of the original throughput and budget constraints.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from uplink_delay_optimizer.models.schedule import Schedule
from uplink_delay_optimizer.models.system_model import (
    TAU_FLOOR,
    BudgetRegime,
    ChannelRealization,
    SystemConfig,
    achievable_rate,
    device_throughputs,
    slot_gains,
)
from uplink_delay_optimizer.utils.convex_solver import (
    SolverSettings,
    StructuredConvexProblem,
    perspective_log_tangent,
    solve_structured_convex,
)
from uplink_delay_optimizer.utils.errors import DomainError, InfeasibleInstanceError
from uplink_delay_optimizer.utils.numerics import bisect_boundary

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScaSettings:
    tolerance: float = 1e-4
    max_iterations: int = 30
    solver: SolverSettings = field(default_factory=SolverSettings)


def taylor_bound(tau_hat: np.ndarray, z_hat: np.ndarray, tau: np.ndarray, z: np.ndarray, slot: int, k: int,
                 gains: np.ndarray, floor: float = TAU_FLOOR) -> float:
    """
    First-order upper bound of the interference term tau_i * log2(1 + s_{k-1,i} / tau_i),
    s_{k-1,i} = sum_{j=i..k-1} z[j, i] * gamma[j, i], expanded at (tau_hat, z_hat).
    Args:
        tau_hat (np.ndarray): Local slot durations.
        z_hat (np.ndarray): Local energies.
        tau (np.ndarray): Evaluation durations.
        z (np.ndarray): Evaluation energies.
        slot (int): Slot i.
        k (int): Order position of the decoded device.
        gains (np.ndarray): gamma[j, i] per order position and slot.
        floor (float): Smallest expansion duration.
    Returns:
        float: Bound value in bits/Hz.
    """
    if not tau_hat[slot] > 0.0:
        raise DomainError(f"Expansion point needs a positive duration in slot {slot}; raise it to the floor first")
    if k - 1 < slot:
        return 0.0
    interferers = slice(slot, k)
    s_hat = float(np.sum(np.asarray(z_hat)[interferers, slot] * gains[interferers, slot]))
    s = float(np.sum(np.asarray(z)[interferers, slot] * gains[interferers, slot]))
    c_tau, c_s = perspective_log_tangent(tau_hat[slot], s_hat, floor)
    return c_tau * tau[slot] + c_s * s


def _pin_last(schedule, budgets):
    z = np.array(schedule.z)
    z[-1, :] = schedule.tau * budgets[-1]
    return Schedule(order=schedule.order, tau=schedule.tau, z=z)


def sca_resource_allocation(config: SystemConfig, channels: ChannelRealization, beams: np.ndarray, warm: Schedule,
                            settings: Optional[ScaSettings] = None) -> Tuple[Schedule, int]:
    """
    Minimize the sum delay over durations and energies for fixed beams.
    Args:
        config (SystemConfig): Instance.
        channels (ChannelRealization): Fading draw.
        beams (np.ndarray): Beam plan, shape (K, N+1).
        warm (Schedule): Starting schedule, feasible for the original constraints.
        settings (ScaSettings | None): Tolerances.
    Returns:
        tuple: (Schedule, number of convex solves).
    """
    settings = settings or ScaSettings()
    order = warm.order
    gains = slot_gains(channels, order, beams, config.noise_power_w)
    budgets = config.budget_array[list(order)]
    targets = config.normalized_targets[list(order)]
    pin = config.regime is BudgetRegime.POWER

    local = _pin_last(warm, budgets) if pin else warm
    previous = local.sum_delay
    iterations = 0
    for iterations in range(1, settings.max_iterations + 1):
        problem = StructuredConvexProblem(gains=gains, budgets=budgets, targets=targets, regime=config.regime,
                                          local_tau=local.tau, local_z=local.z, pin_last=pin)
        try:
            tau, z, report = solve_structured_convex(problem, settings.solver)
        except InfeasibleInstanceError:
            if iterations == 1:
                raise
            logger.warning("SCA restriction %d infeasible; keeping the previous schedule", iterations)
            break
        candidate = Schedule(order=order, tau=np.maximum(tau, 0.0), z=np.maximum(z, 0.0))
        delay = candidate.sum_delay
        logger.debug("SCA iteration %d: delay %.9g s (barrier iterations %d)", iterations, delay, report.iterations)
        if delay > previous * (1.0 + 1e-12):
            break
        decrease = (previous - delay) / previous if previous > 0.0 else 0.0
        local, previous = candidate, delay
        if decrease < settings.tolerance:
            break

    return tighten_schedule(config, gains, local, settings.solver.tau_floor), iterations


def tighten_schedule(config: SystemConfig, gains: np.ndarray, schedule: Schedule, floor: float = TAU_FLOOR) -> Schedule:
    """
    Scale powers down, in decoding-order position, until no device exceeds its target.
    The last device of a power-budget instance keeps full power and gives up
    duration of its own slot instead.
    Args:
        config (SystemConfig): Instance.
        gains (np.ndarray): gamma[k, i] under the schedule's beams.
        schedule (Schedule): Feasible schedule.
        floor (float): Smallest meaningful slot duration.
    Returns:
        Schedule: Schedule with every constraint active where it can be.
    """
    order = schedule.order
    k_count = len(order)
    targets = config.normalized_targets[list(order)]
    tau = np.array(schedule.tau)
    powers = np.array(schedule.powers)
    pin = config.regime is BudgetRegime.POWER
    if pin:
        powers[-1, :] = config.budgets[order[-1]]

    for k in range(k_count):
        throughput = device_throughputs(tau, powers, gains)[k]
        if throughput <= targets[k]:
            continue
        if pin and k == k_count - 1:
            own_rate = math.log2(1.0 + powers[k, k] * gains[k, k])
            earlier = throughput - tau[k] * own_rate
            if own_rate > 0.0 and tau[k] > 10.0 * floor:
                tau[k] = max((targets[k] - earlier) / own_rate, 0.0)
            continue

        base = powers[k].copy()

        def meets(alpha):
            trial = powers.copy()
            trial[k] = alpha * base
            return device_throughputs(tau, trial, gains)[k] >= targets[k]

        alpha = bisect_boundary(meets, 0.0, 1.0, tol=1e-15)
        powers[k] = alpha * base

    return Schedule.from_powers(order, tau, powers)


def verify_schedule(config: SystemConfig, channels: ChannelRealization, beams: np.ndarray, schedule: Schedule) -> Dict:
    """
    Re-check the original constraints through the per-device SINR rates.
    Args:
        config (SystemConfig): Instance.
        channels (ChannelRealization): Fading draw.
        beams (np.ndarray): Beam plan used by the schedule.
        schedule (Schedule): Schedule to check.
    Returns:
        dict: throughput_bits per order position, qos_residual (largest relative
        shortfall), budget_residual (largest relative overshoot) and max_excess
        (largest relative surplus, zero when every constraint is tight).
    """
    order = schedule.order
    k_count = len(order)
    powers = schedule.powers
    throughput = np.zeros(k_count)
    for k in range(k_count):
        for i in range(k + 1):
            if schedule.tau[i] > 0.0:
                throughput[k] += schedule.tau[i] * achievable_rate(k, i, order, powers, beams[i], channels, config)
    targets = np.asarray(config.targets_bits)[list(order)]
    budgets = config.budget_array[list(order)]
    relative = (throughput - targets) / targets

    if config.regime is BudgetRegime.POWER:
        usage = np.max(np.tril(powers), axis=1) / budgets
    else:
        usage = schedule.device_energy / budgets
    return {
        'throughput_bits': throughput.tolist(),
        'qos_residual': float(max(0.0, -np.min(relative))),
        'budget_residual': float(max(0.0, np.max(usage) - 1.0)),
        'max_excess': float(max(0.0, np.max(relative))),
    }
