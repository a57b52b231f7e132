"""
tdma.py
Closed-form TDMA schedules for the power and energy budget regimes.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from uplink_delay_optimizer.models.system_model import (
    BudgetRegime,
    ChannelRealization,
    SystemConfig,
    aligned_beam,
    snr_gain,
)
from uplink_delay_optimizer.utils.errors import DomainError, InfeasibleInstanceError
from uplink_delay_optimizer.utils.numerics import lambert_w_m1

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)


@dataclass(frozen=True)
class TdmaSolution:
    """
    One device per slot, indexed by original device label.
    Args:
        beams (np.ndarray): Beam used in each device's own slot, shape (K, N+1).
        tau (np.ndarray): Slot duration per device in s.
        power (np.ndarray): Transmit power per device in W.
        gains (np.ndarray): gamma_k(v_k) per device.
        regime (BudgetRegime): Budget type of the instance.
    """
    beams: np.ndarray
    tau: np.ndarray
    power: np.ndarray
    gains: np.ndarray
    regime: BudgetRegime

    @property
    def sum_delay(self) -> float:
        return float(np.sum(self.tau))

    @property
    def snr(self) -> np.ndarray:
        """TDMA SNR p_k * gamma_k(v_k)."""
        return self.power * self.gains


def power_limited_duration(l_bar: float, power: float, gain: float) -> float:
    """Duration that carries l_bar bits/Hz at full power: l_bar / log2(1 + P gamma)."""
    rate = math.log2(1.0 + power * gain)
    if rate <= 0.0:
        return math.inf
    return l_bar / rate


def energy_limited_duration(l_bar: float, energy: float, gain: float, device: Optional[int] = None) -> float:
    """
    Shortest duration in which a device spending exactly `energy` carries l_bar bits/Hz.
    Args:
        l_bar (float): Normalized target in bits/Hz.
        energy (float): Energy budget in J.
        gain (float): Channel gain gamma in 1/W.
        device (int | None): Label used in the infeasibility message.
    Returns:
        float: Duration in s.
    """
    if l_bar <= 0.0:
        return 0.0
    if energy * gain <= 0.0:
        raise InfeasibleInstanceError(f"Device {device} has no usable channel or energy.", device=device)
    xi = -l_bar * LN2 / (energy * gain)
    if xi <= -1.0:
        raise InfeasibleInstanceError(
            f"Device {device} cannot deliver its target: energy {energy:.4g} J does not exceed the "
            f"minimum required {l_bar * LN2 / gain:.4g} J.", device=device)
    w = lambert_w_m1(xi * math.exp(xi))
    return -l_bar * LN2 / (w - xi)


def minimum_required_energy(config: SystemConfig, channels: ChannelRealization, k: int) -> float:
    """
    Energy device k needs as its slot grows without bound.
    Args:
        config (SystemConfig): Instance.
        channels (ChannelRealization): Fading draw.
        k (int): Device label.
    Returns:
        float: L_k / B * ln 2 / gamma_k(aligned beam), in J.
    """
    gain = snr_gain(channels.b[k], aligned_beam(channels.b[k]), config.noise_power_w)
    l_bar = config.normalized_targets[k]
    if l_bar == 0.0:
        return 0.0
    return l_bar * LN2 / gain if gain > 0.0 else math.inf


def tdma_schedule_for_beams(config: SystemConfig, channels: ChannelRealization, beams: np.ndarray) -> TdmaSolution:
    """
    TDMA schedule with a given beam in each device's own slot.
    Args:
        config (SystemConfig): Instance.
        channels (ChannelRealization): Fading draw.
        beams (np.ndarray): One beam per device label, shape (K, N+1).
    Returns:
        TdmaSolution: Closed-form durations and powers.
    """
    beams = np.atleast_2d(np.asarray(beams, dtype=complex))
    k_count = config.device_count
    if beams.shape[0] != k_count:
        raise DomainError(f"Expected {k_count} beams, got {beams.shape[0]}")
    gains = np.array([snr_gain(channels.b[k], beams[k], config.noise_power_w) for k in range(k_count)])
    l_bar = config.normalized_targets
    budgets = config.budget_array

    if config.regime is BudgetRegime.POWER:
        tau = np.array([power_limited_duration(l_bar[k], budgets[k], gains[k]) for k in range(k_count)])
        power = budgets.copy()
    else:
        tau = np.array([energy_limited_duration(l_bar[k], budgets[k], gains[k], device=k)
                        for k in range(k_count)])
        power = budgets / tau
    return TdmaSolution(beams=beams, tau=tau, power=power, gains=gains, regime=config.regime)


def aligned_beams(channels: ChannelRealization) -> np.ndarray:
    """Per-device aligned beams, shape (K, N+1)."""
    return np.array([aligned_beam(b_k) for b_k in channels.b])


def tdma_power_limited(config: SystemConfig, channels: ChannelRealization) -> TdmaSolution:
    """Full-power TDMA with each slot's beam aligned to its device."""
    if config.regime is not BudgetRegime.POWER:
        raise DomainError("tdma_power_limited needs a power-budget instance")
    return tdma_schedule_for_beams(config, channels, aligned_beams(channels))


def tdma_energy_limited(config: SystemConfig, channels: ChannelRealization) -> TdmaSolution:
    """Energy-exhausting TDMA with each slot's beam aligned to its device."""
    if config.regime is not BudgetRegime.ENERGY:
        raise DomainError("tdma_energy_limited needs an energy-budget instance")
    solution = tdma_schedule_for_beams(config, channels, aligned_beams(channels))
    logger.debug("TDMA energy durations: %s", solution.tau)
    return solution


def solve_tdma(config: SystemConfig, channels: ChannelRealization) -> TdmaSolution:
    if config.regime is BudgetRegime.POWER:
        return tdma_power_limited(config, channels)
    return tdma_energy_limited(config, channels)
