"""
thresholds.py
Closed-form protocol-selection thresholds and the regime classifier that
decides whether the hybrid schedule collapses to pure NOMA or pure TDMA.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Sequence

import numpy as np

from uplink_delay_optimizer.agents.tdma import TdmaSolution, energy_limited_duration, minimum_required_energy
from uplink_delay_optimizer.models.system_model import (
    BudgetRegime,
    ChannelRealization,
    SystemConfig,
    slot_gains,
    snr_gain,
)
from uplink_delay_optimizer.utils.errors import DomainError

logger = logging.getLogger(__name__)


class Regime(str, Enum):
    PURE_NOMA = "pure_noma"
    PURE_TDMA = "pure_tdma"
    HYBRID = "hybrid"


@dataclass
class RegimeReport:
    """
    Args:
        regime (Regime): Classification.
        order (tuple): Decoding order the thresholds refer to.
        comparisons (list of dict): One entry per compared device and threshold.
        minimum_energy (list): Minimum required energy per device label (energy budgets only).
    """
    regime: Regime
    order: tuple
    comparisons: List[Dict] = field(default_factory=list)
    minimum_energy: List[float] = field(default_factory=list)

    def thresholds(self, kind: str) -> np.ndarray:
        """Threshold per order position for one kind; NaN where not defined."""
        values = np.full(len(self.order), np.nan)
        for row in self.comparisons:
            if row['kind'] == kind:
                values[row['position']] = row['threshold']
        return values

    def to_dict(self) -> Dict:
        return {
            'regime': self.regime.value,
            'order': list(self.order),
            'comparisons': self.comparisons,
            'minimum_energy_j': self.minimum_energy,
        }


def _check_position(k, order):
    if not 1 <= k < len(order):
        raise DomainError(f"Thresholds are defined for order positions 1..{len(order) - 1}, got {k}")


def _shared_gains(config, channels, v1, order):
    return slot_gains(channels, order, np.asarray(v1)[None, :], config.noise_power_w)[:, 0]


def noma_throughput_threshold(config: SystemConfig, channels: ChannelRealization, v1: np.ndarray, k: int,
                              order: Sequence[int]) -> float:
    """
    Largest target of position k that NOMA serves within the first device's full-power slot.
    Args:
        config (SystemConfig): Power-budget instance.
        channels (ChannelRealization): Fading draw.
        v1 (np.ndarray): Shared NOMA beam.
        k (int): Order position, k >= 1.
        order (tuple): Decoding order.
    Returns:
        float: Threshold in bits.
    """
    _check_position(k, order)
    gains = _shared_gains(config, channels, v1, order)
    power = config.budget_array[list(order)]
    interference = 1.0 + float(np.sum(power[:k] * gains[:k]))
    first_target = config.targets_bits[order[0]]
    return (math.log2(1.0 + power[k] * gains[k] / interference)
            * first_target / math.log2(1.0 + power[0] * gains[0]))


def noma_energy_threshold(config: SystemConfig, channels: ChannelRealization, v1: np.ndarray, k: int,
                          order: Sequence[int]) -> float:
    """
    Energy position k needs to share the first device's energy-limited slot.
    Returns:
        float: Threshold in J.
    """
    _check_position(k, order)
    gains = _shared_gains(config, channels, v1, order)
    targets = config.normalized_targets[list(order)]
    first_duration = energy_limited_duration(targets[0], config.budgets[order[0]], gains[0], device=order[0])
    return (first_duration / gains[k] * (2.0 ** (targets[k] / first_duration) - 1.0)
            * 2.0 ** (np.sum(targets[:k]) / first_duration))


def tdma_slot_index(config: SystemConfig, channels: ChannelRealization, tdma_solution: TdmaSolution, k: int,
                    order: Sequence[int]) -> int:
    """Earlier position whose slot is cheapest for position k to share; ties go to the smallest."""
    _check_position(k, order)
    device = order[k]
    noise = config.noise_power_w
    costs = []
    for j in range(k):
        other = order[j]
        cross = snr_gain(channels.b[device], tdma_solution.beams[other], noise)
        costs.append((1.0 + tdma_solution.power[other] * tdma_solution.gains[other]) / cross
                     if cross > 0.0 else math.inf)
    return int(np.argmin(costs))


def tdma_energy_threshold(config: SystemConfig, channels: ChannelRealization, tdma_solution: TdmaSolution, k: int,
                          order: Sequence[int]) -> float:
    """
    Energy at or below which position k transmits only in its own slot.
    Returns:
        float: Threshold in J.
    """
    i = tdma_slot_index(config, channels, tdma_solution, k, order)
    device, shared = order[k], order[i]
    noise = config.noise_power_w
    targets = config.normalized_targets
    own_gain = tdma_solution.gains[device]
    cross_gain = snr_gain(channels.b[device], tdma_solution.beams[shared], noise)
    shared_rate = targets[shared] / tdma_solution.tau[shared]
    numerator = targets[device] * (2.0 ** shared_rate / cross_gain - 1.0 / own_gain)
    return numerator / (math.log2(own_gain / cross_gain) + shared_rate)


def classify_regime(config: SystemConfig, channels: ChannelRealization, noma_v1: np.ndarray,
                    tdma_solution: TdmaSolution, order: Sequence[int]) -> RegimeReport:
    """
    Decide whether the hybrid schedule collapses to one of the pure protocols.
    Args:
        config (SystemConfig): Instance.
        channels (ChannelRealization): Fading draw.
        noma_v1 (np.ndarray): Optimized NOMA beam.
        tdma_solution (TdmaSolution): Closed-form TDMA schedule.
        order (tuple): Decoding order.
    Returns:
        RegimeReport: Classification with every comparison made.
    """
    order = tuple(int(k) for k in order)
    k_count = len(order)
    energy = config.regime is BudgetRegime.ENERGY
    report = RegimeReport(regime=Regime.PURE_TDMA, order=order)
    if energy:
        report.minimum_energy = [float(minimum_required_energy(config, channels, k)) for k in range(k_count)]
    if k_count == 1:
        return report

    if not energy:
        for k in range(1, k_count):
            threshold = noma_throughput_threshold(config, channels, noma_v1, k, order)
            target = config.targets_bits[order[k]]
            report.comparisons.append({
                'position': k, 'device': order[k], 'kind': 'noma_throughput',
                'value': float(target), 'threshold': float(threshold), 'holds': bool(target <= threshold),
            })
        noma = all(row['holds'] for row in report.comparisons)
        report.regime = Regime.PURE_NOMA if noma else Regime.HYBRID
        return report

    for k in range(1, k_count):
        budget = config.budgets[order[k]]
        e_no = noma_energy_threshold(config, channels, noma_v1, k, order)
        e_td = tdma_energy_threshold(config, channels, tdma_solution, k, order)
        report.comparisons.append({
            'position': k, 'device': order[k], 'kind': 'noma_energy',
            'value': float(budget), 'threshold': float(e_no), 'holds': bool(budget >= e_no),
        })
        report.comparisons.append({
            'position': k, 'device': order[k], 'kind': 'tdma_energy',
            'value': float(budget), 'threshold': float(e_td), 'holds': bool(budget <= e_td),
        })
    holds = lambda kind: all(row['holds'] for row in report.comparisons if row['kind'] == kind)
    if holds('noma_energy'):
        report.regime = Regime.PURE_NOMA
    elif holds('tdma_energy'):
        report.regime = Regime.PURE_TDMA
    else:
        report.regime = Regime.HYBRID
    logger.debug("Regime %s for order %s", report.regime.value, order)
    return report
