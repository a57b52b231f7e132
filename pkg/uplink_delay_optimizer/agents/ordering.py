"""
ordering.py
Decoding-order policies driven by the TDMA SNR, and the two-device order comparison.
"""

import itertools
import math
from typing import List, Tuple

import numpy as np

from uplink_delay_optimizer.agents.tdma import TdmaSolution
from uplink_delay_optimizer.models.system_model import (
    BudgetRegime,
    ChannelRealization,
    SystemConfig,
    aligned_beam,
    snr_gain,
)
from uplink_delay_optimizer.utils.errors import DomainError

ORDER_POLICIES = ("pro", "des", "rand", "exhaustive")
MAX_EXHAUSTIVE_DEVICES = 8


def tdma_snr(tdma_solution: TdmaSolution) -> np.ndarray:
    """
    TDMA-based SNR of every device.
    Args:
        tdma_solution (TdmaSolution): Closed-form TDMA schedule.
    Returns:
        np.ndarray: p_k * gamma_k(v_k) per device label.
    """
    return np.asarray(tdma_solution.snr, dtype=float)


def propose_order(snr: np.ndarray) -> Tuple[int, ...]:
    """Ascending TDMA SNR; ties keep the lower device label first."""
    snr = np.asarray(snr, dtype=float)
    if not np.all(np.isfinite(snr)):
        raise DomainError("TDMA SNR must be finite to propose an order")
    return tuple(int(k) for k in np.argsort(snr, kind="stable"))


def descending_order(snr: np.ndarray) -> Tuple[int, ...]:
    snr = np.asarray(snr, dtype=float)
    return tuple(int(k) for k in np.argsort(-snr, kind="stable"))


def random_order(device_count: int, seed: int) -> Tuple[int, ...]:
    return tuple(int(k) for k in np.random.default_rng(seed).permutation(device_count))


def candidate_orders(snr: np.ndarray, policy: str = "pro", seed: int = 0) -> List[Tuple[int, ...]]:
    """
    Orders to try under a policy.
    Args:
        snr (np.ndarray): TDMA SNR per device.
        policy (str): One of pro, des, rand, exhaustive.
        seed (int): Seed of the random policy.
    Returns:
        list of tuple: One order, or every permutation for the exhaustive policy.
    """
    k_count = len(snr)
    if policy == "pro":
        return [propose_order(snr)]
    if policy == "des":
        return [descending_order(snr)]
    if policy == "rand":
        return [random_order(k_count, seed)]
    if policy == "exhaustive":
        if k_count > MAX_EXHAUSTIVE_DEVICES:
            raise DomainError(f"Exhaustive ordering is limited to {MAX_EXHAUSTIVE_DEVICES} devices, got {k_count}")
        return [tuple(p) for p in itertools.permutations(range(k_count))]
    raise DomainError(f"Unknown ordering policy {policy!r}; choose one of {', '.join(ORDER_POLICIES)}")


def two_device_order_gap(config: SystemConfig, channels: ChannelRealization) -> float:
    """
    Delay of order (0, 1) minus delay of order (1, 0) for a two-device
    power-budget instance with aligned beams. Positive means (1, 0) is better.
    """
    if config.device_count != 2:
        raise DomainError(f"The order gap compares two devices, got {config.device_count}")
    if config.regime is not BudgetRegime.POWER:
        raise DomainError("The order gap is defined for power budgets")
    noise = config.noise_power_w
    v = [aligned_beam(channels.b[k]) for k in range(2)]
    gain = lambda k, slot: snr_gain(channels.b[k], v[slot], noise)
    p1, p2 = config.budgets
    l1, l2 = config.normalized_targets

    own_1 = math.log2(1.0 + p1 * gain(0, 0))
    own_2 = math.log2(1.0 + p2 * gain(1, 1))
    cross_12 = math.log2(1.0 + p1 * gain(0, 1) / (1.0 + p2 * gain(1, 1)))
    cross_21 = math.log2(1.0 + p2 * gain(1, 0) / (1.0 + p1 * gain(0, 0)))
    return (l2 * cross_12 - l1 * cross_21) / (own_1 * own_2)
