"""
noma.py
Single-slot NOMA with SIC: minimum slot duration by bisection over tight
recursive powers, alternated with FP refinement of the shared beam.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from uplink_delay_optimizer.agents.beamforming import fp_beam_refinement
from uplink_delay_optimizer.agents.ordering import propose_order, tdma_snr
from uplink_delay_optimizer.agents.tdma import energy_limited_duration, solve_tdma
from uplink_delay_optimizer.models.schedule import Schedule
from uplink_delay_optimizer.models.system_model import (
    BudgetRegime,
    ChannelRealization,
    SystemConfig,
    aligned_beam,
    slot_gains,
    snr_gain,
)
from uplink_delay_optimizer.utils.errors import DomainError, InfeasibleInstanceError, SolverNonConvergenceError
from uplink_delay_optimizer.utils.numerics import bisect_boundary, golden_section_minimize

logger = logging.getLogger(__name__)

MAX_BRACKET_DOUBLINGS = 200
MONOTONE_SAMPLES = 17
BUDGET_RTOL = 1e-12


@dataclass(frozen=True)
class NomaSolution:
    """
    Args:
        order (tuple): Device label at each decoding position.
        tau1 (float): Duration of the single slot in s.
        powers (np.ndarray): Power of each order position in W.
        beam (np.ndarray): Shared beam v1.
        gains (np.ndarray): gamma of each order position under v1.
        trace (tuple): Delay after every accepted beam update.
    """
    order: tuple
    tau1: float
    powers: np.ndarray
    beam: np.ndarray
    gains: np.ndarray
    trace: tuple = ()

    @property
    def delay(self) -> float:
        return self.tau1

    def to_schedule(self) -> Schedule:
        """Hybrid schedule that uses only the first slot."""
        k_count = len(self.order)
        tau = np.zeros(k_count)
        tau[0] = self.tau1
        powers = np.zeros((k_count, k_count))
        powers[:, 0] = self.powers
        return Schedule.from_powers(self.order, tau, powers)

    def beam_plan(self) -> np.ndarray:
        return np.tile(self.beam, (len(self.order), 1))


def recursive_powers(tau1: float, targets: np.ndarray, gains: np.ndarray) -> np.ndarray:
    """
    Powers that meet every target with equality in one SIC slot.
    Args:
        tau1 (float): Slot duration, positive.
        targets (np.ndarray): Normalized targets per order position.
        gains (np.ndarray): gamma per order position under the slot beam.
    Returns:
        np.ndarray: Power per order position; inf where the gain is zero.
    """
    if not tau1 > 0.0:
        raise DomainError(f"Slot duration must be positive, got {tau1!r}")
    targets = np.asarray(targets, dtype=float)
    gains = np.asarray(gains, dtype=float)
    with np.errstate(over="ignore"):
        growth = np.exp2(targets / tau1) - 1.0
    powers = np.empty(targets.size)
    interference = 1.0
    for k in range(targets.size):
        powers[k] = growth[k] * interference / gains[k] if gains[k] > 0.0 else math.inf
        interference += powers[k] * gains[k] if gains[k] > 0.0 else 0.0
    return powers


def _usage(tau1, targets, gains, regime):
    powers = recursive_powers(tau1, targets, gains)
    return powers if regime is BudgetRegime.POWER else powers * tau1


def _is_monotone(samples, targets, gains, regime):
    usage = np.array([_usage(t, targets, gains, regime) for t in samples])
    finite = np.all(np.isfinite(usage), axis=1)
    usage = usage[finite]
    if usage.shape[0] < 2:
        return True
    return bool(np.all(np.diff(usage, axis=0) <= 1e-15 * np.abs(usage[:-1])))


def noma_min_delay_fixed_beam(config: SystemConfig, channels: ChannelRealization, v1: np.ndarray,
                              order: Sequence[int]) -> NomaSolution:
    """
    Smallest single-slot duration whose tight powers fit the budgets.
    Args:
        config (SystemConfig): Instance.
        channels (ChannelRealization): Fading draw.
        v1 (np.ndarray): Shared beam.
        order (tuple): Device label at each decoding position.
    Returns:
        NomaSolution: Solution without a beam-update trace.
    """
    order = tuple(int(k) for k in order)
    v1 = np.asarray(v1, dtype=complex)
    gains = slot_gains(channels, order, v1[None, :], config.noise_power_w)[:, 0]
    targets = config.normalized_targets[list(order)]
    budgets = config.budget_array[list(order)]
    regime = config.regime

    if np.any(gains <= 0.0):
        device = order[int(np.argmin(gains))]
        raise InfeasibleInstanceError(f"Device {device} has zero channel gain under the shared beam.", device=device)

    if regime is BudgetRegime.POWER:
        lo = float(np.max(targets / np.log2(1.0 + budgets * gains)))
    else:
        lo = max(energy_limited_duration(targets[k], budgets[k], gains[k], device=order[k])
                 for k in range(len(order)))

    def feasible(tau1):
        return bool(np.all(_usage(tau1, targets, gains, regime) <= budgets * (1.0 + BUDGET_RTOL)))

    if feasible(lo):
        tau1 = lo
    else:
        hi = 2.0 * lo
        for _ in range(MAX_BRACKET_DOUBLINGS):
            if feasible(hi):
                break
            hi *= 2.0
        else:
            raise SolverNonConvergenceError(
                f"No feasible NOMA slot duration found below {hi:.3e} s for order {order}.")

        samples = np.linspace(lo, hi, MONOTONE_SAMPLES)
        if not _is_monotone(samples, targets, gains, regime):
            logger.warning("NOMA budget usage is not monotone on [%.6g, %.6g] for order %s; "
                           "narrowing the bracket by golden-section search", lo, hi, order)
            worst = lambda t: float(np.max(_usage(t, targets, gains, regime) / budgets))
            candidate = golden_section_minimize(worst, lo, hi, tol=1e-12 * hi)
            if feasible(candidate):
                hi = candidate
        tau1 = bisect_boundary(feasible, lo, hi, tol=max(1e-10 * (hi - lo), 1e-12))

    powers = recursive_powers(tau1, targets, gains)
    if regime is BudgetRegime.POWER:
        powers = np.minimum(powers, budgets)
    else:
        powers = np.minimum(powers, budgets / tau1)
    return NomaSolution(order=order, tau1=float(tau1), powers=powers, beam=v1, gains=gains)


def _initial_beams(config, channels):
    """Aligned beams tried for v1, weakest device first."""
    noise = config.noise_power_w
    candidates = [aligned_beam(b_k) for b_k in channels.b]
    own_gain = [snr_gain(channels.b[k], candidates[k], noise) for k in range(config.device_count)]
    return [candidates[k] for k in np.argsort(own_gain, kind="stable")]


def solve_noma(config: SystemConfig, channels: ChannelRealization, order: Optional[Sequence[int]] = None,
               max_iterations: int = 20, tolerance: float = 1e-4) -> NomaSolution:
    """
    NOMA with an optimized shared beam.
    Args:
        config (SystemConfig): Instance.
        channels (ChannelRealization): Fading draw.
        order (tuple | None): Decoding order; ascending TDMA SNR when omitted.
        max_iterations (int): Cap on beam/duration alternations.
        tolerance (float): Stop when the delay drops by less than this fraction.
    Returns:
        NomaSolution: Best solution with its delay trace.
    """
    if order is None:
        order = propose_order(tdma_snr(solve_tdma(config, channels)))

    solution = None
    error = None
    for v1 in _initial_beams(config, channels):
        try:
            solution = noma_min_delay_fixed_beam(config, channels, v1, order)
            break
        except InfeasibleInstanceError as exc:
            error = exc
    if solution is None:
        raise error

    trace = [solution.delay]
    for iteration in range(1, max_iterations + 1):
        beams, inner, _ = fp_beam_refinement(solution.to_schedule(), solution.beam_plan(), channels, config)
        try:
            candidate = noma_min_delay_fixed_beam(config, channels, beams[0], order)
        except InfeasibleInstanceError:
            logger.debug("NOMA beam update %d rejected: instance infeasible at the new beam", iteration)
            break
        if candidate.delay >= solution.delay:
            break
        decrease = (solution.delay - candidate.delay) / solution.delay
        solution = candidate
        trace.append(solution.delay)
        logger.debug("NOMA iteration %d: delay %.9g s after %d FP steps", iteration, solution.delay, inner)
        if decrease < tolerance:
            break

    logger.info("NOMA solved: order %s, delay %.6g s", order, solution.delay)
    return dataclasses.replace(solution, trace=tuple(trace))
