"""
beamforming.py
Dynamic IRS beamforming by fractional programming: quadratic-transform
auxiliaries, per-slot unit-modulus coordinate ascent and the inner
refinement loop shared by the NOMA and hybrid solvers.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from uplink_delay_optimizer.models.schedule import Schedule
from uplink_delay_optimizer.models.system_model import ChannelRealization, SystemConfig
from uplink_delay_optimizer.utils.errors import DomainError

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)


@dataclass(frozen=True)
class FpAuxiliaries:
    """
    Args:
        chi (np.ndarray): SINR auxiliaries chi[k, i], lower triangular.
        iota (np.ndarray): Complex ratio auxiliaries iota[k, i], lower triangular.
    """
    chi: np.ndarray
    iota: np.ndarray


def effective_channels(channels, order, beams, noise_power):
    """h[k, i] = b_k^H v_i / sigma for the device at order position k."""
    composites = channels.b[np.asarray(order, dtype=int)] / math.sqrt(noise_power)
    beams = np.atleast_2d(np.asarray(beams, dtype=complex))
    if beams.shape[1] != composites.shape[1]:
        raise DomainError(f"Beam length {beams.shape[1]} does not match channel length {composites.shape[1]}")
    return np.conj(composites) @ beams.T


def _received(powers, h):
    received = np.tril(powers * np.abs(h) ** 2)
    cumulative = np.cumsum(received, axis=0)
    previous = np.vstack([np.zeros((1, cumulative.shape[1])), cumulative[:-1]])
    return received, cumulative, previous


def fp_auxiliary_update(schedule, beams, channels, noise_power):
    """
    Refresh the quadratic-transform auxiliaries at the current schedule and beams.
    Args:
        schedule (Schedule): Current durations and energies.
        beams (np.ndarray): Beam plan, shape (K, N+1).
        channels (ChannelRealization): Fading draw.
        noise_power (float): sigma^2 in W.
    Returns:
        FpAuxiliaries: chi set to the per-slot SINRs and iota to the optimal ratios.
    """
    powers = schedule.powers
    h = effective_channels(channels, schedule.order, beams, noise_power)
    received, cumulative, previous = _received(powers, h)
    chi = np.tril(received / (1.0 + previous))
    amplitude = np.sqrt(schedule.tau[None, :] * (1.0 + chi) * powers)
    iota = np.tril(amplitude * h / (1.0 + cumulative))
    return FpAuxiliaries(chi=chi, iota=iota)


def fp_surrogate(schedule, aux, beams, channels, noise_power):
    """
    Quadratic-transform lower bound u[k, i] on tau_i * rate[k, i], in bits/Hz.
    Tight when aux was computed at the same schedule and beams.
    """
    powers = schedule.powers
    tau = schedule.tau[None, :]
    h = effective_channels(channels, schedule.order, beams, noise_power)
    _, cumulative, _ = _received(powers, h)
    amplitude = np.sqrt(tau * (1.0 + aux.chi) * powers)
    bracket = (-tau * aux.chi
               + 2.0 * np.real(np.conj(aux.iota) * amplitude * h)
               - np.abs(aux.iota) ** 2 * (1.0 + cumulative))
    return np.tril(tau * np.log2(1.0 + aux.chi) + bracket / LN2)


def slot_quadratic(schedule, aux, channels, noise_power, slot):
    """
    Linear and quadratic coefficients of the slot objective 2 Re{c^H v} - v^H A v.
    Returns:
        tuple: (c, A) with c of length N+1 and A Hermitian PSD.
    """
    order = np.asarray(schedule.order, dtype=int)
    composites = channels.b[order[slot:]] / math.sqrt(noise_power)
    powers = schedule.powers[slot:, slot]
    chi = aux.chi[slot:, slot]
    iota = aux.iota[slot:, slot]
    amplitude = np.sqrt(schedule.tau[slot] * (1.0 + chi) * powers)
    c = (iota * amplitude) @ composites
    # weight of b_j b_j^H collects |iota_k|^2 over every k >= j
    tail = np.cumsum((np.abs(iota) ** 2)[::-1])[::-1]
    weights = powers * tail
    a = (composites.T * weights) @ np.conj(composites)
    return c, a


def _quadratic_objective(c, a, v):
    return float(2.0 * np.real(np.vdot(c, v)) - np.real(np.vdot(v, a @ v)))


def coordinate_phase_ascent(c, a, v, tol=1e-8, max_sweeps=500):
    """
    Maximize 2 Re{c^H v} - v^H A v over unit-modulus v with the last entry fixed at 1.
    Args:
        c (np.ndarray): Linear coefficients.
        a (np.ndarray): Hermitian PSD matrix.
        v (np.ndarray): Starting beam.
        tol (float): Stop when a sweep changes the objective by less than this (relative).
        max_sweeps (int): Cap on full sweeps.
    Returns:
        tuple: (beam, objective per sweep).
    """
    v = np.asarray(v, dtype=complex).copy()
    trace = [_quadratic_objective(c, a, v)]
    for _ in range(max_sweeps):
        for n in range(v.size - 1):
            residual = c[n] - (a[n] @ v - a[n, n] * v[n])
            if abs(residual) > 0.0:
                v[n] = np.exp(1j * np.angle(residual))
        trace.append(_quadratic_objective(c, a, v))
        if abs(trace[-1] - trace[-2]) <= tol * max(1.0, abs(trace[-1])):
            break
    return v, trace


def beamforming_update(schedule, aux, beams, channels, noise_power, static=False):
    """
    One FP beam step with the auxiliaries held fixed.
    Args:
        schedule (Schedule): Current durations and energies.
        aux (FpAuxiliaries): Auxiliaries from fp_auxiliary_update.
        beams (np.ndarray): Current beam plan, shape (K, N+1).
        channels (ChannelRealization): Fading draw.
        noise_power (float): sigma^2 in W.
        static (bool): Use one beam for every slot.
    Returns:
        np.ndarray: Updated beam plan.
    """
    beams = np.atleast_2d(np.asarray(beams, dtype=complex)).copy()
    if beams.shape[1] == 1:
        return beams
    k_count = schedule.device_count

    if static:
        size = beams.shape[1]
        c_total = np.zeros(size, dtype=complex)
        a_total = np.zeros((size, size), dtype=complex)
        for i in range(k_count):
            c, a = slot_quadratic(schedule, aux, channels, noise_power, i)
            c_total += c
            a_total += a
        v, _ = coordinate_phase_ascent(c_total, a_total, beams[0])
        return np.tile(v, (k_count, 1))

    for i in range(k_count):
        if schedule.tau[i] <= 0.0:
            continue
        c, a = slot_quadratic(schedule, aux, channels, noise_power, i)
        if not np.any(c):
            continue
        beams[i], _ = coordinate_phase_ascent(c, a, beams[i])
    return beams


def fp_beam_refinement(schedule: Schedule, beams: np.ndarray, channels: ChannelRealization, config: SystemConfig,
                       static: bool = False, tol: float = 1e-6,
                       max_inner: int = 20) -> Tuple[np.ndarray, int, List[float]]:
    """
    Alternate auxiliary and beam updates at a fixed schedule until the total
    throughput slack stops growing.
    Args:
        schedule (Schedule): Fixed durations and energies.
        beams (np.ndarray): Starting beam plan.
        channels (ChannelRealization): Fading draw.
        config (SystemConfig): Supplies sigma^2 and the targets.
        static (bool): Use one beam for every slot.
        tol (float): Convergence threshold on the summed slack.
        max_inner (int): Cap on FP iterations.
    Returns:
        tuple: (beams, iterations, slack trace).
    """
    noise = config.noise_power_w
    targets = config.normalized_targets[list(schedule.order)]
    trace = []
    iterations = 0
    for iterations in range(1, max_inner + 1):
        aux = fp_auxiliary_update(schedule, beams, channels, noise)
        beams = beamforming_update(schedule, aux, beams, channels, noise, static=static)
        slack = float(np.sum(fp_surrogate(schedule, aux, beams, channels, noise)) - np.sum(targets))
        trace.append(slack)
        logger.debug("FP iteration %d: total slack %.9g", iterations, slack)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) < tol:
            break
    return beams, iterations, trace
