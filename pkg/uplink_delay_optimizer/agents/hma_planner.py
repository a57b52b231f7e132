"""
hma_planner.py
Hybrid multiple-access planner: TDMA and NOMA baselines, decoding order,
regime shortcuts, and alternating FP beamforming / SCA resource allocation.
"""

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from uplink_delay_optimizer.agents.beamforming import fp_beam_refinement
from uplink_delay_optimizer.agents.noma import solve_noma
from uplink_delay_optimizer.agents.ordering import candidate_orders, tdma_snr
from uplink_delay_optimizer.agents.resource_allocation import (
    ScaSettings,
    sca_resource_allocation,
    verify_schedule,
)
from uplink_delay_optimizer.agents.tdma import TdmaSolution, solve_tdma, tdma_schedule_for_beams
from uplink_delay_optimizer.agents.thresholds import Regime, RegimeReport, classify_regime
from uplink_delay_optimizer.models.schedule import Schedule
from uplink_delay_optimizer.models.system_model import (
    BudgetRegime,
    ChannelRealization,
    SystemConfig,
    slot_gains,
    slot_sum_rates,
)
from uplink_delay_optimizer.utils.convex_solver import SolverSettings
from uplink_delay_optimizer.utils.errors import InfeasibleInstanceError, InvalidConfigError

logger = logging.getLogger(__name__)

DELAY_RTOL = 1e-12


@dataclass(frozen=True)
class HmaSettings:
    ao_tolerance: float = 1e-4
    max_outer_iterations: int = 50
    fp_tolerance: float = 1e-6
    max_fp_iterations: int = 20
    noma_iterations: int = 20
    order_policy: str = "pro"
    order_seed: int = 0
    static_beams: bool = False
    dual_warm_start: bool = True
    use_shortcuts: bool = True
    sca: ScaSettings = field(default_factory=ScaSettings)

    @classmethod
    def from_dict(cls, values: Optional[Dict]) -> "HmaSettings":
        """
        Build settings from a scenario's solver section.
        Args:
            values (dict): Field overrides; sca_tolerance, sca_max_iterations and
                barrier_tolerance reach the nested solvers.
        Returns:
            HmaSettings: Settings with defaults for missing keys.
        """
        values = dict(values or {})
        sca_kwargs = {}
        if 'sca_tolerance' in values:
            sca_kwargs['tolerance'] = float(values.pop('sca_tolerance'))
        if 'sca_max_iterations' in values:
            sca_kwargs['max_iterations'] = int(values.pop('sca_max_iterations'))
        if 'barrier_tolerance' in values:
            sca_kwargs['solver'] = SolverSettings(kkt_tol=float(values.pop('barrier_tolerance')))
        known = {f.name for f in dataclasses.fields(cls)} - {'sca'}
        unknown = set(values) - known
        if unknown:
            raise InvalidConfigError(f"Unknown solver settings: {', '.join(sorted(unknown))}")
        return cls(sca=ScaSettings(**sca_kwargs), **values)


@dataclass
class AoTrace:
    delays: List[float] = field(default_factory=list)
    fp_iterations: List[int] = field(default_factory=list)
    sca_iterations: List[int] = field(default_factory=list)
    beam_changes: List[float] = field(default_factory=list)

    @property
    def outer_iterations(self) -> int:
        return max(len(self.delays) - 1, 0)

    def is_monotone(self, slack: float = 1e-12) -> bool:
        delays = np.asarray(self.delays)
        return bool(np.all(np.diff(delays) <= slack * np.maximum(delays[:-1], 1.0)))


@dataclass
class SolveReport:
    regime: Regime
    delay: float
    tdma_delay: float
    noma_delay: Optional[float]
    fixed_beam_delay: Optional[float]
    converged: bool
    warm_start: str
    trace: AoTrace
    regime_report: RegimeReport
    residuals: Dict = field(default_factory=dict)
    slot_sum_rates: List[float] = field(default_factory=list)
    average_sum_rate: float = 0.0

    def to_dict(self) -> Dict:
        return {
            'regime': self.regime.value,
            'delay_s': self.delay,
            'tdma_delay_s': self.tdma_delay,
            'noma_delay_s': self.noma_delay,
            'fixed_beam_delay_s': self.fixed_beam_delay,
            'converged': self.converged,
            'warm_start': self.warm_start,
            'outer_iterations': self.trace.outer_iterations,
            'delay_trace': self.trace.delays,
            'residuals': self.residuals,
            'slot_sum_rates_bps': self.slot_sum_rates,
            'average_sum_rate_bps': self.average_sum_rate,
            'thresholds': self.regime_report.to_dict(),
        }


def tdma_warm_schedule(tdma_solution: TdmaSolution, order: Sequence[int]) -> Schedule:
    """TDMA solution laid out as a hybrid schedule: position k owns slot k only."""
    k_count = len(order)
    tau = tdma_solution.tau[list(order)]
    powers = np.zeros((k_count, k_count))
    powers[np.arange(k_count), np.arange(k_count)] = tdma_solution.power[list(order)]
    return Schedule.from_powers(order, tau, powers)


def _alternating_optimization(config, channels, seed, beams, settings):
    """
    One resource-allocation step at the seed beams, then FP/SCA alternation
    until the delay stops dropping by more than the tolerance.
    Returns:
        tuple: (schedule, beams, AoTrace, converged, delay at the seed beams).
    """
    schedule, sca_iterations = sca_resource_allocation(config, channels, beams, seed, settings.sca)
    fixed_beam_delay = schedule.sum_delay
    trace = AoTrace(delays=[schedule.sum_delay], fp_iterations=[0],
                    sca_iterations=[sca_iterations], beam_changes=[0.0])
    converged = False
    for iteration in range(1, settings.max_outer_iterations + 1):
        new_beams, fp_iterations, _ = fp_beam_refinement(
            schedule, beams, channels, config, static=settings.static_beams,
            tol=settings.fp_tolerance, max_inner=settings.max_fp_iterations)
        try:
            candidate, sca_iterations = sca_resource_allocation(config, channels, new_beams, schedule, settings.sca)
        except InfeasibleInstanceError:
            logger.warning("AO iteration %d rejected: resource allocation infeasible at the new beams", iteration)
            converged = True
            break
        previous = schedule.sum_delay
        if candidate.sum_delay > previous * (1.0 + DELAY_RTOL):
            logger.warning("AO iteration %d rejected: delay %.9g s exceeds %.9g s",
                           iteration, candidate.sum_delay, previous)
            converged = True
            break
        trace.beam_changes.append(float(np.linalg.norm(new_beams - beams)))
        schedule, beams = candidate, new_beams
        trace.delays.append(schedule.sum_delay)
        trace.fp_iterations.append(fp_iterations)
        trace.sca_iterations.append(sca_iterations)
        logger.debug("AO iteration %d: delay %.9g s", iteration, schedule.sum_delay)
        if (previous - schedule.sum_delay) / previous < settings.ao_tolerance:
            converged = True
            break
    return schedule, beams, trace, converged, fixed_beam_delay


def solve_fixed_beams(config: SystemConfig, channels: ChannelRealization, order: Sequence[int], beams: np.ndarray,
                      settings: Optional[HmaSettings] = None) -> Schedule:
    """
    Resource allocation for a given order and beam plan, started from TDMA.
    Args:
        config (SystemConfig): Instance.
        channels (ChannelRealization): Fading draw.
        order (tuple): Decoding order.
        beams (np.ndarray): Beam of each slot, shape (K, N+1).
        settings (HmaSettings | None): Tolerances.
    Returns:
        Schedule: Optimized schedule.
    """
    settings = settings or HmaSettings()
    beams = np.asarray(beams, dtype=complex)
    per_device = np.empty_like(beams)
    per_device[list(order)] = beams
    warm = tdma_warm_schedule(tdma_schedule_for_beams(config, channels, per_device), order)
    schedule, _ = sca_resource_allocation(config, channels, beams, warm, settings.sca)
    return schedule


def _shortcut_noma(config, noma):
    schedule = noma.to_schedule()
    if config.regime is BudgetRegime.POWER:
        powers = np.array(schedule.powers)
        powers[-1, 0] = config.budgets[noma.order[-1]]
        schedule = Schedule.from_powers(noma.order, schedule.tau, powers)
    return schedule, noma.beam_plan()


def _solve_for_order(config, channels, tdma, order, settings):
    try:
        noma = solve_noma(config, channels, order, max_iterations=settings.noma_iterations,
                          tolerance=settings.ao_tolerance)
    except InfeasibleInstanceError as exc:
        logger.info("NOMA infeasible for order %s: %s", order, exc)
        noma = None

    if noma is not None and settings.use_shortcuts:
        regime_report = classify_regime(config, channels, noma.beam, tdma, order)
    else:
        regime_report = RegimeReport(regime=Regime.HYBRID, order=order)
    regime = regime_report.regime
    base = dict(tdma_delay=tdma.sum_delay, noma_delay=None if noma is None else noma.delay,
                regime=regime, regime_report=regime_report)

    if regime is Regime.PURE_NOMA:
        schedule, beams = _shortcut_noma(config, noma)
        trace = AoTrace(delays=[schedule.sum_delay], fp_iterations=[0],
                        sca_iterations=[0], beam_changes=[0.0])
        return schedule, beams, dict(base, fixed_beam_delay=None, converged=True,
                                     warm_start='noma_shortcut', trace=trace)

    if regime is Regime.PURE_TDMA and not settings.static_beams:
        schedule = tdma_warm_schedule(tdma, order)
        trace = AoTrace(delays=[schedule.sum_delay], fp_iterations=[0], sca_iterations=[0], beam_changes=[0.0])
        return schedule, tdma.beams[list(order)], dict(base, fixed_beam_delay=schedule.sum_delay,
                                                       converged=True, warm_start='tdma_shortcut', trace=trace)

    seeds = []
    if settings.static_beams:
        static_beam = noma.beam if noma is not None else tdma.beams[order[0]]
        static_plan = np.tile(static_beam, (len(order), 1))
        try:
            static_tdma = tdma_schedule_for_beams(config, channels, static_plan)
            seeds.append(('tdma', tdma_warm_schedule(static_tdma, order), static_plan))
        except InfeasibleInstanceError:
            logger.info("Static-beam TDMA seed infeasible for order %s", order)
        if noma is not None and (settings.dual_warm_start or not seeds):
            seeds.append(('noma', noma.to_schedule(), noma.beam_plan()))
    else:
        seeds.append(('tdma', tdma_warm_schedule(tdma, order), tdma.beams[list(order)]))
        if noma is not None and settings.dual_warm_start:
            seeds.append(('noma', noma.to_schedule(), noma.beam_plan()))

    best = None
    fixed_beam_delay = None
    for name, seed, beams in seeds:
        try:
            result = _alternating_optimization(config, channels, seed, beams, settings)
        except InfeasibleInstanceError as exc:
            logger.warning("AO from the %s seed failed for order %s: %s", name, order, exc)
            continue
        schedule, beams, trace, converged, seed_delay = result
        if name == 'tdma':
            fixed_beam_delay = seed_delay
        if best is None or schedule.sum_delay < best[0].sum_delay:
            best = (schedule, beams, dict(base, converged=converged, warm_start=name, trace=trace))
    if best is None:
        raise InfeasibleInstanceError(f"No warm start produced a feasible schedule for order {order}.")
    schedule, beams, info = best
    info['fixed_beam_delay'] = fixed_beam_delay
    return schedule, beams, info


def solve_hma(config: SystemConfig, channels: ChannelRealization,
              settings: Optional[HmaSettings] = None) -> Tuple[Schedule, np.ndarray, SolveReport]:
    """
    Minimum sum-delay hybrid schedule and beams for one instance.
    Args:
        config (SystemConfig): Instance.
        channels (ChannelRealization): Fading draw.
        settings (HmaSettings | None): Policy and tolerances.
    Returns:
        tuple: (Schedule, beam plan of shape (K, N+1), SolveReport).
    """
    settings = settings or HmaSettings()
    tdma = solve_tdma(config, channels)
    orders = candidate_orders(tdma_snr(tdma), settings.order_policy, settings.order_seed)

    best = None
    for order in orders:
        schedule, beams, info = _solve_for_order(config, channels, tdma, order, settings)
        if best is None or schedule.sum_delay < best[0].sum_delay:
            best = (schedule, beams, info)
    schedule, beams, info = best

    gains = slot_gains(channels, schedule.order, beams, config.noise_power_w)
    rates = slot_sum_rates(schedule.powers, gains) * config.bandwidth_hz
    weights = schedule.tau / schedule.sum_delay
    report = SolveReport(delay=schedule.sum_delay, residuals=verify_schedule(config, channels, beams, schedule),
                         slot_sum_rates=rates.tolist(), average_sum_rate=float(weights @ rates), **info)
    logger.info("HMA solved: regime %s, order %s, delay %.6g s (TDMA %.6g s)",
                report.regime.value, schedule.order, report.delay, report.tdma_delay)
    return schedule, beams, report
