"""
experiment_runner.py
Monte Carlo scenario runner: sweeps one parameter, draws fading per seed,
runs every baseline on the same draw and aggregates the delays.
"""

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from uplink_delay_optimizer.agents.hma_planner import HmaSettings, solve_hma
from uplink_delay_optimizer.agents.noma import solve_noma
from uplink_delay_optimizer.agents.ordering import candidate_orders, tdma_snr
from uplink_delay_optimizer.agents.tdma import solve_tdma
from uplink_delay_optimizer.models.system_model import BudgetRegime, ChannelRealization, SystemConfig, generate_channels
from uplink_delay_optimizer.utils.config_parser import load_json, parse_system_config
from uplink_delay_optimizer.utils.errors import InfeasibleInstanceError, InvalidConfigError, OptimizerError
from uplink_delay_optimizer.utils.result_store import rows_to_frame, summarize, write_outputs

logger = logging.getLogger(__name__)

PROTOCOLS = ("hma", "tdma", "noma")
IRS_MODES = ("dirs", "sirs", "noirs")
ORDER_CODES = {"pro": "pro", "des": "des", "rand": "rand", "opt": "exhaustive"}
SWEEP_VARIABLES = ("target_kbits", "energy_j", "alpha_cascaded", "irs_elements", "device_count")
DEFAULT_DRAWS = 50


@dataclass(frozen=True)
class Baseline:
    """Protocol, IRS mode and ordering policy, written as e.g. hma-dirs-pro."""
    protocol: str
    irs: str
    order: str

    @classmethod
    def parse(cls, text: str) -> "Baseline":
        parts = str(text).strip().lower().split("-")
        if len(parts) != 3:
            raise InvalidConfigError(f"Baseline {text!r} must look like protocol-irs-order, e.g. hma-dirs-pro")
        protocol, irs, order = parts
        if protocol not in PROTOCOLS or irs not in IRS_MODES or order not in ORDER_CODES:
            raise InvalidConfigError(
                f"Baseline {text!r}: protocol in {PROTOCOLS}, IRS mode in {IRS_MODES}, order in {tuple(ORDER_CODES)}")
        if irs == "sirs" and protocol != "hma":
            raise InvalidConfigError(f"Baseline {text!r}: static IRS beams only apply to hma")
        return cls(protocol, irs, order)

    @property
    def id(self) -> str:
        return f"{self.protocol}-{self.irs}-{self.order}"

    def with_overrides(self, irs: Optional[str] = None, order: Optional[str] = None) -> "Baseline":
        irs = irs or self.irs
        if irs == "sirs" and self.protocol != "hma":
            irs = self.irs
        return Baseline(self.protocol, irs, order or self.order)


@dataclass
class Scenario:
    """
    Args:
        name (str): Scenario name, used in every row.
        config (SystemConfig): Template instance.
        sweep_variable (str): One of SWEEP_VARIABLES.
        sweep_values (list): Sorted, nonempty grid.
        baselines (list of Baseline): What to run on every draw.
        draws (int): Monte Carlo draws per sweep value.
        seed_base (int): Draw d uses seed seed_base + d.
        sweep_device (int): Device the per-device sweeps change.
        layout (dict): Per-rank formulas of the device-count sweep.
        solver (dict): HmaSettings overrides.
        comment (str): Free text describing the setup.
    """
    name: str
    config: SystemConfig
    sweep_variable: str
    sweep_values: List[float]
    baselines: List[Baseline]
    draws: int = DEFAULT_DRAWS
    seed_base: int = 0
    sweep_device: int = 0
    layout: Dict = field(default_factory=dict)
    solver: Dict = field(default_factory=dict)
    comment: str = ""

    def __post_init__(self):
        if self.sweep_variable not in SWEEP_VARIABLES:
            raise InvalidConfigError(f"Unknown sweep variable {self.sweep_variable!r}; use one of {SWEEP_VARIABLES}")
        values = [float(v) for v in self.sweep_values]
        if not values:
            raise InvalidConfigError(f"Scenario {self.name!r} has an empty sweep grid")
        if values != sorted(values):
            raise InvalidConfigError(f"Scenario {self.name!r}: sweep values must be sorted ascending")
        self.sweep_values = values
        if not self.baselines:
            raise InvalidConfigError(f"Scenario {self.name!r} has no baselines to run")
        if int(self.draws) < 1:
            raise InvalidConfigError(f"Scenario {self.name!r}: draws must be at least 1")
        self.draws = int(self.draws)
        if self.sweep_variable in ("target_kbits", "energy_j") and \
                not 0 <= self.sweep_device < self.config.device_count:
            raise InvalidConfigError(f"Sweep device {self.sweep_device} does not exist")
        if self.sweep_variable == "energy_j" and self.config.regime is not BudgetRegime.ENERGY:
            raise InvalidConfigError("An energy sweep needs an energy budget")
        HmaSettings.from_dict(self.solver)

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)


def parse_scenario(data: Dict) -> Scenario:
    """
    Args:
        data (dict): Scenario file content with system, scenario, sweep and baselines sections.
    Returns:
        Scenario: Validated scenario.
    """
    if 'system' not in data or 'sweep' not in data:
        raise InvalidConfigError("A scenario needs 'system' and 'sweep' sections")
    info = data.get('scenario', {})
    sweep = data['sweep']
    return Scenario(
        name=str(info.get('name', 'scenario')),
        comment=str(info.get('comment', '')),
        config=parse_system_config(data['system']),
        sweep_variable=str(sweep.get('variable', '')),
        sweep_values=list(sweep.get('values', [])),
        sweep_device=int(sweep.get('device', 0)),
        layout=dict(sweep.get('layout', {})),
        baselines=[Baseline.parse(b) for b in data.get('baselines', ['hma-dirs-pro'])],
        draws=int(data.get('draws', DEFAULT_DRAWS)),
        seed_base=int(data.get('seed_base', 0)),
        solver=dict(data.get('solver', {})),
    )


def load_scenario(path: str) -> Scenario:
    return parse_scenario(load_json(path))


def apply_sweep(scenario: Scenario, value: float) -> SystemConfig:
    """
    Template config with the sweep variable set to one grid value.
    Returns:
        SystemConfig: Config for this grid point.
    """
    config = scenario.config
    variable = scenario.sweep_variable
    device = scenario.sweep_device
    if variable == "target_kbits":
        targets = list(config.targets_bits)
        targets[device] = value * 1e3
        return config.replace(targets_bits=tuple(targets))
    if variable == "energy_j":
        budgets = list(config.budgets)
        budgets[device] = value
        return config.replace(budgets=tuple(budgets))
    if variable == "alpha_cascaded":
        return config.replace(alpha_cascaded=value)
    if variable == "irs_elements":
        return config.replace(irs_elements=int(round(value)))

    count = int(round(value))
    layout = scenario.layout
    spacing = float(layout.get('spacing_m', 5.0))
    # device k (1-based) sits at rank K - k + 1 on the x axis
    ranks = [count - k + 1 for k in range(1, count + 1)]
    positions = tuple((spacing * r, 0.0, 0.0) for r in ranks)
    targets = tuple(float(layout.get('target_kbits_step', 10.0)) * r * 1e3 for r in ranks)
    if config.regime is BudgetRegime.ENERGY:
        budgets = tuple(float(layout.get('energy_j_step', 1.0)) * k for k in range(1, count + 1))
    else:
        budgets = (config.budgets[0],) * count
    return config.replace(device_positions=positions, targets_bits=targets, budgets=budgets)


def run_baseline(config: SystemConfig, channels: ChannelRealization, baseline: Baseline, settings: HmaSettings,
                 seed: int) -> Dict:
    """
    Run one baseline on one draw.
    Returns:
        dict: delay_s, completion_times_s (per device label), regime, iterations, converged,
        monotone (delay trace never increased).
    """
    if baseline.irs == "noirs":
        channels = channels.without_irs()
    policy = ORDER_CODES[baseline.order]

    if baseline.protocol == "hma":
        settings = dataclasses.replace(settings, static_beams=baseline.irs == "sirs",
                                       order_policy=policy, order_seed=seed)
        schedule, _, report = solve_hma(config, channels, settings)
        return {
            'delay_s': schedule.sum_delay,
            'completion_times_s': tuple(schedule.device_completion_times()),
            'regime': report.regime.value,
            'iterations': report.trace.outer_iterations,
            'converged': report.converged,
            'monotone': report.trace.is_monotone(),
        }

    tdma = solve_tdma(config, channels)
    orders = candidate_orders(tdma_snr(tdma), policy, seed)
    if baseline.protocol == "tdma":
        order = list(orders[0])
        times = np.empty(config.device_count)
        times[order] = np.cumsum(tdma.tau[order])
        return {'delay_s': tdma.sum_delay, 'completion_times_s': tuple(times),
                'regime': 'pure_tdma', 'iterations': 0, 'converged': True, 'monotone': True}

    best = None
    for order in orders:
        try:
            solution = solve_noma(config, channels, order, max_iterations=settings.noma_iterations,
                                  tolerance=settings.ao_tolerance)
        except InfeasibleInstanceError:
            if len(orders) == 1:
                raise
            continue
        if best is None or solution.delay < best.delay:
            best = solution
    if best is None:
        raise InfeasibleInstanceError("NOMA is infeasible for every decoding order.")
    return {'delay_s': best.delay, 'completion_times_s': (best.delay,) * config.device_count,
            'regime': 'pure_noma', 'iterations': len(best.trace) - 1, 'converged': True,
            'monotone': bool(np.all(np.diff(best.trace) <= 0.0))}


def _run_draw(scenario, value_index, draw):
    """All baselines on one (sweep value, draw) pair; returns (row, wall time) pairs."""
    value = scenario.sweep_values[value_index]
    seed = scenario.seed_base + draw
    settings = HmaSettings.from_dict(scenario.solver)
    base = {'scenario': scenario.name, 'sweep_variable': scenario.sweep_variable,
            'sweep_value': value, 'draw': draw, 'seed': seed}
    results = []
    try:
        config = apply_sweep(scenario, value).replace(rng_seed=seed)
        channels = generate_channels(config)
    except OptimizerError as exc:
        for baseline in scenario.baselines:
            results.append((dict(base, baseline=baseline.id, **_failed_row('error', exc)), 0.0))
        return results

    for baseline in scenario.baselines:
        started = time.perf_counter()
        try:
            outcome = run_baseline(config, channels, baseline, settings, seed)
            row = dict(base, baseline=baseline.id, status='ok', message='', **outcome)
        except InfeasibleInstanceError as exc:
            row = dict(base, baseline=baseline.id, **_failed_row('infeasible', exc))
        except OptimizerError as exc:
            row = dict(base, baseline=baseline.id, **_failed_row('error', exc))
        results.append((row, time.perf_counter() - started))
    return results


def _failed_row(status, exc):
    return {'status': status, 'delay_s': np.nan, 'completion_times_s': (), 'regime': '',
            'iterations': 0, 'converged': False, 'monotone': False, 'message': str(exc)}


def run_scenario(scenario: Scenario, n_jobs: int = -1) -> Tuple[List[Dict], pd.DataFrame, pd.DataFrame]:
    """
    Run every (sweep value, draw, baseline) combination.
    Args:
        scenario (Scenario): What to run.
        n_jobs (int): joblib worker count, -1 for all cores.
    Returns:
        tuple: (rows as list of dict sorted by grid position, draw and baseline;
        summary DataFrame; timing DataFrame).
    """
    tasks = [(v, d) for v in range(len(scenario.sweep_values)) for d in range(scenario.draws)]
    logger.info("Scenario %s: %d sweep values x %d draws x %d baselines",
                scenario.name, len(scenario.sweep_values), scenario.draws, len(scenario.baselines))
    batches = Parallel(n_jobs=n_jobs)(delayed(_run_draw)(scenario, v, d) for v, d in tasks)

    rank = {b.id: i for i, b in enumerate(scenario.baselines)}
    pairs = [pair for batch in batches for pair in batch]
    pairs.sort(key=lambda p: (p[0]['sweep_value'], p[0]['draw'], rank[p[0]['baseline']]))
    rows = [row for row, _ in pairs]
    timing = pd.DataFrame.from_records(
        [{'scenario': r['scenario'], 'sweep_value': r['sweep_value'], 'baseline': r['baseline'],
          'draw': r['draw'], 'wall_time_s': t} for r, t in pairs])

    summary = summarize(rows_to_frame(rows), scenario.sweep_values, [b.id for b in scenario.baselines])
    failed = sum(r['status'] != 'ok' for r in rows)
    if failed:
        logger.warning("Scenario %s: %d of %d rows did not solve", scenario.name, failed, len(rows))
    return rows, summary, timing


def emit_outputs(rows: List[Dict], out_dir: str, scenario: Optional[Scenario] = None,
                 summary: Optional[pd.DataFrame] = None, timing: Optional[pd.DataFrame] = None,
                 dat: bool = True) -> List[str]:
    """
    Write the raw rows, the summary and the per-baseline .dat files.
    Args:
        rows (list of dict): Rows from run_scenario.
        out_dir (str): Output directory, created if missing.
        scenario (Scenario | None): Supplies grid and baseline order for the summary.
        summary (pd.DataFrame | None): Precomputed summary.
        timing (pd.DataFrame | None): Wall times, written to timing.csv.
        dat (bool): Also write gnuplot .dat files.
    Returns:
        list of str: Written paths.
    """
    if not rows:
        raise InvalidConfigError("No result rows to write; check the baseline selection.")
    frame = rows_to_frame(rows)
    if summary is None:
        values = scenario.sweep_values if scenario else sorted(frame['sweep_value'].unique())
        baselines = [b.id for b in scenario.baselines] if scenario else list(dict.fromkeys(frame['baseline']))
        summary = summarize(frame, values, baselines)
    return write_outputs(out_dir, frame, summary, timing, dat=dat)
