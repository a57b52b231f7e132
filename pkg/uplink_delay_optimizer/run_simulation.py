#!/usr/bin/env python3
"""
run_simulation.py
Command-line entry point: Monte Carlo scenario sweeps, single-instance
solves and protocol-selection threshold reports.

    python run_simulation.py run --scenario data/scenarios/two_device_energy.json --out results/energy
    python run_simulation.py solve --config data/system_config.json
    python run_simulation.py thresholds --config data/system_config.json
"""

import argparse
import json
import logging
import os
import sys

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import pandas as pd

from uplink_delay_optimizer.agents.experiment_runner import (
    ORDER_CODES,
    Baseline,
    emit_outputs,
    load_scenario,
    run_scenario,
)
from uplink_delay_optimizer.agents.hma_planner import HmaSettings, solve_hma
from uplink_delay_optimizer.agents.noma import solve_noma
from uplink_delay_optimizer.agents.ordering import ORDER_POLICIES, propose_order, tdma_snr
from uplink_delay_optimizer.agents.tdma import solve_tdma
from uplink_delay_optimizer.agents.thresholds import classify_regime
from uplink_delay_optimizer.models.system_model import generate_channels
from uplink_delay_optimizer.utils.config_parser import load_system_config
from uplink_delay_optimizer.utils.errors import (
    InfeasibleInstanceError,
    InvalidConfigError,
    OptimizerError,
    SolverNonConvergenceError,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_NOT_CONVERGED = 3

logger = logging.getLogger(__name__)


class _UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def build_parser():
    parser = _ArgumentParser(prog="run_simulation.py",
                             description="Sum-delay minimization for IRS-aided uplink hybrid multiple access.")
    parser.add_argument("--verbose", action="store_true", help="log solver iterations")
    commands = parser.add_subparsers(dest="command", parser_class=_ArgumentParser)
    commands.required = True

    run = commands.add_parser("run", help="run a Monte Carlo scenario sweep")
    run.add_argument("--scenario", required=True, help="scenario JSON file")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--draws", type=int, help="fading draws per sweep value")
    run.add_argument("--seed", type=int, help="seed of the first draw")
    run.add_argument("--baselines", help="comma-separated subset, e.g. hma-dirs-pro,tdma-dirs-pro")
    run.add_argument("--static-irs", action="store_true", help="one IRS beam for all slots (hma baselines)")
    run.add_argument("--no-irs", action="store_true", help="drop the reflected path")
    run.add_argument("--order", choices=ORDER_POLICIES, help="decoding-order policy for every baseline")
    run.add_argument("--jobs", type=int, default=-1, help="parallel workers, -1 for all cores")
    run.add_argument("--no-dat", action="store_true", help="skip the gnuplot .dat files")

    for name, text in (("solve", "solve one instance and print the schedule"),
                       ("thresholds", "print the pure-protocol thresholds of one instance")):
        sub = commands.add_parser(name, help=text)
        sub.add_argument("--config", required=True, help="system config JSON file")
        sub.add_argument("--seed", type=int, help="fading seed, overrides rng_seed")
        sub.add_argument("--no-irs", action="store_true", help="drop the reflected path")
        if name == "solve":
            sub.add_argument("--static-irs", action="store_true", help="one IRS beam for all slots")
            sub.add_argument("--order", choices=ORDER_POLICIES, default="pro", help="decoding-order policy")
    return parser


def _order_code(policy):
    return {v: k for k, v in ORDER_CODES.items()}[policy]


def _instance(args):
    config = load_system_config(args.config)
    if args.seed is not None:
        config = config.replace(rng_seed=args.seed)
    channels = generate_channels(config)
    if args.no_irs:
        channels = channels.without_irs()
    return config, channels


def command_run(args):
    scenario = load_scenario(args.scenario)
    changes = {}
    if args.draws is not None:
        changes['draws'] = args.draws
    if args.seed is not None:
        changes['seed_base'] = args.seed
    baselines = scenario.baselines
    if args.baselines:
        wanted = [Baseline.parse(b).id for b in args.baselines.split(",") if b.strip()]
        unknown = set(wanted) - {b.id for b in baselines}
        if unknown:
            raise InvalidConfigError(f"Baselines not in scenario {scenario.name}: {', '.join(sorted(unknown))}")
        baselines = [b for b in baselines if b.id in wanted]
    irs = "sirs" if args.static_irs else "noirs" if args.no_irs else None
    order = _order_code(args.order) if args.order else None
    if irs or order:
        baselines = list({b.id: b for b in (b.with_overrides(irs, order) for b in baselines)}.values())
    changes['baselines'] = baselines
    scenario = scenario.replace(**changes)

    print(f"📡 Scenario {scenario.name}: {scenario.comment}")
    print(f"📊 {len(scenario.sweep_values)} sweep values x {scenario.draws} draws x {len(scenario.baselines)} baselines")
    rows, summary, timing = run_scenario(scenario, n_jobs=args.jobs)
    paths = emit_outputs(rows, args.out, scenario=scenario, summary=summary, timing=timing, dat=not args.no_dat)

    with pd.option_context('display.width', 120, 'display.max_rows', None):
        print(summary.to_string(index=False))
    failed = sum(r['status'] != 'ok' for r in rows)
    if failed:
        print(f"⚠️ {failed} of {len(rows)} rows did not solve; see the status column of rows.csv")
    print(f"💾 Wrote {len(paths)} files to {args.out}")
    return EXIT_OK


def command_solve(args):
    config, channels = _instance(args)
    settings = HmaSettings(order_policy=args.order, order_seed=config.rng_seed, static_beams=args.static_irs)
    schedule, _, report = solve_hma(config, channels, settings)
    print(schedule.to_frame().to_string(index=False))
    print(json.dumps(report.to_dict(), indent=2))
    if not report.converged:
        print(f"❌ Alternating optimization stopped after {report.trace.outer_iterations} iterations without converging")
        return EXIT_NOT_CONVERGED
    print(f"✅ Sum delay {report.delay:.6g} s ({report.regime.value})")
    return EXIT_OK


def command_thresholds(args):
    config, channels = _instance(args)
    tdma = solve_tdma(config, channels)
    order = propose_order(tdma_snr(tdma))
    noma = solve_noma(config, channels, order)
    report = classify_regime(config, channels, noma.beam, tdma, order)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


COMMANDS = {"run": command_run, "solve": command_solve, "thresholds": command_thresholds}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s - %(levelname)s - %(message)s')
    try:
        return COMMANDS[args.command](args)
    except InfeasibleInstanceError as exc:
        print(f"❌ Infeasible instance: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolverNonConvergenceError as exc:
        print(f"❌ Solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except InvalidConfigError as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OptimizerError as exc:
        logger.error("Run failed: %s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
