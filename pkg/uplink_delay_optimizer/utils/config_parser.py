"""
config_parser.py
Reads JSON system configs and converts user units (dBm, dB, Kbits) to SI.
"""

import json

from uplink_delay_optimizer.models.system_model import (
    DEFAULT_REF_GAIN_DB,
    BudgetRegime,
    SystemConfig,
    dbm_to_watt,
)
from uplink_delay_optimizer.utils.errors import InvalidConfigError

REQUIRED_KEYS = (
    'bandwidth_hz', 'noise_power_dbm', 'irs_elements', 'bs_position', 'irs_position',
    'device_positions', 'alpha_direct', 'alpha_cascaded', 'budget', 'targets_kbits',
)


def load_json(path):
    """
    Read a JSON config file.
    Args:
        path (str or Path): File to read.
    Returns:
        dict: Parsed content.
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except OSError as exc:
        raise InvalidConfigError(f"Cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfigError(f"Config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidConfigError(f"Config file {path} must hold a JSON object")
    return data


def parse_budget(budget):
    """
    Args:
        budget (dict): {"regime": "power", "max_power_dbm": ...} or {"regime": "energy", "energy_j": ...}.
    Returns:
        tuple: (BudgetRegime, budgets in W or J as a scalar or list).
    """
    if not isinstance(budget, dict) or 'regime' not in budget:
        raise InvalidConfigError("budget must be an object with a 'regime' key")
    try:
        regime = BudgetRegime(str(budget['regime']).strip().lower())
    except ValueError as exc:
        raise InvalidConfigError(f"Unknown budget regime {budget['regime']!r}; use 'power' or 'energy'") from exc

    if regime is BudgetRegime.POWER:
        if 'max_power_dbm' not in budget or 'energy_j' in budget:
            raise InvalidConfigError("A power budget needs max_power_dbm and no energy_j")
        return regime, dbm_to_watt(budget['max_power_dbm']).tolist()
    if 'energy_j' not in budget or 'max_power_dbm' in budget:
        raise InvalidConfigError("An energy budget needs energy_j and no max_power_dbm")
    return regime, budget['energy_j']


def _kbits_to_bits(value):
    if isinstance(value, (list, tuple)):
        return [float(v) * 1e3 for v in value]
    return float(value) * 1e3


def parse_system_config(data):
    """
    Build a SystemConfig from a config dict in user units.
    Args:
        data (dict): Keys as in data/system_config.json, optionally nested under "system".
    Returns:
        SystemConfig: Validated config in SI units.
    """
    section = data.get('system', data)
    missing = [key for key in REQUIRED_KEYS if key not in section]
    if missing:
        raise InvalidConfigError(f"Config is missing: {', '.join(missing)}")
    regime, budgets = parse_budget(section['budget'])
    try:
        return SystemConfig(
            bandwidth_hz=float(section['bandwidth_hz']),
            noise_power_w=float(dbm_to_watt(section['noise_power_dbm'])),
            irs_elements=section['irs_elements'],
            bs_position=section['bs_position'],
            irs_position=section['irs_position'],
            device_positions=section['device_positions'],
            alpha_direct=float(section['alpha_direct']),
            alpha_cascaded=float(section['alpha_cascaded']),
            regime=regime,
            budgets=budgets,
            targets_bits=_kbits_to_bits(section['targets_kbits']),
            ref_gain_db=float(section.get('ref_gain_db', DEFAULT_REF_GAIN_DB)),
            rng_seed=int(section.get('rng_seed', 0)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidConfigError):
            raise
        raise InvalidConfigError(f"Invalid config value: {exc}") from exc


def load_system_config(path):
    return parse_system_config(load_json(path))
