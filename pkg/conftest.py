"""
conftest.py
Shared instances for the solver tests.
"""

import os
import sys

import pytest

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from uplink_delay_optimizer.models.system_model import BudgetRegime, SystemConfig, dbm_to_watt, generate_channels

BS = (0.0, 0.0, 0.0)
IRS = (30.0, 0.0, 5.0)


def make_config(**overrides):
    """Two devices at 20 m and 40 m, 5 dBm, B = 500 kHz, sigma^2 = -80 dBm, N = 8."""
    values = dict(
        bandwidth_hz=500e3,
        noise_power_w=float(dbm_to_watt(-80.0)),
        irs_elements=8,
        bs_position=BS,
        irs_position=IRS,
        device_positions=((20.0, 0.0, 0.0), (40.0, 0.0, 0.0)),
        alpha_direct=3.6,
        alpha_cascaded=2.2,
        regime=BudgetRegime.POWER,
        budgets=float(dbm_to_watt(5.0)),
        targets_bits=(200e3, 300e3),
        rng_seed=11,
    )
    values.update(overrides)
    return SystemConfig(**values)


@pytest.fixture
def power_config():
    return make_config()


@pytest.fixture
def power_channels(power_config):
    return generate_channels(power_config)


@pytest.fixture
def energy_config():
    return make_config(regime=BudgetRegime.ENERGY, budgets=(0.5, 0.1), targets_bits=(2000e3, 200e3))


@pytest.fixture
def energy_channels(energy_config):
    return generate_channels(energy_config)


@pytest.fixture
def three_device_config():
    return make_config(device_positions=((40.0, 0.0, 0.0), (30.0, 0.0, 0.0), (20.0, 0.0, 0.0)),
                       targets_bits=10e3, rng_seed=5)
