"""
system_model.py
Geometry, fading channels, composite channels, SNR gains and SIC rates for
the IRS-aided uplink every solver consumes.
"""

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Tuple

import numpy as np

from uplink_delay_optimizer.utils.errors import DomainError, InvalidConfigError

DEFAULT_REF_GAIN_DB = -30.0
# slots shorter than this many floors count as empty
OCCUPIED_SLOT_FACTOR = 10.0
TAU_FLOOR = 1e-9

# A beam is a complex vector of length N+1, unit modulus, last entry 1.
BeamVector = np.ndarray
# One beam per slot, shape (K, N+1).
BeamPlan = np.ndarray


class BudgetRegime(str, Enum):
    POWER = "power"
    ENERGY = "energy"


def dbm_to_watt(value_dbm):
    return 10.0 ** ((np.asarray(value_dbm, dtype=float) - 30.0) / 10.0)


def db_to_linear(value_db):
    return 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)


@dataclass(frozen=True)
class SystemConfig:
    """
    Static description of one uplink instance, in SI units.
    Args:
        bandwidth_hz (float): System bandwidth B.
        noise_power_w (float): Receiver noise power.
        irs_elements (int): Number of reflecting elements N.
        bs_position, irs_position: 3-D coordinates in metres.
        device_positions: One 3-D coordinate per device.
        alpha_direct (float): Path-loss exponent of the device-BS links.
        alpha_cascaded (float): Path-loss exponent of the device-IRS and IRS-BS links.
        regime (BudgetRegime): Which budget applies to every device.
        budgets: Max power in W (power regime) or energy in J (energy regime).
        targets_bits: Throughput target per device.
        ref_gain_db (float): Path loss at 1 m.
        rng_seed (int): Seed for the fading draw.
    """
    bandwidth_hz: float
    noise_power_w: float
    irs_elements: int
    bs_position: Tuple[float, float, float]
    irs_position: Tuple[float, float, float]
    device_positions: Tuple[Tuple[float, float, float], ...]
    alpha_direct: float
    alpha_cascaded: float
    regime: BudgetRegime
    budgets: Tuple[float, ...]
    targets_bits: Tuple[float, ...]
    ref_gain_db: float = DEFAULT_REF_GAIN_DB
    rng_seed: int = 0

    def __post_init__(self):
        set_ = lambda name, value: object.__setattr__(self, name, value)
        set_("bs_position", _as_point(self.bs_position, "bs_position"))
        set_("irs_position", _as_point(self.irs_position, "irs_position"))
        set_("device_positions", tuple(
            _as_point(p, f"device_positions[{k}]") for k, p in enumerate(self.device_positions)))
        set_("regime", BudgetRegime(self.regime))
        k_count = len(self.device_positions)
        if k_count < 1:
            raise InvalidConfigError("At least one device is required.")
        set_("budgets", _broadcast(self.budgets, k_count, "budgets"))
        set_("targets_bits", _broadcast(self.targets_bits, k_count, "targets_bits"))

        if int(self.irs_elements) != self.irs_elements or self.irs_elements < 0:
            raise InvalidConfigError(f"irs_elements must be a nonnegative integer, got {self.irs_elements!r}")
        set_("irs_elements", int(self.irs_elements))
        if not self.bandwidth_hz > 0:
            raise InvalidConfigError(f"bandwidth_hz must be positive, got {self.bandwidth_hz!r}")
        if not self.noise_power_w > 0:
            raise InvalidConfigError(f"noise power must be positive, got {self.noise_power_w!r}")
        if any(not b > 0 for b in self.budgets):
            raise InvalidConfigError(f"Every {self.regime.value} budget must be positive, got {self.budgets}")
        if any(not t > 0 for t in self.targets_bits):
            raise InvalidConfigError(f"Every throughput target must be positive, got {self.targets_bits}")
        for name in ("alpha_direct", "alpha_cascaded", "ref_gain_db"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidConfigError(f"{name} must be finite")

    @property
    def device_count(self):
        return len(self.device_positions)

    @property
    def budget_array(self):
        return np.asarray(self.budgets, dtype=float)

    @property
    def normalized_targets(self):
        """Targets L_k / B in bits/Hz."""
        return np.asarray(self.targets_bits, dtype=float) / self.bandwidth_hz

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _as_point(value, name):
    point = tuple(float(c) for c in value)
    if len(point) != 3 or not all(math.isfinite(c) for c in point):
        raise InvalidConfigError(f"{name} must be three finite coordinates, got {value!r}")
    return point


def _broadcast(value, count, name):
    values = np.atleast_1d(np.asarray(value, dtype=float))
    if values.size == 1:
        values = np.repeat(values, count)
    if values.size != count:
        raise InvalidConfigError(f"{name} has {values.size} entries for {count} devices")
    return tuple(float(v) for v in values)


@dataclass(frozen=True)
class ChannelRealization:
    """
    One fading draw. Entry n of b[k] is conj(g_n) * h_r[k, n] and the last
    entry is h_d[k], so that b_k^H v is the effective scalar channel.
    """
    h_d: np.ndarray
    h_r: np.ndarray
    g: np.ndarray
    b: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        h_d = np.asarray(self.h_d, dtype=complex).reshape(-1)
        h_r = np.asarray(self.h_r, dtype=complex).reshape(h_d.size, -1)
        g = np.asarray(self.g, dtype=complex).reshape(-1)
        if h_r.shape[1] != g.size:
            raise DomainError(f"h_r has {h_r.shape[1]} elements per device but g has {g.size}")
        b = np.concatenate([np.conj(g)[None, :] * h_r, h_d[:, None]], axis=1)
        if not np.all(np.isfinite(b)):
            raise DomainError("Channel realization contains non-finite entries")
        for name, value in (("h_d", h_d), ("h_r", h_r), ("g", g), ("b", b)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def device_count(self):
        return self.h_d.size

    @property
    def irs_elements(self):
        return self.g.size

    def without_irs(self):
        """Same draw with the reflected path removed."""
        k_count = self.device_count
        return ChannelRealization(h_d=self.h_d.copy(), h_r=np.zeros((k_count, 0), dtype=complex),
                                  g=np.zeros(0, dtype=complex))


def path_loss(distance, alpha, ref_gain_db=DEFAULT_REF_GAIN_DB):
    """Linear path loss ref_gain * d^(-alpha)."""
    return float(db_to_linear(ref_gain_db)) * distance ** (-alpha)


def _distance(a, b, label):
    d = float(np.linalg.norm(np.subtract(a, b)))
    if d <= 0.0:
        raise InvalidConfigError(f"Coincident positions for the {label} link; distance must be positive.")
    return d


def _complex_gaussian(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def generate_channels(config, seed=None):
    """
    Draw Rayleigh-faded channels with distance path loss.
    Args:
        config (SystemConfig): Geometry and propagation parameters.
        seed (int | None): Overrides config.rng_seed.
    Returns:
        ChannelRealization: The draw, deterministic in the seed.
    """
    rng = np.random.default_rng(config.rng_seed if seed is None else seed)
    n = config.irs_elements
    k_count = config.device_count

    d_irs_bs = _distance(config.irs_position, config.bs_position, "IRS-BS")
    g = math.sqrt(path_loss(d_irs_bs, config.alpha_cascaded, config.ref_gain_db)) * _complex_gaussian(rng, n)

    h_r = np.empty((k_count, n), dtype=complex)
    h_d = np.empty(k_count, dtype=complex)
    for k, pos in enumerate(config.device_positions):
        d_dev_irs = _distance(pos, config.irs_position, f"device {k} - IRS")
        d_dev_bs = _distance(pos, config.bs_position, f"device {k} - BS")
        h_r[k] = math.sqrt(path_loss(d_dev_irs, config.alpha_cascaded, config.ref_gain_db)) * _complex_gaussian(rng, n)
        h_d[k] = math.sqrt(path_loss(d_dev_bs, config.alpha_direct, config.ref_gain_db)) * _complex_gaussian(rng, 1)[0]
    return ChannelRealization(h_d=h_d, h_r=h_r, g=g)


def snr_gain(b_k, v, noise_power):
    """
    Normalized channel gain |b_k^H v|^2 / sigma^2 in 1/W.
    """
    b_k = np.asarray(b_k)
    v = np.asarray(v)
    if b_k.shape != v.shape:
        raise DomainError(f"Channel length {b_k.shape} does not match beam length {v.shape}")
    return float(abs(np.vdot(b_k, v)) ** 2 / noise_power)


def aligned_beam(b_k):
    """
    Beam that co-phases every reflected path with the direct path.
    Args:
        b_k (np.ndarray): Composite channel of length N+1.
    Returns:
        np.ndarray: Unit-modulus beam with last entry 1.
    """
    b_k = np.asarray(b_k, dtype=complex)
    reflected = b_k[:-1]
    phase = np.where(np.abs(reflected) > 0.0, np.angle(reflected) - np.angle(b_k[-1]), 0.0)
    return np.append(np.exp(1j * phase), 1.0 + 0.0j)


def validate_beam(v, tol=1e-12):
    v = np.asarray(v, dtype=complex)
    if v.ndim != 1 or v.size < 1:
        raise DomainError("A beam must be a nonempty vector")
    if v[-1] != 1.0:
        raise DomainError(f"The last beam entry must be exactly 1, got {v[-1]}")
    if np.any(np.abs(np.abs(v[:-1]) - 1.0) > tol):
        raise DomainError("Beam entries must have unit modulus")
    return v


def ordered_composites(channels, order):
    return channels.b[np.asarray(order, dtype=int)]


def slot_gains(channels, order, beams, noise_power):
    """
    Gains gamma[k, i] of the device at order position k under the slot-i beam.
    Args:
        channels (ChannelRealization): Fading draw.
        order (sequence of int): Device index at each decoding position.
        beams (np.ndarray): Beam plan, shape (K, N+1).
        noise_power (float): sigma^2 in W.
    Returns:
        np.ndarray: Shape (K, K) array of gains in 1/W.
    """
    beams = np.atleast_2d(np.asarray(beams, dtype=complex))
    composites = ordered_composites(channels, order)
    if beams.shape[1] != composites.shape[1]:
        raise DomainError(f"Beam length {beams.shape[1]} does not match channel length {composites.shape[1]}")
    inner = np.conj(composites) @ beams.T
    return np.abs(inner) ** 2 / noise_power


def sic_cumulative_power(powers, gains):
    """S[k, i] = sum_{j=i..k} p[j, i] gamma[j, i], zero above the diagonal."""
    received = np.tril(np.asarray(powers, dtype=float) * np.asarray(gains, dtype=float))
    return np.cumsum(received, axis=0)


def slot_rates(powers, gains):
    """
    Per-slot rates in bits/s/Hz of each order position, via the SIC sum-rate identity.
    Args:
        powers (np.ndarray): p[k, i], position k transmitting in slot i.
        gains (np.ndarray): gamma[k, i] from slot_gains.
    Returns:
        np.ndarray: r[k, i], zero for i > k.
    """
    cumulative = sic_cumulative_power(powers, gains)
    previous = np.vstack([np.zeros((1, cumulative.shape[1])), cumulative[:-1]])
    rates = np.log2(1.0 + cumulative) - np.log2(1.0 + previous)
    return np.tril(np.maximum(rates, 0.0))


def device_throughputs(tau, powers, gains):
    """Normalized throughput sum_i tau_i r[k, i] of each order position, in bits/Hz."""
    return slot_rates(powers, gains) @ np.asarray(tau, dtype=float)


def slot_sum_rates(powers, gains):
    """Sum rate log2(1 + sum_{k>=i} p gamma) of every slot in bits/s/Hz."""
    return np.log2(1.0 + sic_cumulative_power(powers, gains)[-1])


def achievable_rate(k, i, order, powers, v_i, channels, config):
    """
    Rate of the device at position k during slot i, evaluated from its SINR.
    Args:
        k (int): Order position of the decoded device (0-based).
        i (int): Slot index (0-based), i <= k.
        order (sequence of int): Device index at each position.
        powers (np.ndarray): p[position, slot] in W.
        v_i (np.ndarray): Slot-i beam.
        channels (ChannelRealization): Fading draw.
        config (SystemConfig): Supplies B and sigma^2.
    Returns:
        float: Rate in bits/s.
    """
    if i > k:
        raise DomainError(f"Position {k} cannot transmit in slot {i}; it is only active in slots 0..{k}")
    powers = np.asarray(powers, dtype=float)
    gain = lambda j: snr_gain(channels.b[order[j]], v_i, config.noise_power_w)
    interference = sum(powers[j, i] * gain(j) for j in range(i, k))
    return config.bandwidth_hz * math.log2(1.0 + powers[k, i] * gain(k) / (1.0 + interference))


def completion_times(tau, floor=TAU_FLOOR):
    """Completion time sum_{i<=k} tau_i of each order position; floor-level slots count as zero."""
    tau = np.asarray(tau, dtype=float)
    return np.cumsum(np.where(tau > OCCUPIED_SLOT_FACTOR * floor, tau, 0.0))
