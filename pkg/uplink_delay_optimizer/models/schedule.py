"""
schedule.py
Hybrid-access schedule: decoding order, slot durations and per-slot energies.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from uplink_delay_optimizer.models.system_model import TAU_FLOOR, completion_times
from uplink_delay_optimizer.utils.errors import DomainError


@dataclass(frozen=True)
class Schedule:
    """
    Order position k may transmit in slots 0..k.
    Args:
        order (tuple): Device label at each decoding position.
        tau (np.ndarray): Slot durations in s.
        z (np.ndarray): Energy z[k, i] = tau_i * p[k, i] in J, lower triangular.
    """
    order: tuple
    tau: np.ndarray
    z: np.ndarray
    power_matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float).copy()
        z = np.tril(np.asarray(self.z, dtype=float))
        object.__setattr__(self, "order", tuple(int(k) for k in self.order))
        k_count = len(self.order)
        if tau.shape != (k_count,) or z.shape != (k_count, k_count):
            raise DomainError(f"Schedule for {k_count} devices needs {k_count} slots and a square z")
        if np.any(tau < 0.0) or np.any(z < 0.0):
            raise DomainError("Slot durations and energies must be nonnegative")
        tau.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "z", z)
        if self.power_matrix is not None:
            power = np.tril(np.asarray(self.power_matrix, dtype=float)).copy()
            power.setflags(write=False)
            object.__setattr__(self, "power_matrix", power)

    @classmethod
    def from_powers(cls, order, tau, powers):
        tau = np.asarray(tau, dtype=float)
        powers = np.tril(np.asarray(powers, dtype=float))
        return cls(order=order, tau=tau, z=powers * tau[None, :], power_matrix=powers)

    @property
    def device_count(self):
        return len(self.order)

    @property
    def powers(self):
        """p[k, i] = z[k, i] / tau_i, zero in empty slots."""
        if self.power_matrix is not None:
            return self.power_matrix
        safe = np.where(self.tau > 0.0, self.tau, 1.0)
        return np.where(self.tau[None, :] > 0.0, self.z / safe[None, :], 0.0)

    @property
    def sum_delay(self):
        return float(np.sum(self.tau))

    @property
    def device_energy(self):
        """Total energy spent by each order position."""
        return self.z.sum(axis=1)

    def completion_times(self, floor=TAU_FLOOR):
        """Completion time per order position."""
        return completion_times(self.tau, floor)

    def device_completion_times(self, floor=TAU_FLOOR):
        """Completion time per original device label."""
        times = np.empty(self.device_count)
        times[list(self.order)] = self.completion_times(floor)
        return times

    def to_frame(self):
        """
        Tabular view with one row per (device, slot) pair.
        Returns:
            pd.DataFrame: Columns position, device, slot, tau_s, power_w, energy_j.
        """
        powers = self.powers
        records = []
        for k, device in enumerate(self.order):
            for i in range(k + 1):
                records.append({
                    'position': k,
                    'device': device,
                    'slot': i,
                    'tau_s': self.tau[i],
                    'power_w': powers[k, i],
                    'energy_j': self.z[k, i],
                })
        return pd.DataFrame.from_records(records)
