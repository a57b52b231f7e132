"""
convex_solver.py
Log-barrier interior point solver for the slot-duration / energy programs
built by successive convex approximation.

Variables are the slot durations tau_i and the normalized energies
y_{k,i} = z_{k,i} / budget_k of every order position k in slots i <= k.
Each throughput constraint is a sum of perspective-log terms
tau * log2(1 + s / tau) (s linear in the variables) minus a linear part.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List

import numpy as np

from uplink_delay_optimizer.models.system_model import BudgetRegime
from uplink_delay_optimizer.utils.errors import DomainError, InfeasibleInstanceError

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)


def perspective_log(tau, s):
    """tau * log2(1 + s / tau), with value 0 at tau = 0."""
    tau = np.asarray(tau, dtype=float)
    s = np.asarray(s, dtype=float)
    safe_tau = np.where(tau > 0.0, tau, 1.0)
    return np.where(tau > 0.0, safe_tau * np.log2(1.0 + s / safe_tau), 0.0)


def perspective_log_tangent(tau_hat, s_hat, floor):
    """
    Tangent plane of tau * log2(1 + s / tau) at a local point.
    Args:
        tau_hat (float): Local slot duration, raised to the floor.
        s_hat (float): Local received energy, clipped at 0.
        floor (float): Smallest duration used for expansion.
    Returns:
        tuple: (c_tau, c_s) with value c_tau * tau + c_s * s.
    """
    tau_hat = max(float(tau_hat), floor)
    s_hat = max(float(s_hat), 0.0)
    u_hat = tau_hat + s_hat
    c_tau = math.log2(1.0 + s_hat / tau_hat) - s_hat / (LN2 * u_hat)
    c_s = tau_hat / (LN2 * u_hat)
    return c_tau, c_s


@dataclass(frozen=True)
class SolverSettings:
    feasibility_tol: float = 1e-8
    kkt_tol: float = 1e-6
    max_iterations: int = 60
    max_newton_steps: int = 200
    tau_floor: float = 1e-9
    barrier_growth: float = 10.0
    newton_tol: float = 1e-10

    def __post_init__(self):
        for name in ("feasibility_tol", "kkt_tol", "max_iterations", "max_newton_steps",
                     "tau_floor", "newton_tol"):
            if not getattr(self, name) > 0:
                raise DomainError(f"SolverSettings.{name} must be positive")
        if not self.barrier_growth > 1.0:
            raise DomainError("SolverSettings.barrier_growth must exceed 1")


@dataclass
class SolverReport:
    converged: bool
    iterations: int = 0
    newton_steps: int = 0
    objective_trace: List[float] = field(default_factory=list)
    duality_gap: float = math.inf
    feasibility_residual: float = 0.0
    phase1_steps: int = 0


@dataclass
class StructuredConvexProblem:
    """
    One convex restriction of the sum-delay program.
    Args:
        gains (np.ndarray): gamma[k, i] of order position k under the slot-i beam.
        budgets (np.ndarray): Max power (W) or energy (J) per order position.
        targets (np.ndarray): Normalized targets L_k / B per order position.
        regime (BudgetRegime): Budget type.
        local_tau (np.ndarray): Expansion point durations.
        local_z (np.ndarray): Expansion point energies z[k, i].
        pin_last (bool): Fix the last position at full power in every slot.
    """
    gains: np.ndarray
    budgets: np.ndarray
    targets: np.ndarray
    regime: BudgetRegime
    local_tau: np.ndarray
    local_z: np.ndarray
    pin_last: bool = False

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=float)
        self.budgets = np.asarray(self.budgets, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        self.local_tau = np.asarray(self.local_tau, dtype=float)
        self.local_z = np.tril(np.asarray(self.local_z, dtype=float))
        self.regime = BudgetRegime(self.regime)
        k_count = self.targets.size
        if self.gains.shape != (k_count, k_count) or self.local_z.shape != (k_count, k_count):
            raise DomainError("gains and local_z must be K x K")
        if self.budgets.size != k_count or self.local_tau.size != k_count:
            raise DomainError("budgets and local_tau must have K entries")
        for name in ("gains", "budgets", "targets", "local_tau", "local_z"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DomainError(f"{name} contains non-finite values")
        if self.pin_last and self.regime is not BudgetRegime.POWER:
            raise DomainError("Only the power regime pins the last device")

    @property
    def slot_count(self):
        return self.targets.size


class _CompiledProblem:
    """Index maps, term rows and linear constraints of one problem."""

    def __init__(self, problem, floor):
        k_count = problem.slot_count
        self.k_count = k_count
        self.floor = floor
        self.problem = problem
        self.scaled_gains = problem.budgets[:, None] * problem.gains

        self.y_index = -np.ones((k_count, k_count), dtype=int)
        n = k_count
        for k in range(k_count):
            if problem.pin_last and k == k_count - 1:
                continue
            for i in range(k + 1):
                self.y_index[k, i] = n
                n += 1
        self.n = n

        term_rows, term_slots, term_owner = [], [], []
        linear = np.zeros((k_count, n))
        local_x = self.pack(problem.local_tau, problem.local_z)
        for k in range(k_count):
            for i in range(k + 1):
                term_rows.append(self.received_row(k, i))
                term_slots.append(i)
                term_owner.append(k)
                if i < k:
                    interference = self.received_row(k - 1, i)
                    c_tau, c_s = perspective_log_tangent(
                        local_x[i], float(interference @ local_x), floor)
                    linear[k] -= c_s * interference
                    linear[k, i] -= c_tau
        self.rows = np.array(term_rows).reshape(-1, n)
        self.slots = np.array(term_slots, dtype=int)
        self.term_owner = np.array(term_owner, dtype=int)
        self.owner = np.zeros((k_count, len(term_owner)))
        self.owner[term_owner, np.arange(len(term_owner))] = 1.0
        self.linear = linear

        a_rows, b_vals = [], []
        for i in range(k_count):
            row = np.zeros(n)
            row[i] = -1.0
            a_rows.append(row)
            b_vals.append(-floor)
        for k in range(k_count):
            for i in range(k + 1):
                idx = self.y_index[k, i]
                if idx < 0:
                    continue
                row = np.zeros(n)
                row[idx] = -1.0
                a_rows.append(row)
                b_vals.append(0.0)
                if problem.regime is BudgetRegime.POWER:
                    row = np.zeros(n)
                    row[idx] = 1.0
                    row[i] = -1.0
                    a_rows.append(row)
                    b_vals.append(0.0)
            if problem.regime is BudgetRegime.ENERGY:
                row = np.zeros(n)
                row[self.y_index[k, :k + 1]] = 1.0
                a_rows.append(row)
                b_vals.append(1.0)
        self.a = np.array(a_rows)
        self.b = np.array(b_vals)
        self.cost = np.zeros(n)
        self.cost[:k_count] = 1.0

    def received_row(self, k, i):
        """Row r with r @ x = sum_{j=i..k} z_{j,i} gamma_{j,i}."""
        row = np.zeros(self.n)
        for j in range(i, k + 1):
            idx = self.y_index[j, i]
            if idx < 0:
                row[i] += self.scaled_gains[j, i]
            else:
                row[idx] += self.scaled_gains[j, i]
        return row

    def pack(self, tau, z):
        x = np.zeros(self.n)
        x[:self.k_count] = tau
        budgets = self.problem.budgets
        for k in range(self.k_count):
            for i in range(k + 1):
                idx = self.y_index[k, i]
                if idx >= 0:
                    x[idx] = z[k, i] / budgets[k]
        return x

    def unpack(self, x):
        tau = x[:self.k_count].copy()
        z = np.zeros((self.k_count, self.k_count))
        budgets = self.problem.budgets
        for k in range(self.k_count):
            for i in range(k + 1):
                idx = self.y_index[k, i]
                z[k, i] = tau[i] * budgets[k] if idx < 0 else x[idx] * budgets[k]
        return tau, z

    def interior_start(self, x):
        """Push a point strictly inside the linear constraints."""
        x = x.copy()
        tau = np.maximum(x[:self.k_count], 2.0 * self.floor)
        x[:self.k_count] = tau
        for k in range(self.k_count):
            idx = [self.y_index[k, i] for i in range(k + 1) if self.y_index[k, i] >= 0]
            if not idx:
                continue
            slots = np.array([i for i in range(k + 1) if self.y_index[k, i] >= 0])
            if self.problem.regime is BudgetRegime.POWER:
                x[idx] = np.clip(x[idx], 1e-6 * tau[slots], (1.0 - 1e-6) * tau[slots])
            else:
                y = np.maximum(x[idx], 1e-9)
                total = y.sum()
                if total >= 1.0 - 1e-9:
                    y *= (1.0 - 1e-6) / total
                x[idx] = y
        return x

    def qos(self, x, derivatives=False):
        tau = x[self.slots]
        s = self.rows @ x
        u = tau + s
        values = tau * np.log2(u / tau)
        g = self.owner @ values + self.linear @ x - self.problem.targets
        if not derivatives:
            return g
        f_tau = (np.log(u / tau) + tau / u - 1.0) / LN2
        f_s = tau / (u * LN2)
        d = f_s[:, None] * self.rows
        d[np.arange(self.slots.size), self.slots] += f_tau
        grad = self.owner @ d + self.linear
        w = -tau[:, None] * self.rows
        w[np.arange(self.slots.size), self.slots] += s
        curvature = 1.0 / (tau * u * u * LN2)
        return g, grad, w, curvature

    def slack(self, x):
        return self.b - self.a @ x


def _barrier_newton(compiled, x, t, settings, phase_one=False, exit_margin=None):
    """
    Center t * objective + barrier by damped Newton.
    In phase one the last coordinate is the shared QoS shift s, and the
    objective is s itself.
    Returns:
        tuple: (x, newton steps, early exit flag).
    """
    n = compiled.n
    m_lin = compiled.b.size

    def split(point):
        return (point[:n], point[n]) if phase_one else (point, 0.0)

    def value(point):
        core, shift = split(point)
        slack = compiled.slack(core)
        if np.any(slack <= 0.0):
            return math.inf
        g = compiled.qos(core) + shift
        if np.any(g <= 0.0) or not np.all(np.isfinite(g)):
            return math.inf
        objective = shift if phase_one else compiled.cost @ core
        return t * objective - np.sum(np.log(g)) - np.sum(np.log(slack))

    steps = 0
    for steps in range(1, settings.max_newton_steps + 1):
        core, shift = split(x)
        g, grad_g, w, curvature = compiled.qos(core, derivatives=True)
        g = g + shift
        slack = compiled.slack(core)

        if phase_one:
            grad_g = np.hstack([grad_g, np.ones((grad_g.shape[0], 1))])
            w = np.hstack([w, np.zeros((w.shape[0], 1))])
            a = np.hstack([compiled.a, np.zeros((m_lin, 1))])
            cost = np.zeros(n + 1)
            cost[n] = 1.0
        else:
            a = compiled.a
            cost = compiled.cost

        term_scale = curvature / g[compiled.term_owner]
        gradient = t * cost - grad_g.T @ (1.0 / g) + a.T @ (1.0 / slack)
        hessian = (grad_g.T * (1.0 / g ** 2)) @ grad_g
        hessian += (w.T * term_scale) @ w
        hessian += (a.T * (1.0 / slack ** 2)) @ a
        hessian += 1e-14 * np.trace(hessian) / hessian.shape[0] * np.eye(hessian.shape[0])
        try:
            step = -np.linalg.solve(hessian, gradient)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(hessian, gradient, rcond=None)[0]

        decrement = -float(gradient @ step)
        if decrement / 2.0 <= settings.newton_tol:
            break

        f0 = value(x)
        alpha = 1.0
        while alpha > 1e-16:
            candidate = x + alpha * step
            f1 = value(candidate)
            if math.isfinite(f1) and f1 <= f0 - 0.25 * alpha * decrement:
                break
            alpha *= 0.5
        else:
            break
        x = candidate

        if phase_one and exit_margin is not None:
            core, _ = split(x)
            if np.min(compiled.qos(core)) > exit_margin:
                return x, steps, True
    return x, steps, False


def _phase_one(compiled, x0, settings):
    """
    Find a point where every QoS constraint holds strictly.
    Raises InfeasibleInstanceError when the best shift stays nonnegative.
    """
    margin = 1e-9 * max(1.0, float(np.max(compiled.problem.targets)))
    g0 = compiled.qos(x0)
    if np.all(np.isfinite(g0)) and np.min(g0) > margin:
        return x0, 0

    shift = max(0.0, -float(np.min(g0))) + 1.0
    x = np.append(x0, shift)
    m = compiled.b.size + compiled.k_count
    t = 1.0
    total_steps = 0
    for _ in range(settings.max_iterations):
        x, steps, done = _barrier_newton(compiled, x, t, settings, phase_one=True, exit_margin=margin)
        total_steps += steps
        if done:
            return x[:compiled.n], total_steps
        if m / t < settings.feasibility_tol:
            break
        t *= settings.barrier_growth

    best_shift = float(x[compiled.n])
    core = x[:compiled.n]
    if np.min(compiled.qos(core)) > 0.0:
        return core, total_steps
    raise InfeasibleInstanceError(
        f"Convex restriction is infeasible: the smallest throughput deficit is {best_shift:.3e} bits/Hz.",
        certificate=best_shift)


def solve_structured_convex(problem, settings=None, start=None):
    """
    Minimize the sum of slot durations under the restricted QoS constraints.
    Args:
        problem (StructuredConvexProblem): Convex restriction to solve.
        settings (SolverSettings | None): Tolerances and caps.
        start (tuple | None): (tau, z) starting point; defaults to the expansion point.
    Returns:
        tuple: (tau, z, SolverReport).
    """
    settings = settings or SolverSettings()
    compiled = _CompiledProblem(problem, settings.tau_floor)
    tau0, z0 = start if start is not None else (problem.local_tau, problem.local_z)
    x = compiled.interior_start(compiled.pack(np.asarray(tau0, float), np.asarray(z0, float)))

    x, phase1_steps = _phase_one(compiled, x, settings)
    report = SolverReport(converged=False, phase1_steps=phase1_steps)

    m = compiled.b.size + compiled.k_count
    objective = float(compiled.cost @ x)
    t = m / max(objective, settings.tau_floor)
    for iteration in range(1, settings.max_iterations + 1):
        x, steps, _ = _barrier_newton(compiled, x, t, settings)
        report.newton_steps += steps
        report.iterations = iteration
        objective = float(compiled.cost @ x)
        report.objective_trace.append(objective)
        report.duality_gap = m / t
        logger.debug("barrier iteration %d: objective=%.9g gap=%.3e newton=%d",
                     iteration, objective, report.duality_gap, steps)
        if report.duality_gap < settings.kkt_tol * max(objective, settings.tau_floor):
            report.converged = True
            break
        t *= settings.barrier_growth

    g = compiled.qos(x)
    report.feasibility_residual = float(max(0.0, -np.min(g), np.max(-compiled.slack(x))))
    if not report.converged:
        logger.warning("Barrier solver stopped after %d iterations with gap %.3e",
                       report.iterations, report.duality_gap)
    tau, z = compiled.unpack(x)
    return tau, z, report
