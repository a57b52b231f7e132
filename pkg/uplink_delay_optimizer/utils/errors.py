"""
errors.py
Exception types raised by the solvers, the config parser and the CLI.
"""


class OptimizerError(Exception):
    """Base class for every error raised by this package."""


class InvalidConfigError(OptimizerError, ValueError):
    """A config or scenario file violates a field invariant."""


class DomainError(OptimizerError, ValueError):
    """A numerical kernel was called outside its domain."""


class InfeasibleInstanceError(OptimizerError):
    """
    The instance cannot meet its throughput targets.
    Args:
        message (str): Human readable reason.
        device (int | None): Original index of the device that makes the instance infeasible.
        certificate (float | None): Phase-I optimum (minimum slack) when raised by the convex solver.
    """

    def __init__(self, message, device=None, certificate=None):
        super().__init__(message)
        self.device = device
        self.certificate = certificate


class SolverNonConvergenceError(OptimizerError):
    """A search could not return any usable point."""
