"""
numerics.py
Scalar numerical kernels shared by the solvers: the lower branch of the
Lambert W function, bisection and golden-section search.
"""

import math

from uplink_delay_optimizer.utils.errors import DomainError

INV_E = math.exp(-1.0)
_BRANCH_POINT_SLACK = 1e-15


def lambert_w_m1(x):
    """
    Lower branch W_{-1} of the Lambert W function.
    Args:
        x (float): Argument in [-1/e, 0).
    Returns:
        float: w <= -1 with w * exp(w) = x.
    """
    x = float(x)
    if math.isnan(x) or x >= 0.0 or x < -INV_E - _BRANCH_POINT_SLACK:
        raise DomainError(f"lambert_w_m1 is defined on [-1/e, 0), got {x!r}")
    if x <= -INV_E:
        return -1.0

    if x < -0.25:
        # series around the branch point
        p = -math.sqrt(2.0 * (math.e * x + 1.0))
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    else:
        l1 = math.log(-x)
        l2 = math.log(-l1)
        w = l1 - l2 + l2 / l1

    for _ in range(60):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        dw = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w -= dw
        if abs(dw) <= 1e-14 * (1.0 + abs(w)):
            break

    w = min(w, -1.0)
    if not math.isfinite(w) or abs(w * math.exp(w) - x) > 1e-12 * abs(x):
        w = _lambert_w_m1_bisect(x)
    return w


def _lambert_w_m1_bisect(x):
    lo = -2.0
    while lo * math.exp(lo) <= x:
        lo *= 2.0
    return bisect(lambda w: w * math.exp(w) - x, lo, -1.0, tol=1e-15 * abs(lo))


def bisect(f, lo, hi, tol=1e-12, max_iter=500):
    """
    Root of a monotone function on a bracketing interval.
    Args:
        f (callable): Real function with f(lo) * f(hi) <= 0.
        lo (float): Left end of the bracket.
        hi (float): Right end of the bracket.
        tol (float): Stop once the bracket is narrower than this.
        max_iter (int): Hard cap on halvings.
    Returns:
        float: Midpoint of the final bracket.
    """
    if not lo <= hi:
        raise DomainError(f"bisect needs lo <= hi, got [{lo}, {hi}]")
    f_lo = f(lo)
    f_hi = f(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if f_lo * f_hi > 0.0:
        raise DomainError(f"bisect: no sign change on [{lo}, {hi}] (f={f_lo:.3e}, {f_hi:.3e})")

    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        f_mid = f(mid)
        if f_mid == 0.0:
            return mid
        if (f_mid < 0.0) == (f_lo < 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bisect_boundary(feasible, lo, hi, tol, max_iter=500):
    """
    Smallest point of [lo, hi] where a monotone predicate switches to True.
    Args:
        feasible (callable): Predicate, False at lo and True at hi.
        lo (float): Known infeasible point.
        hi (float): Known feasible point.
        tol (float): Absolute width at which to stop.
    Returns:
        float: A feasible point within tol of the boundary.
    """
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def golden_section_minimize(f, lo, hi, tol=1e-12, max_iter=300):
    """
    Minimizer of a unimodal function on [lo, hi].
    Args:
        f (callable): Objective.
        lo (float): Left end.
        hi (float): Right end.
        tol (float): Bracket width at which to stop.
    Returns:
        float: Approximate minimizer.
    """
    ratio = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - ratio * (b - a)
    d = a + ratio * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - ratio * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + ratio * (b - a)
            fd = f(d)
    return 0.5 * (a + b)
