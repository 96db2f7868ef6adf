"""Complete verifier for univariate ReLU nets over an interval.

Decides queries of the form "for all z in I: f(z) >= m" by interval
branch-and-bound: interval bound propagation gives sound initial bounds,
subintervals are pruned once their IBP lower bound clears the threshold,
and midpoint evaluations produce concrete counterexamples.  Budget
exhaustion is an error distinct from both verdicts; callers must never
treat it as Holds.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .model import UnivariateNet, forward_component

DEFAULT_MAX_SUBDIVISIONS = 100_000
DEFAULT_TOLERANCE = 1e-9


class BudgetExceededError(RuntimeError):
    """Branch-and-bound ran out of subdivisions with no verdict."""


@dataclass(frozen=True)
class Budget:
    max_subdivisions: int = DEFAULT_MAX_SUBDIVISIONS
    tolerance: float = DEFAULT_TOLERANCE


@dataclass(frozen=True)
class IbpBounds:
    lower: float
    upper: float


@dataclass(frozen=True)
class VerifyOutcome:
    verdict: str  # "holds" | "violated"
    witness: tuple[float, float] | None = None  # (z, f(z)) with f(z) < m

    @property
    def holds(self) -> bool:
        return self.verdict == "holds"


def ibp_bounds(net: UnivariateNet, interval: tuple[float, float]) -> IbpBounds:
    """Layer-by-layer interval arithmetic; sound, not necessarily tight."""
    lo = np.array([float(interval[0])])
    hi = np.array([float(interval[1])])
    if lo[0] > hi[0]:
        raise ValueError(f"empty interval {interval}")
    last = net.depth - 1
    for k, (w, b) in enumerate(net.layers):
        w_pos = np.maximum(w, 0.0)
        w_neg = np.minimum(w, 0.0)
        new_lo = w_pos @ lo + w_neg @ hi + b
        new_hi = w_pos @ hi + w_neg @ lo + b
        if k != last:
            np.maximum(new_lo, 0.0, out=new_lo)
            np.maximum(new_hi, 0.0, out=new_hi)
        lo, hi = new_lo, new_hi
    return IbpBounds(lower=float(lo[0]), upper=float(hi[0]))


def verify_ge(
    net: UnivariateNet,
    interval: tuple[float, float],
    m: float,
    budget: Budget = Budget(),
) -> VerifyOutcome:
    """Decide "for all z in [a, b]: f(z) >= m", complete up to the budget's
    tolerance: Holds implies min f >= m - tolerance; Violated carries a
    concrete witness with f(z') < m.
    """
    a, b = float(interval[0]), float(interval[1])
    if a > b:
        raise ValueError(f"empty interval [{a}, {b}]")
    tol = budget.tolerance
    if a == b:
        v = forward_component(net, a)
        return VerifyOutcome("violated", (a, v)) if v < m else VerifyOutcome("holds")

    root = ibp_bounds(net, (a, b))
    heap = [(root.lower, 0, a, b)]
    seq = 1
    splits = 0
    while heap:
        lo_bound, _, u, v = heapq.heappop(heap)
        if lo_bound >= m - tol:
            continue  # this subinterval (and nothing below it) can violate
        mid = u + (v - u) / 2
        val = forward_component(net, mid)
        if val < m:
            return VerifyOutcome("violated", (mid, val))
        splits += 1
        if splits > budget.max_subdivisions:
            raise BudgetExceededError(
                f"verify_ge exceeded {budget.max_subdivisions} subdivisions on [{a}, {b}] at m={m}"
            )
        for lo_z, hi_z in ((u, mid), (mid, v)):
            child = ibp_bounds(net, (lo_z, hi_z))
            if child.lower < m - tol:
                heapq.heappush(heap, (child.lower, seq, lo_z, hi_z))
                seq += 1
    return VerifyOutcome("holds")


@dataclass(frozen=True)
class MinResult:
    lower_bound: float  # certified: exact min >= lower_bound
    best_point: float  # evaluated point achieving best_value
    best_value: float  # forward_component(net, best_point), >= exact min
    evaluations: int


def minimize(
    net: UnivariateNet,
    interval: tuple[float, float],
    budget: Budget = Budget(),
) -> MinResult:
    """Branch-and-bound to convergence: returns a certified lower bound on the
    exact minimum within the budget tolerance, plus the best evaluated point."""
    a, b = float(interval[0]), float(interval[1])
    if a > b:
        raise ValueError(f"empty interval [{a}, {b}]")
    tol = budget.tolerance

    best_point = a
    best_value = forward_component(net, a)
    evals = 1
    for z in (b,):
        v = forward_component(net, z)
        evals += 1
        if v < best_value:
            best_point, best_value = z, v
    if a == b:
        return MinResult(best_value, best_point, best_value, evals)

    root = ibp_bounds(net, (a, b))
    heap = [(root.lower, 0, a, b)]
    seq = 1
    splits = 0
    while heap:
        if best_value - heap[0][0] <= tol:
            break
        _, _, u, v = heapq.heappop(heap)
        mid = u + (v - u) / 2
        val = forward_component(net, mid)
        evals += 1
        if val < best_value:
            best_point, best_value = mid, val
        splits += 1
        if splits > budget.max_subdivisions:
            raise BudgetExceededError(
                f"minimize exceeded {budget.max_subdivisions} subdivisions on [{a}, {b}]"
            )
        for lo_z, hi_z in ((u, mid), (mid, v)):
            child = ibp_bounds(net, (lo_z, hi_z))
            if child.lower < best_value - tol:
                heapq.heappush(heap, (child.lower, seq, lo_z, hi_z))
                seq += 1
    # Every region was either pruned at >= (best at prune time) - tol, which
    # only rises as best falls, or sits on the heap at >= best - tol now; the
    # certified floor is therefore best_value - tol.
    return MinResult(best_value - tol, best_point, best_value, evals)


def min_lower_bound(
    net: UnivariateNet,
    interval: tuple[float, float],
    budget: Budget = Budget(),
) -> float:
    return minimize(net, interval, budget).lower_bound
