"""Certified feature-importance sorting via parallel bisection refinement.

Each feature's extremal component value over its perturbation interval
(minimum when the instance is predicted positive, maximum otherwise) is
bracketed by verifier queries until the per-feature deviation intervals
admit a total, non-overlapping order.  Features whose interval is separated
from all others stop refining; intervals narrower than the tie threshold
that still overlap are declared tied and ordered by index.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .model import (
    NamModel,
    PerturbationSpec,
    TASK_BINARY,
    UnivariateNet,
    feature_intervals,
    forward_component,
    mirror_net,
)
from .verifier import Budget, BudgetExceededError, VerifyOutcome, ibp_bounds, verify_ge


class SortContradictionError(RuntimeError):
    """Refinement limit hit with neither separation nor tie convergence."""


@dataclass(frozen=True)
class SortConfig:
    processors: int = 1
    max_refinements: int = 200
    tie_threshold: float = 1e-9
    counterexample_tightening: bool = True
    probe_near_upper: bool = True
    probe_offset: float = 1e-7
    budget: Budget = Budget()

    def __post_init__(self):
        if self.processors < 1:
            raise ValueError("processors must be >= 1")


@dataclass(frozen=True)
class ImportanceInterval:
    """Certified state for one feature.

    ``lower``/``upper`` bound the extremal component value (min for positive
    predictions, max for negative).  The true deviation toward the decision
    boundary lies in [dev_low, dev_high].
    """

    feature: int
    lower: float
    upper: float
    dev_low: float  # Delta-u: deviation if the extremum sits at the tight end
    dev_high: float  # Delta-l: deviation if the extremum sits at the loose end
    init_width: float  # width of the initial incomplete bounds
    refinements: int
    verify_calls: int
    converged: bool
    tied: bool

    @property
    def width(self) -> float:
        return self.dev_high - self.dev_low


@dataclass(frozen=True)
class ImportanceOrder:
    """Total order over features, most important first."""

    order: tuple[int, ...]
    intervals: tuple[ImportanceInterval, ...]  # indexed by feature id
    xi: tuple[float, ...]  # adjacent-separation statistic per feature id
    tie_groups: tuple[tuple[int, ...], ...]
    extremum_kind: str  # "min" | "max"
    verify_calls: int
    rounds: int
    trace: tuple[tuple[float, int], ...]  # (elapsed_ms, features converged)

    def removal_order(self) -> tuple[int, ...]:
        """Least-important-first traversal for greedy removal."""
        return tuple(reversed(self.order))

    def prefix(self, size: int) -> tuple[int, ...]:
        return self.order[:size]


def apply_counterexample_tightening(upper: float, witness_value: float, threshold: float) -> float:
    """New upper bound on the extremum after a Violated verdict at
    ``threshold`` with a witness evaluating to ``witness_value``; never
    increases the bound."""
    return min(upper, witness_value, threshold)


def probe_near_upper_bound(
    net: UnivariateNet,
    interval: tuple[float, float],
    lower: float,
    upper: float,
    probe_offset: float,
    budget: Budget = Budget(),
    tighten: bool = True,
) -> tuple[float, float, VerifyOutcome]:
    """Directly test whether values below ``upper - probe_offset`` are
    reachable; on Holds the bracket collapses to width ``probe_offset``."""
    m = upper - probe_offset
    out = verify_ge(net, interval, m, budget)
    if out.holds:
        return max(lower, m), upper, out
    value = out.witness[1]
    new_upper = apply_counterexample_tightening(upper, value, m) if tighten else min(upper, m)
    return lower, new_upper, out


@dataclass
class _FeatureState:
    index: int
    net: UnivariateNet  # working net: component itself, or mirrored for max queries
    interval: tuple[float, float]
    gx: float  # working net's value at the unperturbed input
    lower: float
    upper: float
    init_width: float
    refinements: int = 0
    calls: int = 0
    stopped: bool = False
    tied: bool = False

    @property
    def dev_low(self) -> float:
        return self.gx - self.upper

    @property
    def dev_high(self) -> float:
        return self.gx - self.lower

    @property
    def width(self) -> float:
        return self.upper - self.lower


def _init_state(i: int, net: UnivariateNet, interval: tuple[float, float], x_i: float) -> _FeatureState:
    bounds = ibp_bounds(net, interval)
    gx = forward_component(net, x_i)
    # The extremum toward the boundary can never exceed the unperturbed value.
    upper = min(bounds.upper, gx)
    return _FeatureState(
        index=i,
        net=net,
        interval=interval,
        gx=gx,
        lower=bounds.lower,
        upper=upper,
        init_width=bounds.upper - bounds.lower,
    )


def _refine_once(state: _FeatureState, config: SortConfig) -> _FeatureState:
    mid = state.lower + (state.upper - state.lower) / 2
    try:
        out = verify_ge(state.net, state.interval, mid, config.budget)
    except BudgetExceededError as exc:
        raise BudgetExceededError(f"feature {state.index}: {exc}") from exc
    state.calls += 1
    if out.holds:
        state.lower = mid
        if (
            config.probe_near_upper
            and state.refinements >= 3
            and state.width > 4 * config.probe_offset
        ):
            try:
                lo, up, _ = probe_near_upper_bound(
                    state.net,
                    state.interval,
                    state.lower,
                    state.upper,
                    config.probe_offset,
                    config.budget,
                    tighten=config.counterexample_tightening,
                )
            except BudgetExceededError as exc:
                raise BudgetExceededError(f"feature {state.index}: {exc}") from exc
            state.calls += 1
            state.lower, state.upper = lo, up
    else:
        value = out.witness[1]
        if config.counterexample_tightening:
            state.upper = apply_counterexample_tightening(state.upper, value, mid)
        else:
            state.upper = min(state.upper, mid)
    state.refinements += 1
    return state


def _separated(a: _FeatureState, b: _FeatureState) -> bool:
    return a.dev_low >= b.dev_high or b.dev_low >= a.dev_high


def _overlap(a: _FeatureState, b: _FeatureState) -> bool:
    return not _separated(a, b)


def _update_convergence(states: list[_FeatureState], tie_threshold: float) -> None:
    for s in states:
        if s.stopped:
            continue
        blocked = False
        for o in states:
            if o.index == s.index or _separated(s, o):
                continue
            if s.width < tie_threshold and o.width < tie_threshold:
                continue  # mutually narrow overlap: tie, no further refinement useful
            blocked = True
            break
        if not blocked:
            s.stopped = True


def _mark_ties(states: list[_FeatureState]) -> None:
    # At termination every overlapping pair is mutually narrow, so overlap
    # alone defines the tie relation.
    for s in states:
        s.tied = any(o.index != s.index and _overlap(s, o) for o in states)


def _tie_groups(states: list[_FeatureState]) -> list[list[int]]:
    tied = [s for s in states if s.tied]
    groups: list[list[int]] = []
    assigned: set[int] = set()
    for s in sorted(tied, key=lambda t: t.index):
        if s.index in assigned:
            continue
        group = [s.index]
        assigned.add(s.index)
        frontier = [s]
        while frontier:
            cur = frontier.pop()
            for o in tied:
                if o.index not in assigned and _overlap(cur, o):
                    group.append(o.index)
                    assigned.add(o.index)
                    frontier.append(o)
        groups.append(sorted(group))
    return groups


def sort_features(
    model: NamModel,
    x,
    spec: PerturbationSpec,
    config: SortConfig = SortConfig(),
) -> ImportanceOrder:
    """Refine per-feature deviation intervals until a total order exists.

    The returned order is most-important-first and is identical for every
    processor count; parallelism only affects wall-clock time.
    """
    if model.task != TASK_BINARY:
        raise ValueError("sort_features expects a binary(-reduced) model")
    values = tuple(x.values) if hasattr(x, "values") else tuple(x)
    margin = model.margin(values)
    positive = margin >= 0.0
    extremum_kind = "min" if positive else "max"
    intervals = feature_intervals(model, values, spec)

    t0 = time.perf_counter()
    states = []
    for i in range(model.n_features):
        net = model.components[0][i] if positive else mirror_net(model.components[0][i])
        states.append(_init_state(i, net, intervals[i], values[i]))

    trace: list[tuple[float, int]] = []
    rounds = 0
    pool = ThreadPoolExecutor(max_workers=config.processors) if config.processors > 1 else None
    try:
        while True:
            _update_convergence(states, config.tie_threshold)
            trace.append(((time.perf_counter() - t0) * 1000.0, sum(s.stopped for s in states)))
            active = [s for s in states if not s.stopped]
            if not active:
                break
            if any(s.refinements >= config.max_refinements for s in active):
                worst = max(active, key=lambda s: s.refinements)
                raise SortContradictionError(
                    f"feature {worst.index} hit {worst.refinements} refinements with "
                    f"width {worst.width:.3e} neither separated nor below the tie threshold"
                )
            rounds += 1
            if pool is not None:
                list(pool.map(lambda s: _refine_once(s, config), active))
            else:
                for s in active:
                    _refine_once(s, config)
    finally:
        if pool is not None:
            pool.shutdown(wait=True)

    _mark_ties(states)
    groups = _tie_groups(states)
    order = _build_order(states, groups)
    by_feature = {s.index: s for s in states}
    xi = _xi_stats(order, by_feature)

    result_intervals = []
    for s in states:
        if positive:
            lower, upper = s.lower, s.upper
        else:
            lower, upper = -s.upper, -s.lower
        result_intervals.append(
            ImportanceInterval(
                feature=s.index,
                lower=lower,
                upper=upper,
                dev_low=s.dev_low,
                dev_high=s.dev_high,
                init_width=s.init_width,
                refinements=s.refinements,
                verify_calls=s.calls,
                converged=s.stopped,
                tied=s.tied,
            )
        )
    return ImportanceOrder(
        order=order,
        intervals=tuple(result_intervals),
        xi=xi,
        tie_groups=tuple(tuple(g) for g in groups),
        extremum_kind=extremum_kind,
        verify_calls=sum(s.calls for s in states),
        rounds=rounds,
        trace=tuple(trace),
    )


def _build_order(states: list[_FeatureState], groups: list[list[int]]) -> tuple[int, ...]:
    in_group = {i: gi for gi, g in enumerate(groups) for i in g}
    by_feature = {s.index: s for s in states}
    units: list[tuple[tuple[float, float, int], list[int]]] = []
    seen_groups: set[int] = set()
    for s in sorted(states, key=lambda t: t.index):
        gi = in_group.get(s.index)
        if gi is None:
            units.append(((-s.dev_low, -s.dev_high, s.index), [s.index]))
        elif gi not in seen_groups:
            seen_groups.add(gi)
            members = groups[gi]
            key = (
                -max(by_feature[i].dev_low for i in members),
                -max(by_feature[i].dev_high for i in members),
                min(members),
            )
            units.append((key, members))
    units.sort(key=lambda u: u[0])
    order: list[int] = []
    for _, members in units:
        order.extend(members)
    return tuple(order)


def _xi_stats(order: tuple[int, ...], by_feature: dict[int, "_FeatureState"]) -> tuple[float, ...]:
    n = len(order)
    xi = [float("inf")] * n
    for pos in range(n):
        gaps = []
        if pos > 0:
            above = by_feature[order[pos - 1]]
            here = by_feature[order[pos]]
            gaps.append(abs(above.dev_low - here.dev_high))
        if pos < n - 1:
            here = by_feature[order[pos]]
            below = by_feature[order[pos + 1]]
            gaps.append(abs(here.dev_low - below.dev_high))
        xi[order[pos]] = min(gaps) if gaps else float("inf")
    return tuple(xi)
