"""Benchmark and ablation harness: runs explanation methods over instance
batches, aggregates size/time per method, re-checks sampling results against
the certified oracle, and emits plot-ready trace tables."""

from __future__ import annotations

import math
import os
import statistics
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .explain import (
    MINIMALITY_CARDINAL,
    MINIMALITY_NONE,
    MODE_REG_LOWER,
    MODE_REG_TWO_SIDED,
    MODE_REG_UPPER,
    BruteForceResult,
    ExplanationResult,
    SuffOracle,
    brute_force_min,
    explain_cardinal_linear,
    explain_cardinal_log,
    explain_sampling,
    explain_subset_minimal,
)
from .importance import SortConfig, sort_features
from .model import (
    NamModel,
    PerturbationSpec,
    TASK_MULTICLASS,
    TASK_REGRESSION,
    predict,
    reduce_pairwise,
    reduce_regression,
)
from .synth import xi_pair_model
from .verifier import Budget, BudgetExceededError

METHODS = ("ours", "ours-linear", "lexicographic", "sensitivity", "sampling", "brute-force")


def worker_cap(requested: int) -> int:
    """Apply the NAMC_THREADS environment cap."""
    cap = os.environ.get("NAMC_THREADS")
    if cap:
        try:
            return max(1, min(requested, int(cap)))
        except ValueError:
            pass
    return max(1, requested)


def run_method(
    model: NamModel,
    x,
    spec: PerturbationSpec,
    method: str,
    sort_config: SortConfig = SortConfig(),
    grid: int = 1000,
    backend: str = "exact",
    budget: Budget = Budget(),
) -> ExplanationResult:
    """Dispatch one explanation method; ``ours`` is sorting plus the
    logarithmic prefix search."""
    sort_config = SortConfig(
        processors=worker_cap(sort_config.processors),
        max_refinements=sort_config.max_refinements,
        tie_threshold=sort_config.tie_threshold,
        counterexample_tightening=sort_config.counterexample_tightening,
        probe_near_upper=sort_config.probe_near_upper,
        probe_offset=sort_config.probe_offset,
        budget=budget,
    )
    if method in ("ours", "ours-linear"):
        t0 = time.perf_counter()
        order = sort_features(model, x, spec, sort_config)
        sort_ms = (time.perf_counter() - t0) * 1000.0
        oracle = SuffOracle(model, x, spec, backend=backend, budget=budget)
        if method == "ours":
            res = explain_cardinal_log(model, x, spec, order, oracle=oracle, sort_ms=sort_ms)
        else:
            res = explain_cardinal_linear(model, x, spec, order, oracle=oracle, sort_ms=sort_ms)
        # shift the search timeline so it starts after the sorting phase
        return replace(
            res,
            trace=tuple((sort_ms + t, s) for t, s in res.trace),
            progress=tuple((sort_ms + t, s) for t, s in res.progress),
            verifier_calls=res.verifier_calls + order.verify_calls,
        )
    if method in ("lexicographic", "sensitivity"):
        oracle = SuffOracle(model, x, spec, backend=backend, budget=budget)
        return explain_subset_minimal(model, x, spec, ordering=method, oracle=oracle)
    if method == "sampling":
        return explain_sampling(model, x, spec, grid=grid)
    if method == "brute-force":
        oracle = SuffOracle(model, x, spec, backend=backend, budget=budget)
        t0 = time.perf_counter()
        bf = brute_force_min(model, x, spec, oracle=oracle)
        search_ms = (time.perf_counter() - t0) * 1000.0
        return ExplanationResult(
            subset=tuple(sorted(bf.subset)),
            minimality=MINIMALITY_CARDINAL,
            ordering="exhaustive",
            suff_calls=bf.suff_calls,
            verifier_calls=oracle.verifier_calls,
            sort_ms=0.0,
            search_ms=search_ms,
            trace=((search_ms, bf.size),),
            certificate=oracle.certificate(frozenset(bf.subset)),
            n_features=model.n_features,
        )
    raise ValueError(f"unknown method {method!r}")


def explain_multiclass(
    model: NamModel,
    x,
    spec: PerturbationSpec,
    method: str = "ours",
    **kwargs,
) -> tuple[int, dict[int, ExplanationResult]]:
    """Winner-vs-one explanations: one binary pipeline per rival class on the
    pairwise-reduced model."""
    if model.task != TASK_MULTICLASS:
        raise ValueError("explain_multiclass needs a multiclass model")
    values = tuple(x.values) if hasattr(x, "values") else tuple(x)
    winner = int(predict(model, values).output)
    results = {}
    for j in range(model.n_outputs):
        if j == winner:
            continue
        reduced = reduce_pairwise(model, winner, j)
        results[j] = run_method(reduced, values, spec, method, **kwargs)
    return winner, results


def explain_regression(
    model: NamModel,
    x,
    spec: PerturbationSpec,
    delta: float,
    mode: str = MODE_REG_TWO_SIDED,
    method: str = "ours",
    sort_config: SortConfig = SortConfig(),
    **kwargs,
) -> ExplanationResult:
    """Regression stability explanations.

    One-sided modes reduce to a binary margin (same components for the lower
    bound, mirrored for the upper) and inherit the binary pipeline's
    guarantees.  The two-sided conjunction runs the prefix search over a
    deterministic combined order (larger certified one-sided deviation first)
    and claims no minimality kind.
    """
    if model.task != TASK_REGRESSION:
        raise ValueError("explain_regression needs a regression model")
    values = tuple(x.values) if hasattr(x, "values") else tuple(x)
    if mode in (MODE_REG_LOWER, MODE_REG_UPPER):
        side = "lower" if mode == MODE_REG_LOWER else "upper"
        reduced = reduce_regression(model, values, delta, side)
        return run_method(reduced, values, spec, method, sort_config=sort_config, **kwargs)
    if mode != MODE_REG_TWO_SIDED:
        raise ValueError(f"unknown regression mode {mode!r}")
    t0 = time.perf_counter()
    low = sort_features(reduce_regression(model, values, delta, "lower"), values, spec, sort_config)
    up = sort_features(reduce_regression(model, values, delta, "upper"), values, spec, sort_config)
    sort_ms = (time.perf_counter() - t0) * 1000.0
    by_feature = {}
    for order in (low, up):
        for iv in order.intervals:
            prev = by_feature.get(iv.feature, float("-inf"))
            by_feature[iv.feature] = max(prev, iv.dev_low)
    combined = _PrefixOnly(tuple(sorted(by_feature, key=lambda i: (-by_feature[i], i))))
    oracle = SuffOracle(model, values, spec, mode=MODE_REG_TWO_SIDED, delta=delta)
    res = explain_cardinal_log(
        model,
        values,
        spec,
        combined,  # type: ignore[arg-type]
        oracle=oracle,
        sort_ms=sort_ms,
        minimality=MINIMALITY_NONE,
        ordering_name="two-sided-importance",
    )
    return replace(res, verifier_calls=res.verifier_calls + low.verify_calls + up.verify_calls)


@dataclass(frozen=True)
class _PrefixOnly:
    order: tuple[int, ...]

    def prefix(self, size: int) -> tuple[int, ...]:
        return self.order[:size]

    def removal_order(self) -> tuple[int, ...]:
        return tuple(reversed(self.order))


@dataclass
class InstanceRow:
    instance: int
    method: str
    status: str  # ok | skipped-trivial | budget-error | timeout
    size: int | None = None
    subset: tuple[int, ...] | None = None
    suff_calls: int | None = None
    verifier_calls: int | None = None
    sort_ms: float | None = None
    search_ms: float | None = None
    total_ms: float | None = None
    certified_sufficient: bool | None = None  # post-hoc certified re-check
    trace: tuple[tuple[float, int], ...] = ()
    progress: tuple[tuple[float, int], ...] = ()

    def to_json(self) -> dict:
        return {
            "instance": self.instance,
            "method": self.method,
            "status": self.status,
            "size": self.size,
            "subset": list(self.subset) if self.subset is not None else None,
            "suff_calls": self.suff_calls,
            "verifier_calls": self.verifier_calls,
            "sort_ms": self.sort_ms,
            "search_ms": self.search_ms,
            "total_ms": self.total_ms,
            "certified_sufficient": self.certified_sufficient,
        }


@dataclass
class BenchReport:
    env: dict
    rows: list[InstanceRow] = field(default_factory=list)

    def ok_rows(self, method: str) -> list[InstanceRow]:
        return [r for r in self.rows if r.method == method and r.status == "ok"]

    def aggregates(self) -> dict:
        out = {}
        for method in sorted({r.method for r in self.rows}):
            rows = self.ok_rows(method)
            if not rows:
                out[method] = {"n": 0}
                continue
            sizes = [r.size for r in rows]
            times = [r.total_ms for r in rows]
            checked = [r for r in rows if r.certified_sufficient is not None]
            agg = {
                "n": len(rows),
                "size_mean": statistics.fmean(sizes),
                "size_std": statistics.pstdev(sizes) if len(sizes) > 1 else 0.0,
                "time_ms_mean": statistics.fmean(times),
                "time_ms_std": statistics.pstdev(times) if len(times) > 1 else 0.0,
            }
            if checked:
                agg["sufficiency_rate"] = sum(r.certified_sufficient for r in checked) / len(checked)
            out[method] = agg
        return out

    def to_json(self, include_timing: bool = True) -> dict:
        rows = []
        for r in self.rows:
            d = r.to_json()
            if not include_timing:
                d.pop("sort_ms"), d.pop("search_ms"), d.pop("total_ms")
            rows.append(d)
        agg = self.aggregates()
        if not include_timing:
            for a in agg.values():
                a.pop("time_ms_mean", None)
                a.pop("time_ms_std", None)
        return {"env": self.env, "rows": rows, "aggregates": agg}

    def size_over_time_csv(self) -> list[tuple]:
        rows = [("instance", "method", "t_ms", "size")]
        for r in self.rows:
            if r.status != "ok":
                continue
            for t, s in r.trace:
                rows.append((r.instance, r.method, t, s))
        return rows


def run_bench(
    candidates: list[tuple[NamModel, tuple[float, ...]]],
    spec: PerturbationSpec,
    methods=("ours", "lexicographic"),
    n_instances: int = 20,
    timeout_s: float = 600.0,
    sort_config: SortConfig = SortConfig(),
    seed: int = 0,
    grid: int = 1000,
    backend: str = "exact",
    budget: Budget = Budget(),
) -> BenchReport:
    """Run each method over the same instances.

    Trivial instances (certified cardinal-minimal explanation empty or the
    full feature set) are recorded as skipped and do not count toward
    ``n_instances``.  Per-instance failures are recorded, never raised.
    """
    report = BenchReport(
        env={
            "processors": worker_cap(sort_config.processors),
            "budget_subdivisions": budget.max_subdivisions,
            "budget_tolerance": budget.tolerance,
            "seed": seed,
            "methods": list(methods),
            "epsilon": spec.epsilon,
            "timeout_s": timeout_s,
            "grid": grid,
            "backend": backend,
        }
    )
    done = 0
    for idx, (model, x) in enumerate(candidates):
        if done >= n_instances:
            break
        try:
            ours = run_method(model, x, spec, "ours", sort_config, grid, backend, budget)
        except BudgetExceededError:
            report.rows.append(InstanceRow(instance=idx, method="ours", status="budget-error"))
            continue
        if ours.size in (0, model.n_features):
            report.rows.append(
                InstanceRow(instance=idx, method="ours", status="skipped-trivial", size=ours.size)
            )
            continue
        done += 1
        for method in methods:
            t0 = time.perf_counter()
            if method == "ours":
                res = ours
            else:
                try:
                    res = run_method(model, x, spec, method, sort_config, grid, backend, budget)
                except BudgetExceededError:
                    report.rows.append(InstanceRow(instance=idx, method=method, status="budget-error"))
                    continue
            elapsed = (time.perf_counter() - t0) if method != "ours" else (ours.sort_ms + ours.search_ms) / 1000.0
            status = "timeout" if elapsed > timeout_s else "ok"
            certified = None
            if method in ("sampling", "ours"):
                certified = SuffOracle(model, x, spec).certificate(frozenset(res.subset)).sufficient
            report.rows.append(
                InstanceRow(
                    instance=idx,
                    method=method,
                    status=status,
                    size=res.size,
                    subset=res.subset,
                    suff_calls=res.suff_calls,
                    verifier_calls=res.verifier_calls,
                    sort_ms=res.sort_ms,
                    search_ms=res.search_ms,
                    total_ms=res.sort_ms + res.search_ms,
                    certified_sufficient=certified,
                    trace=res.trace,
                    progress=res.progress,
                )
            )
    return report


def ablate_epsilon(
    candidates,
    epsilons=(0.01, 0.1, 0.2, 0.5),
    n_instances: int = 10,
    clamp: bool = True,
    **kwargs,
):
    """Mean explanation size/time per perturbation radius (trend reported,
    not asserted)."""
    out = []
    for eps in epsilons:
        spec = PerturbationSpec(epsilon=eps, clamp_to_domain=clamp)
        report = run_bench(candidates, spec, methods=("ours",), n_instances=n_instances, **kwargs)
        agg = report.aggregates().get("ours", {"n": 0})
        out.append({"epsilon": eps, **agg})
    return out


def ablate_xi(exponents=range(0, 8), processors: int = 1):
    """Refinement growth against the near-identical pair's bias shift
    10^-k; runs plain bisection (both practical optimizations off)."""
    rows = []
    for k in exponents:
        shift = 10.0 ** (-k)
        model, x, eps = xi_pair_model(shift)
        config = SortConfig(
            processors=processors,
            counterexample_tightening=False,
            probe_near_upper=False,
        )
        t0 = time.perf_counter()
        order = sort_features(model, x, PerturbationSpec(epsilon=eps), config)
        elapsed_ms = (time.perf_counter() - t0) * 1000.0
        rows.append(
            {
                "bias_shift": shift,
                "exponent": k,
                "refinements": max(iv.refinements for iv in order.intervals),
                "total_refinements": sum(iv.refinements for iv in order.intervals),
                "verify_calls": order.verify_calls,
                "sort_ms": elapsed_ms,
                "order": list(order.order),
            }
        )
    return rows


def xi_refinement_slope(rows) -> float:
    """Least-squares slope of max refinement count per shift decade."""
    xs = [r["exponent"] for r in rows]
    ys = [r["refinements"] for r in rows]
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    denom = sum((x - mx) ** 2 for x in xs)
    return sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / denom


def ablate_procs(
    model: NamModel,
    x,
    spec: PerturbationSpec,
    procs=(1, 2, 4, 8),
    repeats: int = 1,
    base_config: SortConfig = SortConfig(),
):
    """Sorting under different processor counts: explanations must be
    identical; wall-clock trend is reported."""
    rows = []
    reference = None
    for p in procs:
        config = SortConfig(
            processors=p,
            max_refinements=base_config.max_refinements,
            tie_threshold=base_config.tie_threshold,
            counterexample_tightening=base_config.counterexample_tightening,
            probe_near_upper=base_config.probe_near_upper,
            probe_offset=base_config.probe_offset,
            budget=base_config.budget,
        )
        best_ms = math.inf
        order = None
        for _ in range(repeats):
            t0 = time.perf_counter()
            order = sort_features(model, x, spec, config)
            best_ms = min(best_ms, (time.perf_counter() - t0) * 1000.0)
        res = explain_cardinal_log(model, x, spec, order)
        if reference is None:
            reference = (order.order, res.subset)
        rows.append(
            {
                "processors": p,
                "sort_ms": best_ms,
                "order": list(order.order),
                "subset": list(res.subset),
                "identical_to_p1": (order.order, res.subset) == reference,
            }
        )
    return rows


def processed_features_csv(report: BenchReport) -> list[tuple]:
    """Per-method progress rows: greedy search decides one feature per suff
    call; the prefix search decides everything outside the shrinking range."""
    rows = [("instance", "method", "t_ms", "processed")]
    for r in report.rows:
        if r.status != "ok":
            continue
        for t, decided in r.progress:
            rows.append((r.instance, r.method, t, decided))
    return rows
