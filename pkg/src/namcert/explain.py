"""Sufficiency oracle and explanation searches.

For factorizing perturbation balls the sufficiency of a feature subset
decomposes additively: the certified margin bound is the intercept plus the
fixed features' values plus each free feature's certified extremum.  The
bound is assembled with the same left-to-right summation as prediction, so
an insufficiency counterexample re-evaluates to a flipped prediction
bit-exactly.

Searches: greedy subset-minimal removal under an arbitrary ordering,
greedy cardinally-minimal removal under the certified importance order,
first-true binary search over importance prefixes, an uncertified
sampling variant, and an exhaustive oracle for ground truth.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Iterable, Sequence

import numpy as np

from .importance import ImportanceOrder
from .model import (
    NamModel,
    PerturbationSpec,
    TASK_BINARY,
    TASK_MULTICLASS,
    TASK_REGRESSION,
    feature_intervals,
    forward_component,
    mirror_net,
    predict,
    reduce_pairwise,
)
from .pwl import DEFAULT_PIECE_CAP, exact_extrema, propagate
from .verifier import Budget, minimize

MODE_CLASS1 = "binary-class-1"
MODE_CLASS0 = "binary-class-0"
MODE_REG_LOWER = "regression-lower"
MODE_REG_UPPER = "regression-upper"
MODE_REG_TWO_SIDED = "regression-two-sided"

BACKEND_EXACT = "exact"
BACKEND_VERIFIER = "verifier"

MINIMALITY_CARDINAL = "cardinally-minimal"
MINIMALITY_SUBSET = "subset-minimal"
MINIMALITY_NONE = "none"


@dataclass(frozen=True)
class SufficiencyQuery:
    model: NamModel
    x: tuple[float, ...]
    spec: PerturbationSpec
    subset: frozenset[int]
    mode: str = MODE_CLASS1
    delta: float = 0.0

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if any(i < 0 or i >= self.model.n_features for i in self.subset):
            raise ValueError("subset index out of range")


@dataclass(frozen=True)
class SufficiencyCertificate:
    sufficient: bool
    margin_bound: float  # conservatively padded bound of the binding condition
    counterexample: tuple[float, ...] | None
    free_extrema: tuple[tuple[int, float, float], ...]  # (feature, point, value) used
    verifier_calls: int
    bounds: tuple[tuple[str, float], ...]  # padded bound per condition
    certified: bool = True


class _ExtremaCache:
    """Per-feature certified extrema of one binary-form model, computed once.

    backend "exact" propagates the exact piecewise-linear form; backend
    "verifier" converges branch-and-bound.  Either way the reported value is
    re-evaluated through the forward pass at a concrete witness point and
    clamped by the unperturbed point, so extremum <= f(x_i) holds exactly for
    minima (and the mirror for maxima).
    """

    def __init__(self, model, x, spec, backend, budget, piece_cap):
        self.model = model
        self.x = tuple(x)
        self.intervals = feature_intervals(model, self.x, spec)
        self.backend = backend
        self.budget = budget
        self.piece_cap = piece_cap
        self._min: dict[int, tuple[float, float]] = {}
        self._max: dict[int, tuple[float, float]] = {}
        self.verifier_calls = 0

    def _solve(self, i: int) -> None:
        net = self.model.components[0][i]
        lo, hi = self.intervals[i]
        if self.backend == BACKEND_EXACT:
            f = propagate(net, (lo, hi), piece_cap=self.piece_cap)
            ext = exact_extrema(f)
            min_pt, max_pt = ext.argmin, ext.argmax
        else:
            res_min = minimize(net, (lo, hi), self.budget)
            res_max = minimize(mirror_net(net), (lo, hi), self.budget)
            self.verifier_calls += 2
            min_pt, max_pt = res_min.best_point, res_max.best_point
        x_i = self.x[i]
        fx = forward_component(net, x_i)
        min_val = forward_component(net, min_pt)
        if fx < min_val:
            min_pt, min_val = x_i, fx
        max_val = forward_component(net, max_pt)
        if fx > max_val:
            max_pt, max_val = x_i, fx
        self._min[i] = (min_pt, min_val)
        self._max[i] = (max_pt, max_val)

    def minimum(self, i: int) -> tuple[float, float]:
        if i not in self._min:
            self._solve(i)
        return self._min[i]

    def maximum(self, i: int) -> tuple[float, float]:
        if i not in self._max:
            self._solve(i)
        return self._max[i]


class _GridCache(_ExtremaCache):
    """Uncertified extrema over evenly spaced sample points (endpoints
    included); deliberately blind to anything between consecutive samples."""

    def __init__(self, model, x, spec, grid):
        super().__init__(model, x, spec, BACKEND_EXACT, Budget(), DEFAULT_PIECE_CAP)
        if grid < 2:
            raise ValueError("grid must have at least the two endpoints")
        self.grid = grid

    def _solve(self, i: int) -> None:
        net = self.model.components[0][i]
        lo, hi = self.intervals[i]
        points = np.linspace(lo, hi, self.grid) if hi > lo else np.array([lo])
        values = [forward_component(net, float(z)) for z in points]
        k_min = int(np.argmin(values))
        k_max = int(np.argmax(values))
        self._min[i] = (float(points[k_min]), values[k_min])
        self._max[i] = (float(points[k_max]), values[k_max])


@dataclass
class _MarginTask:
    """One additive margin condition: keep margin above (or below) a target."""

    key: str
    model: NamModel  # single-head model whose margin is constrained
    kind: str  # "lower" | "upper"
    target: float
    strict: bool
    cache: _ExtremaCache

    def evaluate(self, subset: frozenset[int], tolerance: float):
        x = self.cache.x
        total = float(self.model.intercepts[0])
        assembled = list(x)
        extremes = []
        for i in range(self.model.n_features):
            if i in subset:
                total += forward_component(self.model.components[0][i], x[i])
            else:
                pt, val = self.cache.minimum(i) if self.kind == "lower" else self.cache.maximum(i)
                total += val
                assembled[i] = pt
                extremes.append((i, pt, val))
        pad = tolerance * len(extremes)
        if self.kind == "lower":
            ok = total > self.target if self.strict else total >= self.target
            padded = total - pad
        else:
            ok = total < self.target if self.strict else total <= self.target
            padded = total + pad
        return ok, padded, tuple(assembled), tuple(extremes)


def _auto_mode(model: NamModel, x) -> str:
    if model.task == TASK_REGRESSION:
        return MODE_REG_TWO_SIDED
    return MODE_CLASS1 if predict(model, x).output == 1.0 else MODE_CLASS0


class SuffOracle:
    """Reusable sufficiency decision for a fixed (model, x, spec, mode).

    Per-feature extrema are cached across calls, so a search issuing many
    subset queries pays the per-feature certification cost once.
    """

    def __init__(
        self,
        model: NamModel,
        x: Sequence[float],
        spec: PerturbationSpec,
        mode: str | None = None,
        delta: float = 0.0,
        backend: str = BACKEND_EXACT,
        tolerance: float = 1e-9,
        budget: Budget = Budget(),
        piece_cap: int = DEFAULT_PIECE_CAP,
        grid: int | None = None,
    ):
        if backend not in (BACKEND_EXACT, BACKEND_VERIFIER):
            raise ValueError(f"unknown backend {backend!r}")
        self.model = model
        self.x = tuple(x.values) if hasattr(x, "values") else tuple(x)
        self.spec = spec
        self.delta = delta
        self.tolerance = tolerance
        self.mode = mode or _auto_mode(model, self.x)
        self.certified = grid is None
        self.suff_calls = 0

        def make_cache(m):
            if grid is not None:
                return _GridCache(m, self.x, spec, grid)
            return _ExtremaCache(m, self.x, spec, backend, budget, piece_cap)

        self.tasks: list[_MarginTask] = []
        if self.mode in (MODE_CLASS1, MODE_CLASS0):
            if model.task != TASK_BINARY:
                raise ValueError(f"mode {self.mode} needs a binary(-reduced) model")
            if self.mode == MODE_CLASS1:
                self.tasks.append(_MarginTask("lower", model, "lower", 0.0, False, make_cache(model)))
            else:
                self.tasks.append(_MarginTask("upper", model, "upper", 0.0, True, make_cache(model)))
        elif self.mode in (MODE_REG_LOWER, MODE_REG_UPPER, MODE_REG_TWO_SIDED):
            if model.task != TASK_REGRESSION:
                raise ValueError(f"mode {self.mode} needs a regression model")
            v0 = model.margin(self.x)
            cache = make_cache(model)
            if self.mode in (MODE_REG_LOWER, MODE_REG_TWO_SIDED):
                self.tasks.append(_MarginTask("lower", model, "lower", v0 - delta, False, cache))
            if self.mode in (MODE_REG_UPPER, MODE_REG_TWO_SIDED):
                self.tasks.append(_MarginTask("upper", model, "upper", v0 + delta, False, cache))
        else:
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def n_features(self) -> int:
        return self.model.n_features

    @property
    def verifier_calls(self) -> int:
        return sum(t.cache.verifier_calls for t in self.tasks)

    def _decide(self, subset: frozenset[int]) -> SufficiencyCertificate:
        bounds = []
        binding = None
        for task in self.tasks:
            ok, padded, assembled, extremes = task.evaluate(subset, self.tolerance)
            bounds.append((task.key, padded))
            if not ok:
                return SufficiencyCertificate(
                    sufficient=False,
                    margin_bound=padded,
                    counterexample=assembled,
                    free_extrema=extremes,
                    verifier_calls=self.verifier_calls,
                    bounds=tuple(bounds),
                    certified=self.certified,
                )
            slack = padded - task.target if task.kind == "lower" else task.target - padded
            if binding is None or slack < binding[0]:
                binding = (slack, padded, extremes)
        return SufficiencyCertificate(
            sufficient=True,
            margin_bound=binding[1],
            counterexample=None,
            free_extrema=binding[2],
            verifier_calls=self.verifier_calls,
            bounds=tuple(bounds),
            certified=self.certified,
        )

    def suff(self, subset: Iterable[int]) -> SufficiencyCertificate:
        self.suff_calls += 1
        return self._decide(frozenset(subset))

    def certificate(self, subset: Iterable[int]) -> SufficiencyCertificate:
        """Re-derive a certificate without counting a search query."""
        return self._decide(frozenset(subset))


def suff(query: SufficiencyQuery, backend: str = BACKEND_EXACT, **kwargs) -> SufficiencyCertificate:
    oracle = SuffOracle(
        query.model, query.x, query.spec, mode=query.mode, delta=query.delta, backend=backend, **kwargs
    )
    return oracle.suff(query.subset)


class MulticlassSuffOracle:
    """Winner-vs-all sufficiency as the conjunction of pairwise reductions.

    The winner must stay ahead of every rival; against lower-index rivals the
    lead must be strict because argmax ties break to the lowest index.
    """

    def __init__(self, model: NamModel, x, spec: PerturbationSpec, backend: str = BACKEND_EXACT, **kwargs):
        if model.task != TASK_MULTICLASS:
            raise ValueError("multiclass oracle needs a multiclass model")
        self.x = tuple(x.values) if hasattr(x, "values") else tuple(x)
        self.winner = int(predict(model, self.x).output)
        self.suff_calls = 0
        self.rival_oracles: list[tuple[int, SuffOracle, bool]] = []
        for j in range(model.n_outputs):
            if j == self.winner:
                continue
            reduced = reduce_pairwise(model, self.winner, j)
            oracle = SuffOracle(reduced, self.x, spec, mode=MODE_CLASS1, backend=backend, **kwargs)
            # strict lead needed when the rival would win the tie
            oracle.tasks[0].strict = j < self.winner
            oracle.tasks[0].key = f"rival{j}"
            self.rival_oracles.append((j, oracle, j < self.winner))

    @property
    def verifier_calls(self) -> int:
        return sum(o.verifier_calls for _, o, _ in self.rival_oracles)

    def suff(self, subset: Iterable[int]) -> SufficiencyCertificate:
        self.suff_calls += 1
        sub = frozenset(subset)
        bounds = []
        binding = None
        for _, oracle, _ in self.rival_oracles:
            cert = oracle.certificate(sub)
            bounds.extend(cert.bounds)
            if not cert.sufficient:
                return SufficiencyCertificate(
                    sufficient=False,
                    margin_bound=cert.margin_bound,
                    counterexample=cert.counterexample,
                    free_extrema=cert.free_extrema,
                    verifier_calls=self.verifier_calls,
                    bounds=tuple(bounds),
                )
            if binding is None or cert.margin_bound < binding.margin_bound:
                binding = cert
        return SufficiencyCertificate(
            sufficient=True,
            margin_bound=binding.margin_bound,
            counterexample=None,
            free_extrema=binding.free_extrema,
            verifier_calls=self.verifier_calls,
            bounds=tuple(bounds),
        )


# ---------------------------------------------------------------------------
# Searches
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExplanationResult:
    subset: tuple[int, ...]  # ascending feature indices
    minimality: str
    ordering: str
    suff_calls: int
    verifier_calls: int
    sort_ms: float
    search_ms: float
    trace: tuple[tuple[float, int], ...]  # (elapsed_ms, best known sufficient size)
    certificate: SufficiencyCertificate
    n_features: int
    # (elapsed_ms, features whose membership is decided); drives progress plots
    progress: tuple[tuple[float, int], ...] = ()

    @property
    def size(self) -> int:
        return len(self.subset)

    def to_json(self) -> dict:
        cert: dict = {"margin_bound": self.certificate.margin_bound, "certified": self.certificate.certified}
        if self.certificate.counterexample is not None:
            cert["counterexample"] = list(self.certificate.counterexample)
        return {
            "subset": list(self.subset),
            "minimality": self.minimality,
            "ordering": self.ordering,
            "n_features": self.n_features,
            "counts": {"suff_calls": self.suff_calls, "verifier_calls": self.verifier_calls},
            "timings_ms": {"sort": self.sort_ms, "search": self.search_ms},
            "trace": [[t, s] for t, s in self.trace],
            "certificate": cert,
        }


@dataclass(frozen=True)
class SensitivityConfig:
    samples_per_feature: int = 64  # includes both ball endpoints

    def __post_init__(self):
        if self.samples_per_feature < 2:
            raise ValueError("need at least the two endpoints")


def sensitivity_order(
    model: NamModel,
    x,
    spec: PerturbationSpec,
    config: SensitivityConfig = SensitivityConfig(),
) -> tuple[int, ...]:
    """Ascending max-grid-deviation order; the least sensitive feature is
    tried for removal first."""
    values = tuple(x.values) if hasattr(x, "values") else tuple(x)
    intervals = feature_intervals(model, values, spec)
    scores = []
    for i in range(model.n_features):
        net = model.components[0][i]
        lo, hi = intervals[i]
        pts = np.linspace(lo, hi, config.samples_per_feature) if hi > lo else np.array([lo])
        fx = forward_component(net, values[i])
        score = max(abs(forward_component(net, float(z)) - fx) for z in pts)
        scores.append((score, i))
    return tuple(i for _, i in sorted(scores, key=lambda s: (s[0], s[1])))


def _greedy_removal(oracle, removal_order, minimality, ordering_name, sort_ms=0.0) -> ExplanationResult:
    n = oracle.n_features
    t0 = time.perf_counter()
    calls0, ver0 = oracle.suff_calls, oracle.verifier_calls
    subset = set(range(n))
    trace = []
    progress = []
    for k, i in enumerate(removal_order, start=1):
        cert = oracle.suff(subset - {i})
        if cert.sufficient:
            subset.discard(i)
        t = (time.perf_counter() - t0) * 1000.0
        trace.append((t, len(subset)))
        progress.append((t, k))
    final = oracle.certificate(frozenset(subset))
    return ExplanationResult(
        subset=tuple(sorted(subset)),
        minimality=minimality,
        ordering=ordering_name,
        suff_calls=oracle.suff_calls - calls0,
        verifier_calls=oracle.verifier_calls - ver0,
        sort_ms=sort_ms,
        search_ms=(time.perf_counter() - t0) * 1000.0,
        trace=tuple(trace),
        certificate=final,
        n_features=n,
        progress=tuple(progress),
    )


def explain_subset_minimal(
    model: NamModel,
    x,
    spec: PerturbationSpec,
    ordering: str = "lexicographic",
    sensitivity_config: SensitivityConfig = SensitivityConfig(),
    oracle: SuffOracle | None = None,
) -> ExplanationResult:
    """Greedy one-pass removal; exactly n suff calls; result is
    subset-minimal for any traversal order."""
    oracle = oracle or SuffOracle(model, x, spec)
    if ordering == "lexicographic":
        removal = tuple(range(oracle.n_features))
    elif ordering == "sensitivity":
        removal = sensitivity_order(model, x, spec, sensitivity_config)
    else:
        raise ValueError(f"unknown ordering {ordering!r}")
    return _greedy_removal(oracle, removal, MINIMALITY_SUBSET, ordering)


def explain_cardinal_linear(
    model: NamModel,
    x,
    spec: PerturbationSpec,
    order: ImportanceOrder,
    oracle: SuffOracle | None = None,
    sort_ms: float = 0.0,
) -> ExplanationResult:
    """Greedy removal in ascending certified importance; exactly n suff
    calls; the result is cardinally minimal."""
    oracle = oracle or SuffOracle(model, x, spec)
    return _greedy_removal(oracle, order.removal_order(), MINIMALITY_CARDINAL, "importance", sort_ms)


def explain_cardinal_log(
    model: NamModel,
    x,
    spec: PerturbationSpec,
    order: ImportanceOrder,
    oracle: SuffOracle | None = None,
    sort_ms: float = 0.0,
    minimality: str = MINIMALITY_CARDINAL,
    ordering_name: str = "importance",
) -> ExplanationResult:
    """Smallest sufficient prefix of the importance order via first-true
    binary search over prefix sizes 0..n; at most ceil(log2(n+1)) suff calls.

    Prefix sufficiency is monotone (supersets of sufficient sets are
    sufficient), so the transition point is unique and the returned prefix
    matches the linear search's result.
    """
    oracle = oracle or SuffOracle(model, x, spec)
    n = oracle.n_features
    t0 = time.perf_counter()
    calls0, ver0 = oracle.suff_calls, oracle.verifier_calls
    lo, hi = 0, n
    best = n
    trace = []
    progress = []
    while lo < hi:
        mid = (lo + hi) // 2
        cert = oracle.suff(order.prefix(mid))
        if cert.sufficient:
            hi = mid
            best = mid
        else:
            lo = mid + 1
        t = (time.perf_counter() - t0) * 1000.0
        trace.append((t, best))
        # order positions below lo are certainly kept, positions >= hi dropped
        progress.append((t, n - (hi - lo)))
    subset = tuple(sorted(order.prefix(lo)))
    final = oracle.certificate(frozenset(subset))
    return ExplanationResult(
        subset=subset,
        minimality=minimality,
        ordering=ordering_name,
        suff_calls=oracle.suff_calls - calls0,
        verifier_calls=oracle.verifier_calls - ver0,
        sort_ms=sort_ms,
        search_ms=(time.perf_counter() - t0) * 1000.0,
        trace=tuple(trace),
        certificate=final,
        n_features=n,
        progress=tuple(progress),
    )


def sampled_importance_order(oracle: SuffOracle) -> tuple[int, ...]:
    """Importance ranking from the sampling oracle's own grid extrema;
    descending sampled deviation, ties by index."""
    task = oracle.tasks[0]
    cache = task.cache
    devs = []
    for i in range(oracle.n_features):
        net = task.model.components[0][i]
        fx = forward_component(net, oracle.x[i])
        if task.kind == "lower":
            devs.append(fx - cache.minimum(i)[1])
        else:
            devs.append(cache.maximum(i)[1] - fx)
    return tuple(sorted(range(oracle.n_features), key=lambda i: (-devs[i], i)))


@dataclass(frozen=True)
class _PrefixOrder:
    order: tuple[int, ...]

    def prefix(self, size: int) -> tuple[int, ...]:
        return self.order[:size]

    def removal_order(self) -> tuple[int, ...]:
        return tuple(reversed(self.order))


def explain_sampling(
    model: NamModel,
    x,
    spec: PerturbationSpec,
    grid: int = 1000,
) -> ExplanationResult:
    """Uncertified pipeline: grid extrema replace certified extrema both in
    the importance ranking and inside the sufficiency check, then the same
    logarithmic prefix search runs.  Carries no minimality claim."""
    mode = _auto_mode(model, tuple(x.values) if hasattr(x, "values") else tuple(x))
    oracle = SuffOracle(model, x, spec, mode=mode, grid=grid)
    t0 = time.perf_counter()
    order = _PrefixOrder(sampled_importance_order(oracle))
    sort_ms = (time.perf_counter() - t0) * 1000.0
    return explain_cardinal_log(
        model,
        x,
        spec,
        order,  # type: ignore[arg-type]
        oracle=oracle,
        sort_ms=sort_ms,
        minimality=MINIMALITY_NONE,
        ordering_name="sampled-importance",
    )


@dataclass(frozen=True)
class BruteForceResult:
    size: int
    subset: tuple[int, ...]
    suff_calls: int


def brute_force_min(
    model: NamModel,
    x,
    spec: PerturbationSpec,
    oracle: SuffOracle | None = None,
    max_features: int = 22,
) -> BruteForceResult:
    """Exhaustive ground truth: first sufficient subset in ascending
    cardinality, then ascending lexicographic order."""
    oracle = oracle or SuffOracle(model, x, spec)
    n = oracle.n_features
    if n > max_features:
        raise ValueError(f"brute force guarded at {max_features} features, got {n}")
    calls0 = oracle.suff_calls
    for k in range(n + 1):
        for comb in combinations(range(n), k):
            if oracle.suff(comb).sufficient:
                return BruteForceResult(size=k, subset=comb, suff_calls=oracle.suff_calls - calls0)
    raise AssertionError("the full feature set must be sufficient")
