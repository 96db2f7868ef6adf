import math

import numpy as np
import pytest

from namcert.importance import (
    ImportanceOrder,
    SortConfig,
    SortContradictionError,
    apply_counterexample_tightening,
    probe_near_upper_bound,
    sort_features,
)
from namcert.model import (
    FeatureMeta,
    NamModel,
    PerturbationSpec,
    TASK_BINARY,
    UnivariateNet,
    default_meta,
    linear_net,
    forward_component,
)
from namcert.pwl import exact_extrema, propagate
from namcert.synth import random_binary_case, two_feature_fixture, xi_pair_model
from namcert.verifier import Budget, BudgetExceededError

from conftest import make_random_net

NO_OPT = SortConfig(counterexample_tightening=False, probe_near_upper=False)


class TestFixtureOrder:
    def test_two_feature_order_and_xi(self):
        model, x, eps = two_feature_fixture()
        spec = PerturbationSpec(epsilon=eps)
        order = sort_features(model, x, spec)
        assert order.order == (0, 1)
        assert order.extremum_kind == "min"
        # exact deviations are 0.4 and 0.2; each certified interval contains its own
        iv0, iv1 = order.intervals
        assert iv0.dev_low - 1e-9 <= 0.4 <= iv0.dev_high + 1e-9
        assert iv1.dev_low - 1e-9 <= 0.2 <= iv1.dev_high + 1e-9
        gap_budget = 0.2 - (iv0.width + iv1.width)
        assert min(order.xi) >= gap_budget - 1e-12

    def test_identical_components_tie(self):
        net = make_random_net(3)
        model = NamModel(TASK_BINARY, (0.1,), ((net, net, net),), default_meta(3))
        order = sort_features(model, (0.4, 0.4, 0.4), PerturbationSpec(epsilon=0.2))
        assert order.order == (0, 1, 2)
        assert order.tie_groups == ((0, 1, 2),)
        assert all(iv.converged for iv in order.intervals)
        assert all(iv.tied for iv in order.intervals)

    def test_single_feature_needs_no_refinement(self):
        model = NamModel(TASK_BINARY, (0.0,), ((linear_net(1.0),),), default_meta(1))
        order = sort_features(model, (0.5,), PerturbationSpec(epsilon=0.1))
        assert order.order == (0,)
        assert order.verify_calls == 0


class TestNearIdenticalPair:
    def test_refinements_grow_with_precision(self):
        counts = {}
        for k in (0, 3):
            model, x, eps = xi_pair_model(10.0 ** -k)
            order = sort_features(model, x, PerturbationSpec(epsilon=eps), NO_OPT)
            assert order.order == (1, 0)  # shifted feature deviates more
            counts[k] = max(iv.refinements for iv in order.intervals)
        growth = counts[3] - counts[0]
        assert 3 * math.log2(10) - 3 <= growth <= 3 * math.log2(10) + 3

    def test_exact_deviation_gap(self):
        shift = 1e-3
        model, x, eps = xi_pair_model(shift)
        spec = PerturbationSpec(epsilon=eps)
        devs = []
        for i in range(2):
            lo, hi = spec.interval(x[i], model.feature_meta.domains[i])
            ext = exact_extrema(propagate(model.components[0][i], (lo, hi)))
            devs.append(forward_component(model.components[0][i], x[i]) - ext.min)
        assert devs[1] - devs[0] == pytest.approx(shift, rel=1e-9)


class TestOptimizations:
    def test_tightening_examples(self):
        assert apply_counterexample_tightening(0.5, 0.0, 0.1) == 0.0
        assert apply_counterexample_tightening(0.05, 0.2, 0.3) == 0.05  # never increases

    def test_probe_collapses_endpoint_minimum(self):
        # f(z) = z with a cancelling pair that makes IBP loose from below;
        # x sits at the argmin, so the upper bound is exact from the start.
        net = UnivariateNet.from_lists(
            [
                ([[1.0], [1.0], [1.0]], [0.0, 0.0, 1.0]),
                ([[1.0, -1.0, 1.0]], [-1.0]),
            ]
        )
        lo, up, out = probe_near_upper_bound(net, (0.0, 0.1), lower=-0.1, upper=0.0, probe_offset=1e-7)
        assert out.holds
        assert up - lo == pytest.approx(1e-7, rel=1e-6)

    def test_probe_violation_tightens_upper(self):
        # true min 0 at z=0 is 0.1 below the given upper bound
        lo, up, out = probe_near_upper_bound(linear_net(1.0), (0.0, 0.5), lower=-0.3, upper=0.1, probe_offset=1e-7)
        assert not out.holds
        assert up <= 0.1 - 1e-7
        assert lo == -0.3

    def test_probe_accelerates_slow_upper_convergence(self):
        loose_identity = UnivariateNet.from_lists(
            [
                ([[1.0], [1.0], [1.0]], [0.0, 0.0, 1.0]),
                ([[1.0, -1.0, 1.0]], [-1.0]),
            ]
        )
        model = NamModel(
            TASK_BINARY,
            (0.5,),
            ((loose_identity, linear_net(1e-5)),),
            default_meta(2),
        )
        x = (0.0, 0.1)
        spec = PerturbationSpec(epsilon=0.1)
        with_probe = sort_features(model, x, spec, SortConfig(probe_near_upper=True))
        without = sort_features(model, x, spec, SortConfig(probe_near_upper=False))
        assert with_probe.order == without.order
        assert with_probe.intervals[0].refinements + 5 < without.intervals[0].refinements

    @pytest.mark.parametrize("seed", range(25))
    def test_toggles_never_change_order(self, seed):
        model, x, eps = random_binary_case(seed, n_lo=3, n_hi=6)
        spec = PerturbationSpec(epsilon=eps)
        base = sort_features(model, x, spec, NO_OPT)
        tightened = sort_features(model, x, spec, SortConfig(probe_near_upper=False))
        probed = sort_features(model, x, spec, SortConfig())
        assert base.order == tightened.order == probed.order
        assert base.tie_groups == tightened.tie_groups == probed.tie_groups


class TestCertifiedContainment:
    @pytest.mark.parametrize("seed", range(20))
    def test_exact_extremum_inside_final_bounds(self, seed):
        model, x, eps = random_binary_case(seed, n_lo=3, n_hi=7)
        spec = PerturbationSpec(epsilon=eps)
        order = sort_features(model, x, spec)
        tol = SortConfig().budget.tolerance
        for iv in order.intervals:
            lo, hi = spec.interval(x[iv.feature], model.feature_meta.domains[iv.feature])
            ext = exact_extrema(propagate(model.components[0][iv.feature], (lo, hi)))
            value = ext.min if order.extremum_kind == "min" else ext.max
            assert iv.lower - tol <= value <= iv.upper + tol

    def test_class0_uses_maximum(self):
        model, x, eps = random_binary_case(42, n_lo=3, n_hi=5)
        shifted = NamModel(
            model.task,
            (model.intercepts[0] - 50.0,),
            model.components,
            model.feature_meta,
        )
        spec = PerturbationSpec(epsilon=eps)
        order = sort_features(shifted, x, spec)
        assert order.extremum_kind == "max"
        for iv in order.intervals:
            lo, hi = spec.interval(x[iv.feature], shifted.feature_meta.domains[iv.feature])
            ext = exact_extrema(propagate(shifted.components[0][iv.feature], (lo, hi)))
            assert iv.lower - 1e-9 <= ext.max <= iv.upper + 1e-9


class TestOrderContract:
    @pytest.mark.parametrize("seed", range(15))
    def test_adjacent_intervals_are_ordered(self, seed):
        model, x, eps = random_binary_case(100 + seed, n_lo=3, n_hi=8)
        order = sort_features(model, x, PerturbationSpec(epsilon=eps))
        tied = {i for g in order.tie_groups for i in g}
        by_feature = {iv.feature: iv for iv in order.intervals}
        for a, b in zip(order.order, order.order[1:]):
            if a in tied and b in tied:
                continue
            assert by_feature[a].dev_low >= by_feature[b].dev_high - 1e-12

    @pytest.mark.parametrize("p", [1, 2, 4, 8])
    def test_parallel_determinism(self, p):
        model, x, eps = random_binary_case(7, n_lo=5, n_hi=9)
        spec = PerturbationSpec(epsilon=eps)
        reference = sort_features(model, x, spec, SortConfig(processors=1))
        run = sort_features(model, x, spec, SortConfig(processors=p))
        assert run.order == reference.order
        assert run.verify_calls == reference.verify_calls
        for a, b in zip(run.intervals, reference.intervals):
            assert a.lower == b.lower and a.upper == b.upper  # bit-identical

    @pytest.mark.parametrize("seed", range(12))
    def test_query_count_bound(self, seed):
        model, x, eps = random_binary_case(300 + seed, n_lo=3, n_hi=7)
        config = SortConfig(probe_near_upper=False)
        order = sort_features(model, x, PerturbationSpec(epsilon=eps), config)
        if order.tie_groups:
            pytest.skip("tie group formed; the log bound assumes separation")
        finite_xi = [v for v in order.xi if math.isfinite(v) and v > 0]
        if len(finite_xi) < len(order.xi):
            pytest.skip("zero adjacent gap")
        n = model.n_features
        depth = max(
            math.ceil(math.log2(iv.init_width / order.xi[iv.feature]))
            for iv in order.intervals
            if iv.init_width > 0
        )
        assert order.verify_calls <= n * (2 + max(depth, 0))


class TestErrors:
    def test_budget_error_names_feature(self):
        model, x, eps = random_binary_case(5, n_lo=3, n_hi=4)
        tiny = SortConfig(budget=Budget(max_subdivisions=1, tolerance=1e-15))
        with pytest.raises(BudgetExceededError, match="feature"):
            sort_features(model, x, PerturbationSpec(epsilon=eps), tiny)

    def test_refinement_limit_aborts(self):
        net = make_random_net(50)
        model = NamModel(TASK_BINARY, (0.2,), ((net, net),), default_meta(2))
        config = SortConfig(max_refinements=1, tie_threshold=1e-300)
        with pytest.raises(SortContradictionError):
            sort_features(model, (0.5, 0.5), PerturbationSpec(epsilon=0.2), config)

    def test_non_binary_rejected(self):
        model = NamModel("regression", (0.0,), ((linear_net(1.0),),), default_meta(1))
        with pytest.raises(ValueError, match="binary"):
            sort_features(model, (0.5,), PerturbationSpec(epsilon=0.1))
