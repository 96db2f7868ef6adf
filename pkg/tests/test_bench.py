import json
import math

import numpy as np
import pytest

from namcert.bench import (
    ablate_epsilon,
    ablate_procs,
    ablate_xi,
    explain_multiclass,
    explain_regression,
    processed_features_csv,
    run_bench,
    run_method,
    worker_cap,
    xi_refinement_slope,
)
from namcert.explain import SuffOracle, brute_force_min
from namcert.model import NamModel, PerturbationSpec, default_meta, linear_net, predict, reduce_pairwise
from namcert.synth import gen_model, random_binary_case, random_instance, SyntheticSpec

from conftest import make_multiclass


def make_candidates(n_models=12, seed0=0):
    out = []
    for seed in range(seed0, seed0 + n_models):
        model, x, _ = random_binary_case(seed, n_lo=3, n_hi=6)
        out.append((model, x))
    return out


class TestRunMethod:
    def test_all_methods_run(self):
        model, x, eps = random_binary_case(3, n_lo=3, n_hi=5)
        spec = PerturbationSpec(epsilon=eps)
        sizes = {}
        for method in ("ours", "ours-linear", "lexicographic", "sensitivity", "sampling", "brute-force"):
            res = run_method(model, x, spec, method)
            sizes[method] = res.size
        assert sizes["ours"] == sizes["ours-linear"] == sizes["brute-force"]
        assert sizes["ours"] <= sizes["lexicographic"]
        assert sizes["ours"] <= sizes["sensitivity"]

    def test_unknown_method(self):
        model, x, eps = random_binary_case(3)
        with pytest.raises(ValueError):
            run_method(model, x, PerturbationSpec(epsilon=eps), "magic")

    def test_ours_trace_starts_after_sort(self):
        model, x, eps = random_binary_case(9, n_lo=4, n_hi=6)
        res = run_method(model, x, PerturbationSpec(epsilon=eps), "ours")
        assert all(t >= res.sort_ms for t, _ in res.trace)


class TestRunBench:
    def test_dominance_and_aggregates(self):
        report = run_bench(
            make_candidates(16),
            PerturbationSpec(epsilon=0.3),
            methods=("ours", "lexicographic"),
            n_instances=5,
        )
        ours = {r.instance: r for r in report.ok_rows("ours")}
        lex = {r.instance: r for r in report.ok_rows("lexicographic")}
        assert ours and set(ours) == set(lex)
        for idx in ours:
            assert ours[idx].size <= lex[idx].size
        agg = report.aggregates()
        rows = report.ok_rows("ours")
        assert agg["ours"]["n"] == len(rows)
        assert agg["ours"]["size_mean"] == pytest.approx(sum(r.size for r in rows) / len(rows))
        recomputed_std = float(np.std([r.size for r in rows]))
        assert agg["ours"]["size_std"] == pytest.approx(recomputed_std)

    def test_trivial_instances_skipped_not_dropped(self):
        report = run_bench(
            make_candidates(20),
            PerturbationSpec(epsilon=0.3),
            methods=("ours",),
            n_instances=4,
        )
        statuses = {r.status for r in report.rows}
        assert "ok" in statuses
        for r in report.rows:
            if r.status == "skipped-trivial":
                assert r.size in (0, None) or r.size is not None

    def test_reproducible_modulo_timing(self):
        kwargs = dict(
            spec=PerturbationSpec(epsilon=0.3),
            methods=("ours", "sampling"),
            n_instances=4,
            seed=7,
        )
        a = run_bench(make_candidates(12), **kwargs).to_json(include_timing=False)
        b = run_bench(make_candidates(12), **kwargs).to_json(include_timing=False)
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)

    def test_sampling_rate_reported(self):
        report = run_bench(
            make_candidates(12),
            PerturbationSpec(epsilon=0.3),
            methods=("ours", "sampling"),
            n_instances=4,
        )
        agg = report.aggregates()
        assert "sufficiency_rate" in agg["sampling"]
        assert agg["ours"].get("sufficiency_rate") == 1.0

    def test_trace_csvs(self):
        report = run_bench(
            make_candidates(12),
            PerturbationSpec(epsilon=0.3),
            methods=("ours", "lexicographic"),
            n_instances=3,
        )
        rows = report.size_over_time_csv()
        assert rows[0] == ("instance", "method", "t_ms", "size")
        assert len(rows) > 1
        prog = processed_features_csv(report)
        assert prog[0] == ("instance", "method", "t_ms", "processed")
        by_inst = {}
        for inst, method, t, processed in prog[1:]:
            if method == "lexicographic":
                by_inst.setdefault(inst, []).append(processed)
        for counts in by_inst.values():
            assert counts == sorted(counts)  # progress is monotone


class TestAblations:
    def test_epsilon_sweep_shape(self):
        rows = ablate_epsilon(
            make_candidates(10),
            epsilons=(0.1, 0.3),
            n_instances=3,
        )
        assert [r["epsilon"] for r in rows] == [0.1, 0.3]
        assert all("size_mean" in r for r in rows if r["n"])

    def test_xi_slope_near_one_bisection_per_decade(self):
        rows = ablate_xi(range(0, 8))
        slope = xi_refinement_slope(rows)
        assert abs(slope - 1.0) <= 3.0
        assert abs(slope - math.log2(10)) <= 1.0  # bisection halves per decade

    def test_procs_identical_results(self):
        model, x, eps = random_binary_case(4, n_lo=4, n_hi=7)
        rows = ablate_procs(model, x, PerturbationSpec(epsilon=eps), procs=(1, 2, 4))
        assert all(r["identical_to_p1"] for r in rows)


class TestMulticlassPipeline:
    def test_per_rival_results_are_certified(self):
        model = make_multiclass(21, n_classes=3, n_features=4)
        x = (0.5, 0.4, 0.6, 0.5)
        spec = PerturbationSpec(epsilon=0.2)
        winner, results = explain_multiclass(model, x, spec, method="ours")
        assert winner == int(predict(model, x).output)
        assert set(results) == {j for j in range(3) if j != winner}
        for j, res in results.items():
            reduced = reduce_pairwise(model, winner, j)
            assert SuffOracle(reduced, x, spec).certificate(frozenset(res.subset)).sufficient
            assert res.size == brute_force_min(reduced, x, spec).size

    def test_rejects_binary(self):
        model, x, eps = random_binary_case(1)
        with pytest.raises(ValueError):
            explain_multiclass(model, x, PerturbationSpec(epsilon=eps))


class TestRegressionPipeline:
    def setup_method(self):
        # f(z) = 2*z0 + z1, value 1.1 at x; epsilon 0.2 moves it by up to 0.6
        self.model = NamModel(
            "regression", (0.0,), ((linear_net(2.0), linear_net(1.0)),), default_meta(2)
        )
        self.x = (0.4, 0.3)
        self.spec = PerturbationSpec(epsilon=0.2)

    def test_lower_mode_is_cardinally_minimal(self):
        res = explain_regression(self.model, self.x, self.spec, delta=0.5, mode="regression-lower")
        # downward movements: feature 0 up to 0.4, feature 1 up to 0.2;
        # fixing feature 0 alone keeps f >= f(x) - 0.5
        assert res.subset == (0,)
        assert res.minimality == "cardinally-minimal"

    def test_upper_mode(self):
        res = explain_regression(self.model, self.x, self.spec, delta=0.5, mode="regression-upper")
        assert res.subset == (0,)

    def test_two_sided_result_passes_conjunction(self):
        res = explain_regression(self.model, self.x, self.spec, delta=0.5, mode="regression-two-sided")
        oracle = SuffOracle(self.model, self.x, self.spec, mode="regression-two-sided", delta=0.5)
        assert oracle.certificate(frozenset(res.subset)).sufficient
        assert res.minimality == "none"
        if res.size > 0:
            assert not oracle.certificate(frozenset()).sufficient

    def test_rejects_binary(self):
        model, x, eps = random_binary_case(2)
        with pytest.raises(ValueError):
            explain_regression(model, x, PerturbationSpec(epsilon=eps), delta=0.1)


class TestWorkerCap:
    def test_env_cap(self, monkeypatch):
        monkeypatch.setenv("NAMC_THREADS", "2")
        assert worker_cap(8) == 2
        monkeypatch.setenv("NAMC_THREADS", "junk")
        assert worker_cap(8) == 8
        monkeypatch.delenv("NAMC_THREADS")
        assert worker_cap(3) == 3
