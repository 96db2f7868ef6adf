"""Command-line surface.

Verbs: explain, sort, verify-suff, bench, ablate {epsilon|xi|procs},
gen-model, export-plot.  Exit codes: 0 ok, 2 verifier budget exhausted,
64 usage error.  NAMC_THREADS caps worker counts.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import bench as bench_mod
from .explain import SuffOracle, MulticlassSuffOracle
from .importance import SortConfig, sort_features
from .model import (
    Instance,
    ModelFormatError,
    NamModel,
    PerturbationSpec,
    TASK_MULTICLASS,
    load_dataset,
    load_model,
    save_model,
    forward_component,
)
from .pwl import exact_extrema, propagate
from .synth import (
    SpikeParams,
    SyntheticSpec,
    adversarial_order_model,
    gen_model,
    random_instance,
    two_feature_fixture,
)
from .verifier import Budget, BudgetExceededError

EXIT_OK = 0
EXIT_BUDGET = 2
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


class UsageError(ValueError):
    pass


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip() != "")
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _parse_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip() != "")
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _resolve_instance(args, model: NamModel) -> tuple[float, ...]:
    if getattr(args, "values", None):
        values = _parse_floats(args.values)
        if len(values) != model.n_features:
            raise UsageError(f"--values needs {model.n_features} entries, got {len(values)}")
        return values
    if getattr(args, "data", None) is not None:
        instances, _ = load_dataset(args.data, label_column=getattr(args, "label_column", None))
        idx = getattr(args, "index", None) or 0
        if not (0 <= idx < len(instances)):
            raise UsageError(f"--index {idx} outside dataset with {len(instances)} rows")
        return instances[idx].values
    raise UsageError("provide an instance via --values or --data/--index")


def _spec(args) -> PerturbationSpec:
    return PerturbationSpec(epsilon=args.epsilon, clamp_to_domain=not args.no_clamp)


def _sort_config(args) -> SortConfig:
    return SortConfig(
        processors=bench_mod.worker_cap(args.procs),
        budget=Budget(max_subdivisions=args.budget),
    )


def _emit(payload, args) -> None:
    fmt = getattr(args, "format", "json")
    if fmt == "json":
        text = json.dumps(payload, indent=2, default=str)
    else:
        raise UsageError(f"this command only supports --format json, got {fmt!r}")
    if getattr(args, "out", None):
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _write_csv(rows, path) -> None:
    if path:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(rows)
    else:
        csv.writer(sys.stdout).writerows(rows)


def _add_common(p, instance=True):
    p.add_argument("--model", required=True, help="model JSON path")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--no-clamp", action="store_true", help="do not intersect the ball with feature domains")
    p.add_argument("--procs", type=int, default=1)
    p.add_argument("--budget", type=int, default=100_000, help="max subdivisions per verifier call")
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    if instance:
        p.add_argument("--values", default=None, help="comma-separated feature values")
        p.add_argument("--data", default=None, help="dataset CSV")
        p.add_argument("--index", type=int, default=None, help="row index into --data")
        p.add_argument("--label-column", default=None)


def cmd_explain(args) -> int:
    model = load_model(args.model)
    x = _resolve_instance(args, model)
    spec = _spec(args)
    if args.method not in bench_mod.METHODS:
        raise UsageError(f"unknown method {args.method!r} (choose from {', '.join(bench_mod.METHODS)})")
    kwargs = dict(
        sort_config=_sort_config(args),
        grid=args.grid,
        backend=args.backend,
        budget=Budget(max_subdivisions=args.budget),
    )
    if model.task == "multiclass":
        winner, results = bench_mod.explain_multiclass(model, x, spec, args.method, **kwargs)
        payload = {
            "task": "multiclass",
            "winner": winner,
            "rivals": {str(j): res.to_json() for j, res in sorted(results.items())},
        }
    elif model.task == "regression":
        mode = args.mode or "regression-two-sided"
        res = bench_mod.explain_regression(model, x, spec, args.delta, mode, args.method, **kwargs)
        payload = {"task": "regression", "mode": mode, "delta": args.delta, **res.to_json()}
    else:
        payload = bench_mod.run_method(model, x, spec, args.method, **kwargs).to_json()
    _emit(payload, args)
    return EXIT_OK


def cmd_sort(args) -> int:
    model = load_model(args.model)
    x = _resolve_instance(args, model)
    order = sort_features(model, x, _spec(args), _sort_config(args))
    payload = {
        "order": list(order.order),
        "extremum_kind": order.extremum_kind,
        "intervals": [
            {
                "feature": iv.feature,
                "lower": iv.lower,
                "upper": iv.upper,
                "deviation": [iv.dev_low, iv.dev_high],
                "refinements": iv.refinements,
                "verify_calls": iv.verify_calls,
                "tied": iv.tied,
            }
            for iv in order.intervals
        ],
        "xi": [None if v == float("inf") else v for v in order.xi],
        "tie_groups": [list(g) for g in order.tie_groups],
        "verify_calls": order.verify_calls,
        "rounds": order.rounds,
    }
    _emit(payload, args)
    return EXIT_OK


def cmd_verify_suff(args) -> int:
    model = load_model(args.model)
    x = _resolve_instance(args, model)
    subset = frozenset(_parse_ints(args.subset)) if args.subset else frozenset()
    spec = _spec(args)
    if model.task == TASK_MULTICLASS:
        oracle = MulticlassSuffOracle(model, x, spec, backend=args.backend)
    else:
        oracle = SuffOracle(
            model, x, spec, mode=args.mode, delta=args.delta, backend=args.backend,
            budget=Budget(max_subdivisions=args.budget),
        )
    cert = oracle.suff(subset)
    payload = {
        "sufficient": cert.sufficient,
        "margin_bound": cert.margin_bound,
        "bounds": dict(cert.bounds),
        "verifier_calls": cert.verifier_calls,
    }
    if cert.counterexample is not None:
        payload["counterexample"] = list(cert.counterexample)
    _emit(payload, args)
    return EXIT_OK


def cmd_bench(args) -> int:
    model = load_model(args.model)
    spec = _spec(args)
    rng = np.random.default_rng(args.seed)
    if args.data:
        instances, _ = load_dataset(args.data, label_column=args.label_column)
        candidates = [(model, inst.values) for inst in instances]
    else:
        candidates = [(model, random_instance(rng, model)) for _ in range(4 * args.n)]
    methods = tuple(m.strip() for m in args.methods.split(","))
    for m in methods:
        if m not in bench_mod.METHODS:
            raise UsageError(f"unknown method {m!r}")
    report = bench_mod.run_bench(
        candidates,
        spec,
        methods=methods,
        n_instances=args.n,
        timeout_s=args.timeout,
        sort_config=_sort_config(args),
        seed=args.seed,
        grid=args.grid,
        backend=args.backend,
        budget=Budget(max_subdivisions=args.budget),
    )
    _emit(report.to_json(), args)
    if args.traces:
        _write_csv(report.size_over_time_csv(), args.traces)
    if args.progress:
        _write_csv(bench_mod.processed_features_csv(report), args.progress)
    return EXIT_OK


def cmd_gen_model(args) -> int:
    if args.preset == "linear2":
        model, _, _ = two_feature_fixture()
    elif args.preset == "adversarial":
        model, _, _ = adversarial_order_model()
    else:
        spike = None
        if args.spike_feature is not None:
            spike = SpikeParams(
                feature=args.spike_feature,
                center=args.spike_center,
                halfwidth=args.spike_halfwidth,
                depth=args.spike_depth,
            )
        spec = SyntheticSpec(
            n_features=args.n,
            hidden=tuple(_parse_ints(args.hidden)),
            seed=args.seed,
            task=args.task,
            n_classes=args.classes,
            intercept=args.intercept,
            pair_bias_shift=args.pair_shift,
            spike=spike,
        )
        model = gen_model(spec)
    save_model(model, args.out)
    return EXIT_OK


def cmd_export_plot(args) -> int:
    model = load_model(args.model)
    x = _resolve_instance(args, model)
    spec = _spec(args)
    i = args.feature
    if not (0 <= i < model.n_features):
        raise UsageError(f"--feature {i} out of range")
    net = model.components[0][i]
    lo, hi = spec.interval(x[i], model.feature_meta.domains[i])
    pwl = propagate(net, (lo, hi))
    ext = exact_extrema(pwl)
    grid_pts = [float(z) for z in np.linspace(lo, hi, args.grid)] if hi > lo else [lo]
    rows = [("z", "value", "kind", "certified_min", "certified_max")]
    merged = [(z, "grid") for z in grid_pts] + [(t, "breakpoint") for t in pwl.breakpoints]
    for z, kind in sorted(merged):
        rows.append((z, forward_component(net, z), kind, 0, 0))
    rows.append((ext.argmin, ext.min, "certified", 1, 0))
    rows.append((ext.argmax, ext.max, "certified", 0, 1))
    _write_csv(rows, args.out)
    return EXIT_OK


def cmd_ablate(args) -> int:
    if args.kind == "xi":
        rows = bench_mod.ablate_xi(range(0, args.max_exponent + 1), processors=bench_mod.worker_cap(args.procs))
        payload = {"kind": "xi", "rows": rows, "slope_per_decade": bench_mod.xi_refinement_slope(rows)}
    elif args.kind == "epsilon":
        model = load_model(args.model)
        rng = np.random.default_rng(args.seed)
        candidates = [(model, random_instance(rng, model)) for _ in range(4 * args.n)]
        rows = bench_mod.ablate_epsilon(
            candidates,
            epsilons=tuple(_parse_floats(args.epsilons)),
            n_instances=args.n,
            seed=args.seed,
        )
        payload = {"kind": "epsilon", "rows": rows}
    else:  # procs
        model = load_model(args.model)
        x = _resolve_instance(args, model)
        rows = bench_mod.ablate_procs(model, x, _spec(args), procs=tuple(_parse_ints(args.procs_list)))
        payload = {"kind": "procs", "rows": rows, "identical": all(r["identical_to_p1"] for r in rows)}
    _emit(payload, args)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="namc", description="Certified explanations for neural additive models")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explain", parents=[], help="run one explanation method")
    _add_common(p)
    p.add_argument("--method", default="ours")
    p.add_argument("--backend", choices=("exact", "verifier"), default="exact")
    p.add_argument("--grid", type=int, default=1000)
    p.add_argument("--mode", default=None, help="regression mode (regression-lower/upper/two-sided)")
    p.add_argument("--delta", type=float, default=0.0, help="regression stability width")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("sort", help="certified importance order")
    _add_common(p)
    p.set_defaults(func=cmd_sort)

    p = sub.add_parser("verify-suff", help="check one subset's sufficiency")
    _add_common(p)
    p.add_argument("--subset", default="", help="comma-separated feature indices")
    p.add_argument("--mode", default=None)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--backend", choices=("exact", "verifier"), default="exact")
    p.set_defaults(func=cmd_verify_suff)

    p = sub.add_parser("bench", help="method comparison over a batch")
    _add_common(p, instance=False)
    p.add_argument("--data", default=None)
    p.add_argument("--label-column", default=None)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--methods", default="ours,lexicographic")
    p.add_argument("--timeout", type=float, default=600.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=int, default=1000)
    p.add_argument("--backend", choices=("exact", "verifier"), default="exact")
    p.add_argument("--traces", default=None, help="size-over-time CSV path")
    p.add_argument("--progress", default=None, help="processed-features CSV path")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen-model", help="write a synthetic model file")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--hidden", default="64,64,32")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--task", default="binary")
    p.add_argument("--classes", type=int, default=1)
    p.add_argument("--intercept", type=float, default=None)
    p.add_argument("--pair-shift", type=float, default=None)
    p.add_argument("--spike-feature", type=int, default=None)
    p.add_argument("--spike-center", type=float, default=0.5)
    p.add_argument("--spike-halfwidth", type=float, default=1e-4)
    p.add_argument("--spike-depth", type=float, default=5.0)
    p.add_argument("--preset", choices=("linear2", "adversarial"), default=None)
    p.set_defaults(func=cmd_gen_model)

    p = sub.add_parser("export-plot", help="component curve + certified extrema as CSV")
    _add_common(p)
    p.add_argument("--feature", type=int, required=True)
    p.add_argument("--grid", type=int, default=1000)
    p.set_defaults(func=cmd_export_plot)

    p = sub.add_parser("ablate", help="parameter sweeps")
    p.add_argument("kind", choices=("epsilon", "xi", "procs"))
    p.add_argument("--model", default=None)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--no-clamp", action="store_true")
    p.add_argument("--epsilons", default="0.01,0.1,0.2,0.5")
    p.add_argument("--max-exponent", type=int, default=7)
    p.add_argument("--procs", type=int, default=1)
    p.add_argument("--procs-list", default="1,2,4,8")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=100_000)
    p.add_argument("--values", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--index", type=int, default=None)
    p.add_argument("--label-column", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"namc: usage error: {exc}\n")
        return EXIT_USAGE
    except BudgetExceededError as exc:
        sys.stderr.write(f"namc: verifier budget exhausted: {exc}\n")
        return EXIT_BUDGET
    except (ModelFormatError, FileNotFoundError) as exc:
        sys.stderr.write(f"namc: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
