"""Synthetic model construction: seeded random models, hand-shaped fixtures,
near-identical feature pairs for precision ablations, and sampling-adversarial
spike components."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    FeatureMeta,
    NamModel,
    TASK_BINARY,
    TASK_MULTICLASS,
    TASK_REGRESSION,
    UnivariateNet,
    default_meta,
    forward_component,
    linear_net,
)

DEFAULT_HIDDEN = (64, 64, 32)


@dataclass(frozen=True)
class SpikeParams:
    """Downward triangular dip: three rectifier kinks at center += halfwidth."""

    feature: int
    center: float
    halfwidth: float
    depth: float
    base_value: float = 0.0


@dataclass(frozen=True)
class SyntheticSpec:
    n_features: int
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    seed: int = 0
    task: str = TASK_BINARY
    n_classes: int = 1
    weight_scale: float = 1.0
    intercept: float | None = None
    pair_bias_shift: float | None = None  # features 0 and 1 become the shifted pair
    spike: SpikeParams | None = None

    def __post_init__(self):
        if self.n_features < 1:
            raise ValueError("need at least one feature")
        if self.pair_bias_shift is not None and self.n_features < 2:
            raise ValueError("the near-identical pair needs two features")
        if self.spike is not None and not (0 <= self.spike.feature < self.n_features):
            raise ValueError("spike feature out of range")


def random_component(rng: np.random.Generator, hidden: tuple[int, ...], scale: float = 1.0) -> UnivariateNet:
    """Random net whose first-layer kinks land inside [0, 1]."""
    layers = []
    fan_in = 1
    for k, width in enumerate(hidden):
        if k == 0:
            w = rng.normal(0.0, 4.0 * scale, size=(width, 1))
            b = -w[:, 0] * rng.uniform(0.0, 1.0, size=width)
        else:
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(width, fan_in))
            b = rng.normal(0.0, 0.1, size=width)
        layers.append((w, b))
        fan_in = width
    w_out = rng.normal(0.0, scale / np.sqrt(fan_in), size=(1, fan_in))
    b_out = rng.normal(0.0, 0.1, size=1)
    layers.append((w_out, b_out))
    return UnivariateNet(tuple(layers))


def hinge_component(slope: float = 40.0, kink: float = 0.25, pre_bias: float = 0.0) -> UnivariateNet:
    """ReLU(slope * (z - kink) + pre_bias): minimum clamps to 0 left of the
    kink, so a pre-activation bias shift moves the unperturbed value but not
    the minimum, shifting the deviation by exactly the bias."""
    return UnivariateNet.from_lists(
        [([[slope]], [-slope * kink + pre_bias]), ([[1.0]], [0.0])]
    )


def spike_component(params: SpikeParams) -> UnivariateNet:
    """base - depth * ReLU(1 - |z - center| / halfwidth)."""
    c, h = params.center, params.halfwidth
    return UnivariateNet.from_lists(
        [
            ([[1.0], [-1.0]], [-c, c]),
            ([[-1.0 / h, -1.0 / h]], [1.0]),
            ([[-params.depth]], [params.base_value]),
        ]
    )


def spike_between_grid(lo: float, hi: float, grid: int = 1000, slot: int | None = None) -> tuple[float, float]:
    """Center and half-width of a dip strictly between two adjacent points of
    the ``grid``-point arithmetic progression on [lo, hi]."""
    if grid < 2 or hi <= lo:
        raise ValueError("need a non-degenerate interval and >= 2 grid points")
    spacing = (hi - lo) / (grid - 1)
    if slot is None:
        slot = (grid - 1) // 2
    center = lo + (slot + 0.5) * spacing
    return center, 0.25 * spacing


def gen_model(spec: SyntheticSpec) -> NamModel:
    """Deterministic model from the seed; optional shaped features 0/1
    (near-identical pair) and a spike component."""
    rng = np.random.default_rng(spec.seed)
    n_heads = spec.n_classes if spec.task == TASK_MULTICLASS else 1
    heads = []
    for _ in range(n_heads):
        comps = [random_component(rng, spec.hidden, spec.weight_scale) for _ in range(spec.n_features)]
        heads.append(comps)
    if spec.pair_bias_shift is not None:
        heads[0][0] = hinge_component()
        heads[0][1] = hinge_component(pre_bias=spec.pair_bias_shift)
    if spec.spike is not None:
        heads[0][spec.spike.feature] = spike_component(spec.spike)
    if spec.intercept is not None:
        intercepts = tuple(float(spec.intercept) for _ in range(n_heads))
    else:
        intercepts = tuple(float(v) for v in rng.normal(0.0, 0.5, size=n_heads))
    return NamModel(
        task=spec.task,
        intercepts=intercepts,
        components=tuple(tuple(h) for h in heads),
        feature_meta=default_meta(spec.n_features),
    )


def random_instance(rng: np.random.Generator, model: NamModel, margin_lo: float = 0.1) -> tuple[float, ...]:
    lo_pad = margin_lo
    return tuple(
        float(rng.uniform(lo + lo_pad * (hi - lo), hi - lo_pad * (hi - lo)))
        for lo, hi in model.feature_meta.domains
    )


def two_feature_fixture() -> tuple[NamModel, tuple[float, float], float]:
    """Two linear components (2z and z) with intercept -0.2; domains wide
    enough that an epsilon=0.2 ball around (0.3, 0.1) is never clamped."""
    model = NamModel(
        task=TASK_BINARY,
        intercepts=(-0.2,),
        components=((linear_net(2.0), linear_net(1.0)),),
        feature_meta=FeatureMeta(names=("f0", "f1"), domains=((-1.0, 1.0), (-1.0, 1.0))),
    )
    return model, (0.3, 0.1), 0.2


def xi_pair_model(shift: float) -> tuple[NamModel, tuple[float, float], float]:
    """Two hinge features whose deviations differ by exactly ``shift``;
    drives the near-identical-feature precision ablation."""
    model = NamModel(
        task=TASK_BINARY,
        intercepts=(-15.0,),
        components=((hinge_component(), hinge_component(pre_bias=shift)),),
        feature_meta=default_meta(2),
    )
    return model, (0.5, 0.5), 0.3


def adversarial_order_model(n_small: int = 9) -> tuple[NamModel, tuple[float, ...], float]:
    """One decisive feature placed first with modest sensitivity, many weak
    features with large upward swings: lexicographic and ascending-sensitivity
    removal both drop the decisive feature early and end far from the
    cardinal minimum (which is exactly that single feature)."""
    decisive = linear_net(-20.0, 10.0)  # 0 at x=0.5, deviation 10, swing 10
    weak = UnivariateNet.from_lists(
        [
            ([[-1.0], [1.0]], [0.5, -0.5]),
            ([[40.0, -2.0]], [0.0]),  # up to +20 leftward, down to -1 rightward
        ]
    )
    comps = (decisive,) + tuple(weak for _ in range(n_small))
    model = NamModel(
        task=TASK_BINARY,
        intercepts=(10.5,),
        components=(comps,),
        feature_meta=default_meta(1 + n_small),
    )
    x = tuple(0.5 for _ in range(1 + n_small))
    return model, x, 0.5


def spike_bench_model(seed: int, n_features: int = 5, grid: int = 1000) -> tuple[NamModel, tuple[float, ...], float]:
    """Model whose prediction certifiably depends on a spike feature that the
    sampling grid cannot see: the dip (depth > margin) sits strictly between
    grid points of feature 0's perturbation interval."""
    rng = np.random.default_rng(seed)
    eps = 0.3
    x = tuple(float(v) for v in rng.uniform(0.35, 0.65, size=n_features))
    lo, hi = max(0.0, x[0] - eps), min(1.0, x[0] + eps)
    slot = int(rng.integers(1, grid - 2))
    center, halfwidth = spike_between_grid(lo, hi, grid, slot)
    depth = 5.0
    comps = [spike_component(SpikeParams(0, center, halfwidth, depth))]
    for _ in range(n_features - 1):
        comps.append(random_component(rng, (8, 8), scale=0.4))
    target_margin = float(rng.uniform(0.8, 1.5))
    partial = sum(forward_component(c, x[i]) for i, c in enumerate(comps))
    model = NamModel(
        task=TASK_BINARY,
        intercepts=(target_margin - partial,),
        components=(tuple(comps),),
        feature_meta=default_meta(n_features),
    )
    return model, x, eps


def random_binary_case(seed: int, n_lo: int = 4, n_hi: int = 12, hidden: tuple[int, ...] = (8, 8)):
    """Seeded (model, x, epsilon) triple for property and acceptance batches."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_lo, n_hi + 1))
    comps = tuple(random_component(rng, hidden) for _ in range(n))
    intercept = float(rng.normal(0.0, 0.5))
    model = NamModel(TASK_BINARY, (intercept,), (comps,), default_meta(n))
    x = random_instance(rng, model)
    eps = 0.1 if seed % 2 == 0 else 0.3
    return model, x, eps
