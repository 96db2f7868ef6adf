"""Neural additive model data types, exact forward evaluation, and file I/O.

A model is an intercept plus one univariate ReLU network per (output, feature)
pair.  Binary margins, multi-class logits and regression values all reduce to
the same accumulation: intercept + sum of component outputs, accumulated
left-to-right over ascending feature index so results are bit-reproducible.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

TASK_BINARY = "binary"
TASK_MULTICLASS = "multiclass"
TASK_REGRESSION = "regression"

MODEL_FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """Raised when a model file violates the schema; message names the offending path."""


class DatasetError(ValueError):
    """Raised for malformed dataset files (non-numeric cells, missing columns)."""


@dataclass(frozen=True)
class UnivariateNet:
    """One feature's scalar-to-scalar ReLU MLP.

    ``layers`` is an ordered list of (weight matrix, bias vector); a rectifier
    follows every layer except the last.  First in-width and last out-width
    are 1.
    """

    layers: tuple[tuple[np.ndarray, np.ndarray], ...]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("net needs at least one layer")
        prev = 1
        for k, (w, b) in enumerate(self.layers):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {k}: weight {w.shape} / bias {b.shape} mismatch")
            if w.shape[1] != prev:
                raise ValueError(f"layer {k}: in-width {w.shape[1]} != previous out-width {prev}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {k}: non-finite parameter")
            w.setflags(write=False)
            b.setflags(write=False)
            prev = w.shape[0]
        if prev != 1:
            raise ValueError(f"last layer out-width {prev} != 1")

    @property
    def depth(self) -> int:
        return len(self.layers)

    @staticmethod
    def from_lists(layers: Iterable[tuple[Sequence[Sequence[float]], Sequence[float]]]) -> "UnivariateNet":
        return UnivariateNet(
            tuple((np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64)) for w, b in layers)
        )


def forward_component(net: UnivariateNet, z: float) -> float:
    """Exact forward pass of one univariate component at scalar ``z``."""
    h = np.array([float(z)], dtype=np.float64)
    last = net.depth - 1
    for k, (w, b) in enumerate(net.layers):
        h = w @ h + b
        if k != last:
            np.maximum(h, 0.0, out=h)
    return float(h[0])


def identity_net() -> UnivariateNet:
    """Single affine layer computing z -> z."""
    return UnivariateNet.from_lists([([[1.0]], [0.0])])


def linear_net(weight: float, bias: float = 0.0) -> UnivariateNet:
    return UnivariateNet.from_lists([([[weight]], [bias])])


def relu_net() -> UnivariateNet:
    """Two layers computing z -> max(z, 0)."""
    return UnivariateNet.from_lists([([[1.0]], [0.0]), ([[1.0]], [0.0])])


def mirror_net(net: UnivariateNet) -> UnivariateNet:
    """Net computing -f(z); negates the final affine layer."""
    w, b = net.layers[-1]
    return UnivariateNet(net.layers[:-1] + ((-w, -b),))


def shift_net(net: UnivariateNet, offset: float) -> UnivariateNet:
    """Net computing f(z) + offset."""
    w, b = net.layers[-1]
    return UnivariateNet(net.layers[:-1] + ((w, b + offset),))


def _pad_depth(net: UnivariateNet, target_depth: int) -> UnivariateNet:
    """Function-preserving depth padding.

    A single-affine net is first split at the input into (z+, z-) so the new
    hidden layer tolerates the rectifier; deeper nets gain identity layers
    right after layer 0, whose post-ReLU outputs are nonnegative so an
    identity affine followed by ReLU is exact.
    """
    if net.depth >= target_depth:
        return net
    layers = list(net.layers)
    if len(layers) == 1:
        (w, b) = layers[0]
        split = (np.array([[1.0], [-1.0]]), np.zeros(2))
        recombine = (np.hstack([w, -w]), b)
        layers = [split, recombine]
    while len(layers) < target_depth:
        width = layers[0][0].shape[0]
        layers.insert(1, (np.eye(width), np.zeros(width)))
    return UnivariateNet(tuple(layers))


def stack_difference(net_a: UnivariateNet, net_b: UnivariateNet) -> UnivariateNet:
    """Single net computing net_a(z) - net_b(z).

    Both nets read the shared scalar input, run side by side block-diagonally,
    and the final affine layers are merged with output weights +1 / -1.
    """
    depth = max(net_a.depth, net_b.depth)
    a = _pad_depth(net_a, depth)
    b = _pad_depth(net_b, depth)
    if depth == 1:
        (wa, ba), (wb, bb) = a.layers[0], b.layers[0]
        return UnivariateNet(((wa - wb, ba - bb),))
    layers = []
    wa0, ba0 = a.layers[0]
    wb0, bb0 = b.layers[0]
    layers.append((np.vstack([wa0, wb0]), np.concatenate([ba0, bb0])))
    for k in range(1, depth - 1):
        wa, ba = a.layers[k]
        wb, bb = b.layers[k]
        w = np.zeros((wa.shape[0] + wb.shape[0], wa.shape[1] + wb.shape[1]))
        w[: wa.shape[0], : wa.shape[1]] = wa
        w[wa.shape[0] :, wa.shape[1] :] = wb
        layers.append((w, np.concatenate([ba, bb])))
    wa, ba = a.layers[-1]
    wb, bb = b.layers[-1]
    layers.append((np.hstack([wa, -wb]), ba - bb))
    return UnivariateNet(tuple(layers))


@dataclass(frozen=True)
class FeatureMeta:
    names: tuple[str, ...]
    domains: tuple[tuple[float, float], ...]
    normalization: tuple[dict, ...] | None = None

    def __post_init__(self):
        if len(self.names) != len(self.domains):
            raise ValueError("names/domains length mismatch")
        for lo, hi in self.domains:
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise ValueError(f"bad feature domain [{lo}, {hi}]")


def default_meta(n: int, lo: float = 0.0, hi: float = 1.0) -> FeatureMeta:
    return FeatureMeta(
        names=tuple(f"f{i}" for i in range(n)),
        domains=tuple((lo, hi) for _ in range(n)),
    )


@dataclass(frozen=True)
class NamModel:
    """Additive model: per-output intercept plus per-(output, feature) nets.

    ``components[c][i]`` is the net for output head c and feature i.  Binary
    and regression models have a single head; multi-class has one per class.
    """

    task: str
    intercepts: tuple[float, ...]
    components: tuple[tuple[UnivariateNet, ...], ...]
    feature_meta: FeatureMeta

    def __post_init__(self):
        if self.task not in (TASK_BINARY, TASK_MULTICLASS, TASK_REGRESSION):
            raise ValueError(f"unknown task {self.task!r}")
        if len(self.components) != len(self.intercepts):
            raise ValueError("one intercept per output head required")
        if self.task == TASK_MULTICLASS and len(self.components) < 2:
            raise ValueError("multiclass needs >= 2 classes")
        if self.task != TASK_MULTICLASS and len(self.components) != 1:
            raise ValueError(f"{self.task} model must have exactly one output head")
        n = self.n_features
        if n < 1:
            raise ValueError("model needs >= 1 feature")
        for c, row in enumerate(self.components):
            if len(row) != n:
                raise ValueError(f"output {c} has {len(row)} components, expected {n}")
        if len(self.feature_meta.names) != n:
            raise ValueError("feature_meta length mismatch")
        for b0 in self.intercepts:
            if not math.isfinite(b0):
                raise ValueError("non-finite intercept")

    @property
    def n_features(self) -> int:
        return len(self.components[0])

    @property
    def n_outputs(self) -> int:
        return len(self.components)

    def margin(self, x: Sequence[float], output: int = 0) -> float:
        """intercept + sum of component outputs, left-to-right over features."""
        total = float(self.intercepts[output])
        for i, net in enumerate(self.components[output]):
            total += forward_component(net, x[i])
        return total


@dataclass(frozen=True)
class Instance:
    values: tuple[float, ...]
    label: float | None = None

    def __post_init__(self):
        for v in self.values:
            if not math.isfinite(v):
                raise ValueError("non-finite instance value")


def check_instance(model: NamModel, x: Sequence[float]) -> None:
    if len(x) != model.n_features:
        raise ValueError(f"instance length {len(x)} != n_features {model.n_features}")
    for i, v in enumerate(x):
        lo, hi = model.feature_meta.domains[i]
        if not (lo - 1e-12 <= v <= hi + 1e-12):
            raise ValueError(f"feature {i} value {v} outside domain [{lo}, {hi}]")


@dataclass(frozen=True)
class Prediction:
    kind: str  # "class" or "value"
    output: float  # class index or regression value
    margins: tuple[float, ...]  # binary: (margin,); multiclass: logits; regression: (value,)


def predict(model: NamModel, x: Sequence[float] | Instance) -> Prediction:
    """Evaluate the model: class 1 iff margin >= 0 (binary), argmax with
    lowest-index tie-break (multiclass), raw value (regression)."""
    values = x.values if isinstance(x, Instance) else tuple(x)
    if len(values) != model.n_features:
        raise ValueError(f"instance length {len(values)} != n_features {model.n_features}")
    if model.task == TASK_BINARY:
        m = model.margin(values)
        return Prediction("class", 1.0 if m >= 0.0 else 0.0, (m,))
    if model.task == TASK_MULTICLASS:
        logits = tuple(model.margin(values, c) for c in range(model.n_outputs))
        best = 0
        for c in range(1, len(logits)):
            if logits[c] > logits[best]:
                best = c
        return Prediction("class", float(best), logits)
    v = model.margin(values)
    return Prediction("value", v, (v,))


def reduce_pairwise(model: NamModel, winner: int, rival: int) -> NamModel:
    """Binary model whose margin is logit(winner) - logit(rival)."""
    if model.task != TASK_MULTICLASS:
        raise ValueError("pairwise reduction applies to multiclass models")
    c = model.n_outputs
    if not (0 <= winner < c and 0 <= rival < c):
        raise IndexError(f"class index out of range (c={c})")
    if winner == rival:
        raise ValueError("winner and rival must differ")
    comps = tuple(
        stack_difference(model.components[winner][i], model.components[rival][i])
        for i in range(model.n_features)
    )
    return NamModel(
        task=TASK_BINARY,
        intercepts=(model.intercepts[winner] - model.intercepts[rival],),
        components=(comps,),
        feature_meta=model.feature_meta,
    )


def reduce_regression(model: NamModel, x: Sequence[float], delta: float, side: str) -> NamModel:
    """Binary-margin form of a regression stability query.

    side="lower": margin = f(z) - (f(x) - delta), class 1 iff f stays above
    f(x) - delta.  side="upper": margin = (f(x) + delta) - f(z).
    """
    if model.task != TASK_REGRESSION:
        raise ValueError("regression reduction applies to regression models")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    v0 = model.margin(tuple(x))
    if side == "lower":
        comps = model.components[0]
        intercept = model.intercepts[0] - (v0 - delta)
    elif side == "upper":
        comps = tuple(mirror_net(net) for net in model.components[0])
        intercept = (v0 + delta) - model.intercepts[0]
    else:
        raise ValueError(f"unknown side {side!r}")
    return NamModel(TASK_BINARY, (intercept,), (comps,), model.feature_meta)


@dataclass(frozen=True)
class PerturbationSpec:
    """Per-coordinate (l-infinity) ball of radius epsilon, optionally clamped
    to each feature's declared domain."""

    epsilon: float
    norm: str = "linf"
    clamp_to_domain: bool = True

    def __post_init__(self):
        if self.epsilon < 0 or not math.isfinite(self.epsilon):
            raise ValueError("epsilon must be a finite nonnegative scalar")
        if self.norm != "linf":
            raise ValueError("only per-coordinate (linf) balls factorize across features")

    def interval(self, x_i: float, domain: tuple[float, float]) -> tuple[float, float]:
        lo, hi = x_i - self.epsilon, x_i + self.epsilon
        if self.clamp_to_domain:
            lo, hi = max(lo, domain[0]), min(hi, domain[1])
        if lo > hi:
            raise ValueError(f"empty perturbation interval around {x_i} in {domain}")
        return lo, hi


def feature_intervals(model: NamModel, x: Sequence[float], spec: PerturbationSpec) -> list[tuple[float, float]]:
    return [spec.interval(x[i], model.feature_meta.domains[i]) for i in range(model.n_features)]


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------


def _net_to_json(net: UnivariateNet) -> dict:
    return {
        "layers": [
            {"weights": [[float(v) for v in row] for row in w], "bias": [float(v) for v in b]}
            for w, b in net.layers
        ]
    }


def _net_from_json(obj: dict, path: str) -> UnivariateNet:
    if not isinstance(obj, dict) or "layers" not in obj:
        raise ModelFormatError(f"{path}: expected object with 'layers'")
    layers = []
    prev = 1
    for k, layer in enumerate(obj["layers"]):
        lpath = f"{path}.layers[{k}]"
        if not isinstance(layer, dict) or "weights" not in layer or "bias" not in layer:
            raise ModelFormatError(f"{lpath}: expected object with 'weights' and 'bias'")
        try:
            w = np.asarray(layer["weights"], dtype=np.float64)
            b = np.asarray(layer["bias"], dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise ModelFormatError(f"{lpath}: non-numeric parameter ({exc})") from exc
        if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
            raise ModelFormatError(f"{lpath}: weight shape {w.shape} / bias shape {b.shape} mismatch")
        if w.shape[1] != prev:
            raise ModelFormatError(f"{lpath}: in-width {w.shape[1]} does not compose with previous out-width {prev}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ModelFormatError(f"{lpath}: non-finite parameter")
        layers.append((w, b))
        prev = w.shape[0]
    if prev != 1:
        raise ModelFormatError(f"{path}: last layer out-width {prev} != 1")
    return UnivariateNet(tuple(layers))


def model_to_json(model: NamModel) -> dict:
    meta: dict = {
        "names": list(model.feature_meta.names),
        "domains": [[lo, hi] for lo, hi in model.feature_meta.domains],
    }
    if model.feature_meta.normalization is not None:
        meta["normalization"] = [dict(d) for d in model.feature_meta.normalization]
    else:
        meta["normalization"] = None
    return {
        "version": MODEL_FORMAT_VERSION,
        "task": model.task,
        "n_features": model.n_features,
        "n_classes": model.n_outputs,
        "intercepts": [float(v) for v in model.intercepts],
        "components": [[_net_to_json(net) for net in row] for row in model.components],
        "feature_meta": meta,
    }


def model_from_json(obj: dict) -> NamModel:
    if not isinstance(obj, dict):
        raise ModelFormatError("$: model file must be a JSON object")
    version = obj.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"$.version: unsupported version {version!r} (supported: {MODEL_FORMAT_VERSION})")
    task = obj.get("task")
    if task not in (TASK_BINARY, TASK_MULTICLASS, TASK_REGRESSION):
        raise ModelFormatError(f"$.task: unknown task {task!r}")
    for key in ("n_features", "n_classes", "intercepts", "components", "feature_meta"):
        if key not in obj:
            raise ModelFormatError(f"$.{key}: missing")
    comps_json = obj["components"]
    if not isinstance(comps_json, list) or len(comps_json) != obj["n_classes"]:
        raise ModelFormatError("$.components: expected n_classes rows")
    components = []
    for c, row in enumerate(comps_json):
        if not isinstance(row, list) or len(row) != obj["n_features"]:
            raise ModelFormatError(f"$.components[{c}]: expected n_features entries")
        components.append(
            tuple(_net_from_json(net, f"$.components[{c}][{i}]") for i, net in enumerate(row))
        )
    intercepts = obj["intercepts"]
    if len(intercepts) != obj["n_classes"]:
        raise ModelFormatError("$.intercepts: expected one per output")
    for c, v in enumerate(intercepts):
        if not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ModelFormatError(f"$.intercepts[{c}]: non-finite or non-numeric")
    meta_json = obj["feature_meta"]
    try:
        norm = meta_json.get("normalization")
        meta = FeatureMeta(
            names=tuple(meta_json["names"]),
            domains=tuple((float(lo), float(hi)) for lo, hi in meta_json["domains"]),
            normalization=tuple(norm) if norm is not None else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"$.feature_meta: {exc}") from exc
    try:
        return NamModel(task, tuple(float(v) for v in intercepts), tuple(components), meta)
    except ValueError as exc:
        raise ModelFormatError(f"$: {exc}") from exc


def save_model(model: NamModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json(model), fh, allow_nan=False, separators=(",", ":"))
        fh.write("\n")


def load_model(path: str) -> NamModel:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"$: invalid JSON ({exc})") from exc
    return model_from_json(obj)


@dataclass(frozen=True)
class ColumnNorm:
    name: str
    min: float
    max: float
    zero_range: bool

    def apply(self, v: float) -> float:
        if self.zero_range:
            return 0.0
        return (v - self.min) / (self.max - self.min)


def load_dataset(
    path: str,
    label_column: str | None = None,
    feature_columns: Sequence[str] | None = None,
) -> tuple[list[Instance], list[ColumnNorm]]:
    """Read a headered numeric CSV and min-max normalize features to [0, 1].

    Constant columns normalize to 0.0 and are flagged ``zero_range``.  Returns
    the instances plus the per-column normalization so it can be embedded into
    saved models.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file, header row required") from None
        rows = [row for row in reader if row]
    if feature_columns is None:
        feature_columns = [c for c in header if c != label_column]
    missing = [c for c in list(feature_columns) + ([label_column] if label_column else []) if c not in header]
    if missing:
        raise DatasetError(f"{path}: missing column(s) {missing}")
    col_idx = {c: header.index(c) for c in header}

    def cell(row, r, col):
        raw = row[col_idx[col]]
        try:
            return float(raw)
        except ValueError:
            raise DatasetError(f"{path}: non-numeric cell {raw!r} at row {r + 2}, column {col!r}") from None

    raw_values = [[cell(row, r, c) for c in feature_columns] for r, row in enumerate(rows)]
    labels = [cell(row, r, label_column) for r, row in enumerate(rows)] if label_column else None

    norms = []
    for j, name in enumerate(feature_columns):
        col = [v[j] for v in raw_values]
        lo, hi = min(col), max(col)
        norms.append(ColumnNorm(name=name, min=lo, max=hi, zero_range=(hi == lo)))
    instances = []
    for r, vals in enumerate(raw_values):
        normalized = tuple(norms[j].apply(v) for j, v in enumerate(vals))
        instances.append(Instance(values=normalized, label=labels[r] if labels else None))
    return instances, norms


def norms_to_meta(norms: Sequence[ColumnNorm]) -> FeatureMeta:
    return FeatureMeta(
        names=tuple(n.name for n in norms),
        domains=tuple((0.0, 1.0) for _ in norms),
        normalization=tuple(
            {"min": n.min, "max": n.max, "zero_range": n.zero_range} for n in norms
        ),
    )
