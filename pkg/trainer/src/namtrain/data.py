"""Dataset loading: the bundled Breast Cancer benchmark plus generic
numeric CSVs, min-max normalized to [0, 1] with the parameters recorded for
embedding into exported models."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np


class DatasetMissingError(FileNotFoundError):
    pass


@dataclass(frozen=True)
class Dataset:
    name: str
    features: np.ndarray  # float32, normalized to [0, 1]
    labels: np.ndarray  # float32 {0, 1} for classification
    feature_names: tuple[str, ...]
    normalization: tuple[dict, ...]  # per-feature {min, max, zero_range}

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def _normalize(raw: np.ndarray, names) -> tuple[np.ndarray, tuple[dict, ...]]:
    mins = raw.min(axis=0)
    maxs = raw.max(axis=0)
    span = maxs - mins
    zero = span == 0
    safe = np.where(zero, 1.0, span)
    normalized = (raw - mins) / safe
    normalized[:, zero] = 0.0
    norms = tuple(
        {"min": float(mins[j]), "max": float(maxs[j]), "zero_range": bool(zero[j])}
        for j in range(raw.shape[1])
    )
    return normalized.astype(np.float32), norms


def load_breast_cancer() -> Dataset:
    from sklearn.datasets import load_breast_cancer as _load

    bundle = _load()
    features, norms = _normalize(np.asarray(bundle.data, dtype=np.float64), bundle.feature_names)
    return Dataset(
        name="breast-cancer",
        features=features,
        labels=np.asarray(bundle.target, dtype=np.float32),
        feature_names=tuple(str(n) for n in bundle.feature_names),
        normalization=norms,
    )


def load_csv(path: str, label_column: str) -> Dataset:
    if not os.path.exists(path):
        raise DatasetMissingError(f"dataset file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row]
    if label_column not in header:
        raise ValueError(f"label column {label_column!r} not in header {header}")
    label_idx = header.index(label_column)
    feature_names = tuple(c for c in header if c != label_column)
    feature_idx = [header.index(c) for c in feature_names]
    try:
        raw = np.array([[float(row[j]) for j in feature_idx] for row in rows], dtype=np.float64)
        labels = np.array([float(row[label_idx]) for row in rows], dtype=np.float32)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric cell ({exc})") from exc
    features, norms = _normalize(raw, feature_names)
    return Dataset(
        name=os.path.basename(path),
        features=features,
        labels=labels,
        feature_names=feature_names,
        normalization=norms,
    )


def load(dataset: str, label_column: str | None = None) -> Dataset:
    if dataset == "breast-cancer":
        return load_breast_cancer()
    if label_column is None:
        raise ValueError("generic CSV datasets need a label column")
    return load_csv(dataset, label_column)
