"""Additive-model training: one small ReLU MLP per feature, a learnable
intercept, and a summed logit.  Trains in float32, exports in float64."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .data import Dataset, load
from .export import export_model


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    dataset: str = "breast-cancer"
    label_column: str | None = None
    hidden: tuple[int, ...] = (64, 64, 32)
    epochs: int = 60
    learning_rate: float = 1e-3
    batch_size: int = 64
    seed: int = 0
    test_fraction: float = 0.2
    weight_decay: float = 1e-5

    def __post_init__(self):
        if not (0.0 < self.test_fraction < 1.0):
            raise ValueError("test_fraction must be in (0, 1)")
        if not self.hidden:
            raise ValueError("hidden widths must be nonempty")


class FeatureNet(nn.Module):
    def __init__(self, hidden: tuple[int, ...]):
        super().__init__()
        layers = []
        fan = 1
        for width in hidden:
            layers.append(nn.Linear(fan, width))
            layers.append(nn.ReLU())
            fan = width
        layers.append(nn.Linear(fan, 1))
        self.net = nn.Sequential(*layers)

    def forward(self, z):  # z: (batch, 1)
        return self.net(z)


class AdditiveModel(nn.Module):
    def __init__(self, n_features: int, hidden: tuple[int, ...]):
        super().__init__()
        self.feature_nets = nn.ModuleList(FeatureNet(hidden) for _ in range(n_features))
        self.intercept = nn.Parameter(torch.zeros(1))

    def forward(self, x):  # x: (batch, n_features)
        logit = self.intercept.expand(x.shape[0]).clone()
        for i, net in enumerate(self.feature_nets):
            logit = logit + net(x[:, i : i + 1]).squeeze(-1)
        return logit


def _split(dataset: Dataset, fraction: float, rng: np.random.Generator):
    n = dataset.features.shape[0]
    perm = rng.permutation(n)
    n_test = max(1, int(round(n * fraction)))
    test_idx, train_idx = perm[:n_test], perm[n_test:]
    return train_idx, test_idx


def train(config: TrainConfig) -> tuple[AdditiveModel, Dataset, dict, np.ndarray]:
    """Train on the configured dataset; returns the model, the dataset, the
    metrics dict, and the held-out row indices."""
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    dataset = load(config.dataset, config.label_column)
    train_idx, test_idx = _split(dataset, config.test_fraction, rng)

    x_train = torch.from_numpy(dataset.features[train_idx])
    y_train = torch.from_numpy(dataset.labels[train_idx])
    x_test = torch.from_numpy(dataset.features[test_idx])
    y_test = torch.from_numpy(dataset.labels[test_idx])

    model = AdditiveModel(dataset.n_features, config.hidden)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay)
    loss_fn = nn.BCEWithLogitsLoss()

    n_train = x_train.shape[0]
    last_loss = math.nan
    for _ in range(config.epochs):
        order = torch.from_numpy(rng.permutation(n_train))
        for start in range(0, n_train, config.batch_size):
            batch = order[start : start + config.batch_size]
            optimizer.zero_grad()
            logits = model(x_train[batch])
            loss = loss_fn(logits, y_train[batch])
            if not torch.isfinite(loss):
                raise TrainingDivergedError(f"loss became {loss.item()}")
            loss.backward()
            optimizer.step()
            last_loss = float(loss.item())

    model.eval()
    with torch.no_grad():
        train_acc = float(((model(x_train) >= 0).float() == y_train).float().mean())
        test_acc = float(((model(x_test) >= 0).float() == y_test).float().mean())
    metrics = {
        "dataset": dataset.name,
        "seed": config.seed,
        "epochs": config.epochs,
        "hidden": list(config.hidden),
        "n_train": int(n_train),
        "n_test": int(x_test.shape[0]),
        "final_loss": last_loss,
        "train_accuracy": train_acc,
        "test_accuracy": test_acc,
    }
    return model, dataset, metrics, test_idx


def train_and_export(config: TrainConfig, model_path: str, metrics_path: str | None = None) -> dict:
    """Full pipeline: train, export the model JSON (float64 parameters plus
    normalization metadata), and verify export/reload logit parity on held-out
    rows by re-reading the written file."""
    model, dataset, metrics, test_idx = train(config)
    export_model(model, dataset, model_path)

    rows = dataset.features[test_idx][:100]
    with torch.no_grad():
        torch_logits = model(torch.from_numpy(rows)).numpy()
    exported_logits = _exported_logits(model_path, rows)
    parity = float(np.max(np.abs(torch_logits - exported_logits))) if len(rows) else 0.0
    metrics["parity_rows"] = int(len(rows))
    metrics["export_parity_max_abs"] = parity
    if metrics_path:
        with open(metrics_path, "w", encoding="utf-8") as fh:
            json.dump(metrics, fh, indent=1)
    return metrics


def _exported_logits(model_path: str, rows: np.ndarray) -> np.ndarray:
    """Evaluate the written file with a plain float64 reader so the parity
    check exercises the file format, not the in-memory model."""
    with open(model_path, encoding="utf-8") as fh:
        obj = json.load(fh)
    intercept = float(obj["intercepts"][0])
    comps = obj["components"][0]
    out = np.zeros(len(rows), dtype=np.float64)
    for r, row in enumerate(rows):
        total = intercept
        for i, comp in enumerate(comps):
            h = np.array([float(row[i])], dtype=np.float64)
            layers = comp["layers"]
            for k, layer in enumerate(layers):
                w = np.asarray(layer["weights"], dtype=np.float64)
                b = np.asarray(layer["bias"], dtype=np.float64)
                h = w @ h + b
                if k != len(layers) - 1:
                    np.maximum(h, 0.0, out=h)
            total += float(h[0])
        out[r] = total
    return out
