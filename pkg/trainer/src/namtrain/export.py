"""Model-JSON export: writes trained parameters as float64 in the schema the
explanation toolkit loads (version 1, one output head, per-feature layer
lists, normalization metadata embedded)."""

from __future__ import annotations

import json

import numpy as np
import torch

from .data import Dataset


def _net_layers(feature_net) -> list[dict]:
    layers = []
    for module in feature_net.net:
        if isinstance(module, torch.nn.Linear):
            w = module.weight.detach().numpy().astype(np.float64)
            b = module.bias.detach().numpy().astype(np.float64)
            layers.append(
                {
                    "weights": [[float(v) for v in row] for row in w],
                    "bias": [float(v) for v in b],
                }
            )
    return layers


def model_json(model, dataset: Dataset) -> dict:
    components = [{"layers": _net_layers(net)} for net in model.feature_nets]
    return {
        "version": 1,
        "task": "binary",
        "n_features": len(components),
        "n_classes": 1,
        "intercepts": [float(model.intercept.detach().numpy()[0])],
        "components": [components],
        "feature_meta": {
            "names": list(dataset.feature_names),
            "domains": [[0.0, 1.0] for _ in components],
            "normalization": [dict(n) for n in dataset.normalization],
        },
    }


def export_model(model, dataset: Dataset, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_json(model, dataset), fh, allow_nan=False, separators=(",", ":"))
        fh.write("\n")
