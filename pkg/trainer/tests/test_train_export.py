import json

import numpy as np
import pytest
import torch

from namtrain import TrainConfig, train, train_and_export
from namtrain.export import model_json

TINY = dict(hidden=(8,), epochs=3, batch_size=32)


def small_csv(tmp_path, with_constant=False):
    p = tmp_path / "toy.csv"
    rng = np.random.default_rng(0)
    rows = ["a,b,c,y"]
    for _ in range(120):
        a, b = rng.uniform(0, 1, 2)
        c = 5.0 if with_constant else rng.uniform(0, 1)
        y = int(a + b > 1.0)
        rows.append(f"{a},{b},{c},{y}")
    p.write_text("\n".join(rows) + "\n")
    return str(p)


class TestTraining:
    def test_deterministic_given_seed(self, tmp_path):
        path = small_csv(tmp_path)
        outs = []
        for run in range(2):
            out = tmp_path / f"m{run}.json"
            train_and_export(
                TrainConfig(dataset=path, label_column="y", seed=11, **TINY), str(out)
            )
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_constant_feature_exports_cleanly(self, tmp_path):
        path = small_csv(tmp_path, with_constant=True)
        out = tmp_path / "m.json"
        metrics = train_and_export(TrainConfig(dataset=path, label_column="y", **TINY), str(out))
        obj = json.loads(out.read_text())
        assert obj["feature_meta"]["normalization"][2]["zero_range"] is True
        assert metrics["export_parity_max_abs"] <= 1e-5

    def test_divergence_raises(self, tmp_path):
        from namtrain import TrainingDivergedError

        path = small_csv(tmp_path)
        cfg = TrainConfig(dataset=path, label_column="y", learning_rate=1e18, hidden=(8,), epochs=3)
        with pytest.raises(TrainingDivergedError):
            train(cfg)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(test_fraction=1.5)
        with pytest.raises(ValueError):
            TrainConfig(hidden=())


class TestExportFormat:
    def test_schema_fields(self, tmp_path):
        path = small_csv(tmp_path)
        model, dataset, _, _ = train(TrainConfig(dataset=path, label_column="y", **TINY))
        obj = model_json(model, dataset)
        assert obj["version"] == 1
        assert obj["task"] == "binary"
        assert obj["n_classes"] == 1
        assert len(obj["components"][0]) == obj["n_features"] == 3
        # hidden (8,) -> two affine layers per component
        assert all(len(c["layers"]) == 2 for c in obj["components"][0])

    def test_float64_export_matches_torch_closely(self, tmp_path):
        path = small_csv(tmp_path)
        out = tmp_path / "m.json"
        metrics = train_and_export(TrainConfig(dataset=path, label_column="y", **TINY), str(out))
        assert metrics["export_parity_max_abs"] <= 1e-5


class TestPrimaryLoaderBoundary:
    """The exported file is consumed through the explanation toolkit's public
    loader; this is the only coupling between the two packages."""

    def test_export_validates_and_predicts(self, tmp_path):
        namcert = pytest.importorskip("namcert")
        path = small_csv(tmp_path)
        out = tmp_path / "m.json"
        cfg = TrainConfig(dataset=path, label_column="y", seed=3, **TINY)
        train_and_export(cfg, str(out))
        loaded = namcert.load_model(str(out))

        model, dataset, _, test_idx = train(cfg)
        rows = dataset.features[test_idx][:50]
        with torch.no_grad():
            logits = model(torch.from_numpy(rows)).numpy()
        for row, logit in zip(rows, logits):
            margin = namcert.predict(loaded, tuple(float(v) for v in row)).margins[0]
            assert margin == pytest.approx(float(logit), abs=1e-5)
