"""Trainer acceptance: Breast Cancer accuracy floor, primary-loader
validation, and export/reload logit parity on held-out rows."""

import numpy as np
import pytest
import torch

from namtrain import TrainConfig, train, train_and_export


@pytest.fixture(scope="module")
def breast_cancer_run(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("bc")
    model_path = out_dir / "breast_cancer_nam.json"
    metrics_path = out_dir / "metrics.json"
    config = TrainConfig(dataset="breast-cancer", seed=0, epochs=40)
    metrics = train_and_export(config, str(model_path), str(metrics_path))
    return config, str(model_path), metrics


def test_accuracy_floor(breast_cancer_run):
    _, _, metrics = breast_cancer_run
    print(f"\nACCEPTANCE trainer accuracy: test={metrics['test_accuracy']:.4f} (floor 0.90)")
    assert metrics["test_accuracy"] >= 0.90


def test_export_validates_against_primary_loader(breast_cancer_run):
    namcert = pytest.importorskip("namcert")
    _, model_path, _ = breast_cancer_run
    model = namcert.load_model(model_path)
    assert model.task == "binary"
    assert model.n_features == 30
    assert model.feature_meta.normalization is not None


def test_logit_parity_on_100_rows(breast_cancer_run):
    namcert = pytest.importorskip("namcert")
    config, model_path, metrics = breast_cancer_run
    assert metrics["parity_rows"] == 100
    assert metrics["export_parity_max_abs"] <= 1e-5

    model, dataset, _, test_idx = train(config)
    loaded = namcert.load_model(model_path)
    rows = dataset.features[test_idx][:100]
    with torch.no_grad():
        logits = model(torch.from_numpy(rows)).numpy()
    worst = 0.0
    for row, logit in zip(rows, logits):
        margin = namcert.predict(loaded, tuple(float(v) for v in row)).margins[0]
        worst = max(worst, abs(margin - float(logit)))
    print(f"ACCEPTANCE trainer parity: max |Δlogit| = {worst:.2e} over 100 rows (tolerance 1e-5)")
    assert worst <= 1e-5
