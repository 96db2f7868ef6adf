import numpy as np
import pytest

from namtrain.data import DatasetMissingError, load, load_breast_cancer, load_csv


def test_breast_cancer_bundled():
    ds = load_breast_cancer()
    assert ds.n_features == 30
    assert ds.features.shape[0] == 569
    assert ds.features.min() >= 0.0 and ds.features.max() <= 1.0
    assert set(np.unique(ds.labels)) == {0.0, 1.0}
    assert len(ds.normalization) == 30
    assert not any(n["zero_range"] for n in ds.normalization)


def test_csv_loading_and_constant_column(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,y\n1,7,0\n3,7,1\n2,7,1\n")
    ds = load_csv(str(p), label_column="y")
    assert ds.n_features == 2
    assert ds.normalization[1]["zero_range"] is True
    assert np.all(ds.features[:, 1] == 0.0)
    assert ds.features[:, 0] == pytest.approx([0.0, 1.0, 0.5])


def test_missing_dataset_errors(tmp_path):
    with pytest.raises(DatasetMissingError):
        load_csv(str(tmp_path / "nope.csv"), label_column="y")
    with pytest.raises(ValueError, match="label column"):
        load(str(tmp_path / "x.csv"))
