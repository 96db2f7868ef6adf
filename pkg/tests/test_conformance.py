"""Boundary check against the bundled trained-model fixture: the loader must
validate it and reproduce the recorded float32 forward passes within the
float32-to-float64 widening tolerance, without running any training."""

import json
from pathlib import Path

import pytest

from namcert.model import load_model, predict

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="module")
def fixture_model():
    return load_model(str(FIXTURES / "conformance_model.json"))


@pytest.fixture(scope="module")
def fixture_pairs():
    with open(FIXTURES / "conformance_pairs.json") as fh:
        return json.load(fh)["pairs"]


def test_fixture_validates(fixture_model):
    assert fixture_model.task == "binary"
    assert fixture_model.n_features == 3


def test_forward_parity_within_float32_widening(fixture_model, fixture_pairs):
    assert len(fixture_pairs) == 10
    for pair in fixture_pairs:
        p = predict(fixture_model, tuple(pair["x"]))
        assert p.margins[0] == pytest.approx(pair["margin"], abs=1e-5)
        assert p.output == pair["label"]
