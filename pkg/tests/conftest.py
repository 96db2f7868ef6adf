import numpy as np
import pytest

from namcert.model import NamModel, TASK_MULTICLASS, UnivariateNet, default_meta
from namcert.synth import random_component


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_random_net(seed: int, hidden=(8, 8), scale: float = 1.0) -> UnivariateNet:
    return random_component(np.random.default_rng(seed), hidden, scale)


def make_multiclass(seed: int, n_classes: int = 3, n_features: int = 3) -> NamModel:
    rng = np.random.default_rng(seed)
    heads = tuple(
        tuple(random_component(rng, (4, 4), 0.8) for _ in range(n_features))
        for _ in range(n_classes)
    )
    intercepts = tuple(float(v) for v in rng.normal(0, 0.3, n_classes))
    return NamModel(TASK_MULTICLASS, intercepts, heads, default_meta(n_features))
