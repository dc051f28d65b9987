import numpy as np
import pytest

from socprune.core import LabelVector, PredictionTensor


def random_probs(rng, num_models, num_samples, num_classes, concentration=1.0):
    """Random valid probability tensor via Dirichlet rows."""
    g = rng.standard_gamma(concentration, size=(num_models, num_samples, num_classes))
    # keep rows away from exact zeros so entropy terms stay smooth
    g = g + 1e-3
    return g / g.sum(axis=2, keepdims=True)


def random_instance(rng, num_models, num_samples, num_classes):
    t = PredictionTensor(probs=random_probs(rng, num_models, num_samples, num_classes))
    y = LabelVector(labels=rng.integers(0, num_classes, size=num_samples),
                    num_classes=num_classes)
    return t, y


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
