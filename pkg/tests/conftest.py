import numpy as np
import pytest

from fracopt.metrics import DiscreteDistribution, MetricKind, spec_for

# presets that satisfy the coefficient sign constraints
SIGNED_PRESETS = [
    (MetricKind.FBETA, 1.0),
    (MetricKind.FBETA, 0.5),
    (MetricKind.FBETA, 2.0),
    (MetricKind.JACCARD, None),
    (MetricKind.ACCURACY, None),
    (MetricKind.GOWER_LEGENDRE, 1.0),
]

ALL_PRESETS = SIGNED_PRESETS + [
    (MetricKind.GOWER_LEGENDRE, 0.0),
    (MetricKind.GOWER_LEGENDRE, 0.5),
    (MetricKind.GOWER_LEGENDRE, 2.0),
]


def preset_id(p):
    kind, param = p
    return kind.value if param is None else f"{kind.value}-{param:g}"


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def oracle2():
    return DiscreteDistribution(np.eye(2), [0.9, 0.2], [0.5, 0.5])


@pytest.fixture
def three_point():
    return DiscreteDistribution([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], [0.8, 0.3, 0.5], [0.3, 0.45, 0.25])


def random_labeled(rng, n, d, pi=0.4, scale=1.0):
    y = np.where(rng.random(n) < pi, 1.0, -1.0)
    x = rng.standard_normal((n, d)) * scale + 0.5 * y[:, None]
    return x, y


def f1_spec(pi=0.5):
    return spec_for(MetricKind.FBETA, pi, 1.0)
