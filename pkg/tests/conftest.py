import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_model(rng, q, p, sigma=0.01, unit_columns=True, scale=1.0):
    from icrsparse.model import MeasurementModel

    A = rng.standard_normal((q, p))
    if unit_columns:
        A /= np.linalg.norm(A, axis=0)
    y = scale * rng.standard_normal(q)
    return MeasurementModel(A, y, sigma, unit_columns=unit_columns)
