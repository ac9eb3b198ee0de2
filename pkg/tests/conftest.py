import numpy as np
import pytest

from epsmooth import ImageGrid


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def rand_image(rng, h, w, lo=0.0, hi=255.0) -> ImageGrid:
    return ImageGrid(rng.uniform(lo, hi, size=(h, w)))
