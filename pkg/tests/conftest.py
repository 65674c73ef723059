from __future__ import annotations

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_psd(rng, d, r):
    X = rng.standard_normal((d, r))
    return X @ X.T
