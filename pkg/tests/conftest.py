import numpy as np
import pytest

import deeprf


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_spec(depth, gamma, act, d, delta=1.0, omega0=None):
    return deeprf.ArchitectureSpec(
        depth=depth,
        gammas=(gamma,) * depth if np.isscalar(gamma) else tuple(gamma),
        activations=(act,) * depth if not isinstance(act, tuple) else act,
        deltas=(delta,) * depth if np.isscalar(delta) else tuple(delta),
        d=d,
        omega0=omega0,
    )


@pytest.fixture
def tanh2_spec():
    return make_spec(2, 1.0, deeprf.tanh_scaled(2.0), 200)


@pytest.fixture
def sign_spec():
    return make_spec(1, 1.0, deeprf.sign(), 200)
