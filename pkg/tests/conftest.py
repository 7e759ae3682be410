import numpy as np
import pytest

from splitlab import ckks


@pytest.fixture(scope="session")
def toy_ctx():
    return ckks.CkksContext.generate(ckks.make_params("toy"), seed=7)


@pytest.fixture(scope="session")
def s1_params():
    return ckks.make_params("s1")


@pytest.fixture(scope="session")
def s1_ctx(s1_params):
    return ckks.CkksContext.generate(s1_params, seed=42)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def fresh_noise_bound(params) -> float:
    """Documented fresh-noise bound: six sigma of the analytic slot error.

    Encryption noise u*e_pk + e0 + s*e1 has coefficient variance
    (2h+1)*(sigma^2 + 1/12) for sparse ternary weight h (the 1/12 comes from
    rounding the Gaussian draws); coefficient noise of variance V lands on a
    real slot with std sqrt(N*V/2)/scale.
    """
    var = (2 * params.secret_weight + 1) * (params.error_std**2 + 1.0 / 12.0)
    slot_std = np.sqrt(params.ring_degree * var / 2.0) / params.scale
    return 6.0 * slot_std
