import numpy as np
import pytest

from splitlab import ckks
from splitlab.ckks.params import _is_prime
from splitlab.errors import ParameterError


def test_spec_toy_keyset_n16():
    # both primes must satisfy p = 1 (mod 2N) = 1 (mod 32); check directly
    for p in (65537, 114689):
        assert p % 32 == 1 and _is_prime(p)
    params = ckks.CkksParams(ring_degree=16, prime_chain=(65537, 114689), scale=1 << 6)
    ctx = ckks.CkksContext.generate(params, seed=7)
    zeros = np.zeros(8)
    assert np.abs(ctx.decrypt(ctx.encrypt(zeros), 8)).max() < 0.2


def test_ring_degree_must_be_power_of_two():
    with pytest.raises(ParameterError):
        ckks.CkksParams(ring_degree=12, prime_chain=(65537,), scale=64)
    with pytest.raises(ParameterError):
        ckks.CkksParams(ring_degree=4, prime_chain=(65537,), scale=64)


def test_non_ntt_prime_rejected():
    # 65539 is prime but not 1 mod 32
    with pytest.raises(ParameterError):
        ckks.CkksParams(ring_degree=16, prime_chain=(65539,), scale=64)
    with pytest.raises(ParameterError):
        ckks.CkksParams(ring_degree=16, prime_chain=(65537, 65537), scale=64)


def test_generated_chain_properties():
    chain = ckks.generate_prime_chain(1024, [40, 21, 21, 21, 40])
    assert len(set(chain)) == 5
    for q in chain:
        assert q % 2048 == 1 and _is_prime(q)
    # deterministic
    assert chain == ckks.generate_prime_chain(1024, [40, 21, 21, 21, 40])


def test_s1_profile_matches_published_shape(s1_params):
    p = s1_params
    assert p.ring_degree == 2**13 == 8192
    assert p.scale == 2**21
    assert len(p.prime_chain) == 5
    bits = [q.bit_length() for q in p.prime_chain]
    assert bits[0] == bits[4] and bits[0] >= 40
    for q in p.middle_primes:
        assert p.scale <= q <= 2 * p.scale  # within one bit above the scale


def test_s2_profile_ring_degree():
    p = ckks.make_params("s2")
    assert p.ring_degree == 2**14 == 16384
    assert p.scale == 2**21


def test_active_indices_geometry(s1_params):
    p = s1_params
    assert p.active_indices(0) == [0, 1, 2, 3, 4]
    assert p.active_indices(1) == [0, 1, 2, 4]
    assert p.active_indices(3) == [0, 4]
    from splitlab.errors import LevelError

    with pytest.raises(LevelError):
        p.active_indices(5)


def test_unknown_profile():
    with pytest.raises(ParameterError):
        ckks.make_params("s3")
