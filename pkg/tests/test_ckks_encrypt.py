import numpy as np

from splitlab import ckks

from conftest import fresh_noise_bound


def test_keygen_deterministic(s1_params):
    a = ckks.keygen(s1_params, rng_seed=42)
    b = ckks.keygen(s1_params, rng_seed=42)
    assert np.array_equal(a[0].s_ntt, b[0].s_ntt)
    assert np.array_equal(a[1].b, b[1].b)
    assert np.array_equal(a[2].keys[1].b, b[2].keys[1].b)
    c = ckks.keygen(s1_params, rng_seed=43)
    assert not np.array_equal(a[0].s_ntt, c[0].s_ntt)


def test_rotation_keyset_covers_power_of_two_steps(s1_ctx):
    steps = s1_ctx.rotation_keys.steps
    slots = s1_ctx.params.slots
    assert steps == [1 << k for k in range((slots).bit_length() - 1)]


def test_zero_roundtrip_within_fresh_bound(s1_ctx):
    # the bound is a 99.9th-percentile statement (product noise is heavy
    # tailed, so a per-slot max bound would need far more headroom)
    bound = fresh_noise_bound(s1_ctx.params)
    errs = np.concatenate(
        [np.abs(s1_ctx.decrypt(s1_ctx.encrypt(np.zeros(4096)), 4096)) for _ in range(5)]
    )
    assert np.quantile(errs, 0.999) < bound


def test_pi_e_minus_one_within_1e3(s1_ctx):
    v = np.array([np.pi, np.e, -1.0])
    back = s1_ctx.decrypt(s1_ctx.encrypt(v), 3)
    assert np.abs(back - v).max() <= 1e-3


def test_magnitude_100_slots_within_1e3(s1_ctx, rng):
    v = rng.uniform(-100, 100, 64)
    back = s1_ctx.decrypt(s1_ctx.encrypt(v), 64)
    assert np.abs(back - v).max() <= 1e-3


def test_wrong_secret_key_decrypts_to_garbage(s1_ctx):
    # no silent success: a checksum at the caller is the only detection
    wrong_sk, _, _ = ckks.keygen(s1_ctx.params, rng_seed=999, ring=s1_ctx.ring)
    v = np.linspace(-5, 5, 32)
    ct = s1_ctx.encrypt(v)
    garbage = ckks.decrypt(wrong_sk, ct, s1_ctx.encoder, 32)
    assert np.abs(garbage - v).max() > 1.0


def test_fresh_noise_percentile_under_documented_bound(toy_ctx):
    # 1000 encryptions of zero; 99.9th percentile under the documented bound
    bound = fresh_noise_bound(toy_ctx.params)
    slots = toy_ctx.params.slots
    zeros = np.zeros(slots)
    errs = np.concatenate(
        [np.abs(toy_ctx.decrypt(toy_ctx.encrypt(zeros), slots)) for _ in range(1000)]
    )
    assert np.quantile(errs, 0.999) < bound


def test_fresh_noise_percentile_at_s1(s1_ctx):
    bound = fresh_noise_bound(s1_ctx.params)
    zeros = np.zeros(4096)
    errs = np.concatenate(
        [np.abs(s1_ctx.decrypt(s1_ctx.encrypt(zeros), 4096)) for _ in range(25)]
    )
    assert np.quantile(errs, 0.999) < bound
