"""Noise streams: keying, chunk layout, moments, exact OU transitions."""

import numpy as np
import pytest

from ftle_spde.noise import (
    CHUNK_STEPS,
    EnsembleNoise,
    InsufficientPathError,
    NoiseSpec,
    coarsen_increments,
    default_alphas,
    draws_for_steps,
    ou_exact_step,
    ou_factors,
    rescale_slow,
    sample_path,
)


def test_streams_reproducible_and_distinct():
    a = draws_for_steps(seed=9, stream_id=4, n_steps=64, n_modes=3)
    b = draws_for_steps(seed=9, stream_id=4, n_steps=64, n_modes=3)
    assert np.array_equal(a, b)
    c = draws_for_steps(seed=9, stream_id=5, n_steps=64, n_modes=3)
    d = draws_for_steps(seed=10, stream_id=4, n_steps=64, n_modes=3)
    assert not np.allclose(a, c)
    assert not np.allclose(a, d)


def test_ensemble_view_matches_single_paths_bitwise():
    # crossing a chunk boundary must not change anything
    n_steps = CHUNK_STEPS + 37
    streams = [0, 3, 11]
    ens = EnsembleNoise(seed=21, stream_ids=streams, n_modes=2)
    stacked = np.stack([ens.draws(s) for s in range(n_steps)], axis=1)
    for i, sid in enumerate(streams):
        single = draws_for_steps(21, sid, n_steps, 2)
        assert np.array_equal(stacked[i], single)


def test_partial_materialisation_is_prefix():
    long = draws_for_steps(seed=2, stream_id=0, n_steps=2000, n_modes=4)
    short = draws_for_steps(seed=2, stream_id=0, n_steps=500, n_modes=4)
    assert np.array_equal(long[:500], short)


def test_increment_moments():
    spec = NoiseSpec(alphas=np.array([0.8]), seed=123)
    path = sample_path(spec, dt=0.01, n_steps=100_000)
    inc = path.increments()[:, 0]
    var_want = 0.8 ** 2 * 0.01
    assert abs(inc.mean()) < 4.0 * np.sqrt(var_want / inc.size)
    assert abs(inc.var() / var_want - 1.0) < 0.05


def test_draws_normality():
    xi = draws_for_steps(seed=7, stream_id=0, n_steps=250_000, n_modes=4).ravel()
    n = xi.size
    skew = np.mean(xi ** 3)
    kurt = np.mean(xi ** 4)
    assert abs(skew) < 5.0 * np.sqrt(6.0 / n)
    assert abs(kurt - 3.0) < 5.0 * np.sqrt(24.0 / n)


def test_mode_independence():
    xi = draws_for_steps(seed=8, stream_id=1, n_steps=20_000, n_modes=4)
    corr = np.corrcoef(xi.T)
    off = corr[~np.eye(4, dtype=bool)]
    assert np.abs(off).max() < 0.05


def test_ou_pure_decay_exact():
    rate = -3.7
    z = 2.0
    dt = 0.31
    for n in range(1, 6):
        z = ou_exact_step(z, rate, dt, noise_amp=0.0, xi=0.0)
        assert abs(z - 2.0 * np.exp(rate * dt * n)) < 1e-13


def test_ou_variance_composition_identity():
    # chaining two exact dt-transitions equals one 2dt-transition in law:
    # decay(2dt) = decay(dt)^2 and var(2dt) = var(dt) * (1 + decay(dt)^2)
    for rate in (-5.0, -0.3, 0.0, 0.7):
        for dt in (1e-3, 0.1, 2.0):
            d1, v1 = ou_factors(rate, dt)
            d2, v2 = ou_factors(rate, 2.0 * dt)
            assert abs(d2 - d1 * d1) < 1e-12 * max(1.0, d2)
            assert abs(v2 - v1 * (1.0 + d1 * d1)) < 1e-12 * max(1.0, abs(v2))


def test_ou_stationary_variance_monte_carlo():
    lam, amp, dt = 2.0, 0.7, 0.1
    rng = np.random.default_rng(55)
    z = np.zeros(20_000)
    for _ in range(200):
        z = ou_exact_step(z, -lam, dt, amp, rng.standard_normal(z.size))
    want = amp ** 2 / (2.0 * lam)
    assert abs(z.var() / want - 1.0) < 0.05


def test_rescale_slow_identity_and_scaling():
    t = np.linspace(0.0, 10.0, 11)
    v = np.arange(11.0)
    ts, vs = rescale_slow(t, v, eps=1.0)
    assert np.array_equal(ts, t) and np.array_equal(vs, v)
    ts, vs = rescale_slow(t, v, eps=0.1)
    assert np.allclose(ts, 0.01 * t)
    assert np.allclose(vs, 0.1 * v)


def test_rescale_slow_horizon():
    t = np.linspace(0.0, 100.0, 101)
    v = np.ones(101)
    ts, vs = rescale_slow(t, v, eps=0.1, horizon=0.5)
    assert ts[-1] <= 0.5 + 1e-12
    with pytest.raises(InsufficientPathError):
        rescale_slow(t, v, eps=0.1, horizon=1.5)


def test_coarsen_increments():
    inc = np.arange(12.0).reshape(6, 2)
    coarse = coarsen_increments(inc, 3)
    assert np.allclose(coarse, [[6.0, 9.0], [24.0, 27.0]])
    with pytest.raises(ValueError):
        coarsen_increments(inc, 4)


def test_spec_validation():
    assert np.allclose(default_alphas(4), [1.0, 0.5, 1.0 / 3.0, 0.25])
    with pytest.raises(ValueError):
        NoiseSpec(alphas=np.array([-1.0]), seed=0)
    with pytest.raises(ValueError):
        NoiseSpec(alphas=np.array([[1.0]]), seed=0)
    with pytest.raises(ValueError):
        sample_path(NoiseSpec(np.array([1.0]), 0), dt=0.0, n_steps=5)
