"""Integrator against closed forms, a from-scratch reference stepper,
step-doubling, stopping/blowup handling, and batching determinism."""

import math

import numpy as np
import pytest

from ftle_spde.integrate import (
    SimParams,
    compose_fast,
    decompose_slow,
    phi1,
    run_ensemble,
    simulate,
    step_exponential,
)
from ftle_spde.integrate import _KernelRows
from ftle_spde.noise import default_alphas, draws_for_steps
from ftle_spde.spectral import (
    CouplingTable,
    ModelSpec,
    SpectralField,
    apply_As_inverse,
    burgers_model,
)


def empty_linear_model(eigs, kernel=(0,)):
    n = len(eigs)
    table = CouplingTable(n, [], [], [], [])
    return ModelSpec("toy", np.asarray(eigs, float), np.asarray(kernel), table)


def reference_step(model, nu, dt, u, drift_weighted_noise):
    """Scalar-loop exponential step, written independently of the package
    vector path: per-mode math.exp, explicit phi1 series fallback."""
    out = np.empty_like(u)
    b = model.coupling.dense_tensor()
    bu = np.einsum("mjk,j,k->m", b, u, u)
    for m in range(u.size):
        r = -model.eigenvalues[m] + nu
        z = r * dt
        if abs(z) < 1e-8:
            w = dt * (1.0 + z / 2.0 + z * z / 6.0)
        else:
            w = (math.exp(z) - 1.0) / r
        out[m] = math.exp(z) * u[m] + w * bu[m] + drift_weighted_noise[m]
    return out


def exact_noise_terms(model, params, alphas, seed, stream, n_steps, dt):
    """Per-step exact OU noise contributions s_k * xi for the linear part."""
    xi = draws_for_steps(seed, stream, n_steps, model.n_modes)
    rate = -model.eigenvalues + params.nu
    with np.errstate(divide="ignore", invalid="ignore"):
        var = np.where(rate == 0.0, dt, np.expm1(2 * rate * dt) / (2 * rate))
    return params.sigma * alphas * np.sqrt(var) * xi


def test_phi1_values():
    assert phi1(0.0) == 1.0
    assert abs(phi1(1.0) - (np.e - 1.0)) < 1e-14
    z = np.array([-2.0, 0.0, 1e-12, 3.0])
    v = phi1(z)
    assert abs(v[1] - 1.0) < 1e-14 and abs(v[2] - 1.0) < 1e-9


def test_linear_part_exact_at_large_dt():
    model = empty_linear_model([0.0, 2.0, 5.0])
    params = SimParams(eps=0.1, nu=0.005, sigma=0.0, dt=0.5)
    u0 = np.array([1.0, -2.0, 0.7])
    traj = simulate(model, params, seed=1, horizon_slow=0.02, u0=u0,
                    store_every=1)
    t_fast = 2.0
    want = u0 * np.exp((-model.eigenvalues + params.nu) * t_fast)
    assert np.allclose(traj.fast_states()[-1], want, rtol=0, atol=1e-12)


def test_matches_reference_stepper():
    model = burgers_model(6)
    params = SimParams(eps=0.5, nu=0.1, sigma=0.2, dt=0.05)
    alphas = default_alphas(6)
    n_steps = 40
    horizon = params.eps ** 2 * params.dt * n_steps
    traj = simulate(model, params, seed=77, stream_id=3, horizon_slow=horizon,
                    u0=np.array([0.3, -0.2, 0.1, 0.0, 0.05, 0.0]),
                    store_every=1)
    noise_terms = exact_noise_terms(model, params, alphas, 77, 3, n_steps, 0.05)
    u = np.array([0.3, -0.2, 0.1, 0.0, 0.05, 0.0])
    fast = traj.fast_states()
    assert np.allclose(fast[0], u, atol=1e-14)
    for i in range(n_steps):
        u = reference_step(model, params.nu, 0.05, u, noise_terms[i])
        assert np.max(np.abs(fast[i + 1] - u)) < 1e-10


def test_step_doubling_first_order_in_dt():
    # same Brownian path at three resolutions; error ratio ~ 2 per halving
    model = burgers_model(8)
    params = SimParams(eps=0.5, nu=0.05, sigma=0.25)
    alphas = default_alphas(8)
    dt0, t_end = 0.005, 2.0
    n0 = int(t_end / dt0)

    def coarsen_terms(terms, dt):
        decay = np.exp((-model.eigenvalues + params.nu) * dt)
        return decay * terms[0::2] + terms[1::2]

    # single-path ratios are noisy; average the halving errors over streams
    e_coarse, e_fine = [], []
    for stream in range(8):
        terms0 = exact_noise_terms(model, params, alphas, 5, stream, n0, dt0)
        terms1 = coarsen_terms(terms0, dt0)
        terms2 = coarsen_terms(terms1, 2 * dt0)
        finals = []
        for dt, terms in ((dt0, terms0), (2 * dt0, terms1), (4 * dt0, terms2)):
            u = np.array([0.5, 0.3, -0.2, 0.1, 0.0, 0.0, 0.0, 0.0])
            for i in range(terms.shape[0]):
                u = reference_step(model, params.nu, dt, u, terms[i])
            finals.append(u)
        e_coarse.append(np.linalg.norm(finals[2] - finals[1]))
        e_fine.append(np.linalg.norm(finals[1] - finals[0]))
    ratio = np.mean(e_coarse) / np.mean(e_fine)
    assert min(e_fine) > 0
    assert 1.5 < ratio < 2.8


def test_ensemble_determinism_and_batch_independence():
    model = burgers_model(8)
    params = SimParams(eps=0.2, nu=0.04, sigma=0.04, dt=0.02)
    u0 = np.tile(np.array([0.1, 0.02, 0, 0, 0, 0, 0, 0.0]), (10, 1))
    kw = dict(horizon_slow=0.4, store_every=8)
    r1 = run_ensemble(model, params, seed=11, stream_ids=range(10), u0=u0, **kw)
    r2 = run_ensemble(model, params, seed=11, stream_ids=range(10), u0=u0, **kw)
    assert np.array_equal(r1.states, r2.states)
    solo = run_ensemble(model, params, seed=11, stream_ids=[3], u0=u0[:1], **kw)
    assert np.array_equal(solo.states[0], r1.states[3])
    perm = run_ensemble(model, params, seed=11, stream_ids=[9, 3, 0],
                        u0=u0[:3], **kw)
    assert np.array_equal(perm.states[1], r1.states[3])
    assert np.array_equal(perm.states[0], r1.states[9])


def test_stopping_radius_monotone():
    model = burgers_model(6)
    u0 = compose_fast(model, np.full((8, 1), 1.0), np.zeros((8, 5)), 0.3)
    taus = []
    for r_c in (1.5, 2.5):
        params = SimParams(eps=0.3, nu=0.9 * 0.09, sigma=0.09, dt=0.05, r_c=r_c)
        run = run_ensemble(model, params, seed=4, stream_ids=range(8), u0=u0,
                           horizon_slow=4.0)
        taus.append(run.tau.copy())
    assert np.all(np.isfinite(taus[0]))
    assert np.all(taus[0] <= taus[1] + 1e-12)
    assert np.any(taus[0] < taus[1])


def test_stopping_on_stable_norm():
    # decaying kernel, noisy stable part, low exponent threshold
    model = burgers_model(6)
    params = SimParams(eps=0.3, nu=-0.09, sigma=0.18, dt=0.05, kappa=0.5)
    u0 = compose_fast(model, np.full((12, 1), 0.2), np.zeros((12, 5)), 0.3)
    run = run_ensemble(model, params, seed=6, stream_ids=range(12), u0=u0,
                       horizon_slow=3.0, alphas=np.ones(6), store_every=1)
    hit = np.isfinite(run.tau)
    assert hit.any()
    thresh = 0.3 ** (-0.5)
    for i in np.flatnonzero(hit):
        idx = int(round(run.tau[i] / (run.times[1] - run.times[0])))
        norms = np.linalg.norm(run.states[i, :, model.stable.tolist()], axis=0)
        assert norms[idx] >= thresh * (1 - 1e-9)
        assert np.all(norms[:idx] < thresh)


def test_blowup_flagged_without_nan():
    table = CouplingTable(2, [0], [0], [0], [1.0])
    model = ModelSpec("toy", np.array([0.0, 1.0]), np.array([0]), table)
    params = SimParams(eps=1.0, nu=0.0, sigma=0.0, dt=0.01)
    run = run_ensemble(model, params, seed=0, stream_ids=[0],
                       u0=np.array([[4.0, 0.5]]), horizon_slow=1.0,
                       store_every=1)
    assert run.blowup[0]
    assert np.all(np.isfinite(run.states))
    assert np.all(np.isfinite(run.final_fast))
    assert run.tau[0] <= 0.3  # kernel norm passed r_c before the blowup


def test_decompose_compose_roundtrip():
    model = burgers_model(5)
    rng = np.random.default_rng(2)
    u = rng.standard_normal(5)
    for eps in (1.0, 0.2):
        uc, us = decompose_slow(model, u, eps)
        back = compose_fast(model, uc, us, eps)
        assert np.allclose(back, u, atol=1e-14)
    uc, us = decompose_slow(model, u, 1.0)
    assert np.allclose(uc, u[model.kernel]) and np.allclose(us, u[model.stable])


def test_params_validation_and_default_dt():
    with pytest.raises(ValueError):
        SimParams(eps=0.1, nu=0.2, sigma=0.0)       # nu/eps^2 = 20 > 10
    with pytest.raises(ValueError):
        SimParams(eps=0.1, nu=0.0, sigma=0.2)
    with pytest.raises(ValueError):
        SimParams(eps=1.5, nu=0.0, sigma=0.0)
    with pytest.raises(ValueError):
        SimParams(eps=0.5, nu=0.0, sigma=-0.1)
    p = SimParams(eps=0.1, nu=0.0, sigma=0.0)
    assert abs(p.resolved_dt(burgers_model(32)) - 1e-2 / 1023.0) < 1e-18
    assert p.resolved_dt(burgers_model(2)) == 1e-3


def test_store_grid_layout():
    model = burgers_model(4)
    params = SimParams(eps=0.5, nu=0.0, sigma=0.1, dt=0.1)
    run = run_ensemble(model, params, seed=1, stream_ids=[0],
                       u0=np.zeros((1, 4)), horizon_slow=1.0, store_every=2)
    # 40 steps, stride 2 -> 21 rows, slow spacing 0.05
    assert run.states.shape == (1, 21, 4)
    assert np.allclose(np.diff(run.times), 0.05)
    assert run.times[0] == 0.0 and abs(run.times[-1] - 1.0) < 1e-12


def test_kernel_row_subtables_match_full_table():
    model = burgers_model(10)
    kr = _KernelRows(model)
    rng = np.random.default_rng(8)
    u, v = rng.standard_normal((2, 10))
    full = model.coupling.bilinear(u, v)
    assert np.allclose(kr.b_kernel(u, v), full[model.kernel], atol=1e-14)
    uc = np.zeros(10)
    uc[model.kernel] = rng.standard_normal(model.kernel.size)
    buu = model.coupling.bilinear(uc, uc)
    ps = np.zeros(10)
    ps[model.stable] = buu[model.stable]
    want = apply_As_inverse(model, SpectralField(ps, model.basis)).coeffs
    assert np.allclose(kr.stable_quadratic_of_kernel(uc), want, atol=1e-14)


def test_online_metrics_match_offline_quadrature():
    model = burgers_model(8)
    eps = 0.2
    # r_c and kappa pushed out of reach: no exits, so the online
    # accumulators cover the full horizon
    params = SimParams(eps=eps, nu=eps ** 2, sigma=eps ** 2, dt=0.02,
                       r_c=50.0, kappa=3.0)
    nu_slow = 1.0

    def ae_drift(a):
        return nu_slow * a - a ** 3

    def ae_growth(a):
        return (nu_slow - 3.0 * a[:, 0] ** 2)

    u0 = compose_fast(model, np.full((4, 1), 0.5), np.zeros((4, 7)), eps)
    run = run_ensemble(model, params, seed=31, stream_ids=range(4), u0=u0,
                       ae0=np.full((4, 1), 0.5), ae_drift=ae_drift,
                       ae_growth=ae_growth, track_z=True, metrics=True,
                       acc_every=4, store_every=4, horizon_slow=0.8)
    assert np.all(np.isinf(run.tau))
    t = run.times
    ker, stb = model.kernel, model.stable
    for p in range(4):
        S = run.states[p]
        Ucf = np.zeros_like(S); Ucf[:, ker] = S[:, ker]
        Usf = np.zeros_like(S); Usf[:, stb] = S[:, stb]
        f1 = model.coupling.bilinear(Ucf, Usf)[:, ker]
        buu = model.coupling.bilinear(Ucf, Ucf)
        w = np.zeros_like(buu)
        w[:, stb] = -buu[:, stb] / model.eigenvalues[stb]
        f2 = model.coupling.bilinear(Ucf, w)[:, ker]
        f3 = model.coupling.bilinear(Usf, Usf)[:, ker]
        assert np.allclose(np.trapezoid(f1[:, 0], t), run.metrics["ito_I1"][p, 0],
                           atol=1e-10)
        assert np.allclose(np.trapezoid(f2[:, 0], t), run.metrics["ito_I2"][p, 0],
                           atol=1e-10)
        assert np.allclose(np.trapezoid(f3[:, 0], t), run.metrics["ito_I3"][p, 0],
                           atol=1e-10)
        g = nu_slow - 3.0 * run.ae[p, :, 0] ** 2
        assert np.allclose(np.trapezoid(g, t), run.metrics["int_growth"][p],
                           atol=1e-10)
        err = np.abs(S[:, ker[0]] - run.ae[p, :, 0])
        assert abs(err.max() - run.metrics["sup_err_ca"][p]) < 1e-12
        us_norm = np.linalg.norm(S[:, stb], axis=1)
        zs = run.z[p][:, stb]
        resid = np.linalg.norm(S[:, stb] - (params.sigma / eps ** 2) * zs, axis=1)
        assert abs(resid.max() - run.metrics["sup_resid_z_sigma"][p]) < 1e-12
        assert abs(us_norm.max() - run.metrics["sup_norm_Us"][p]) < 1e-12


def test_z_is_pure_ou_with_same_draws():
    model = burgers_model(4)
    params = SimParams(eps=0.4, nu=0.1, sigma=0.1, dt=0.05)
    run = run_ensemble(model, params, seed=9, stream_ids=[2],
                       u0=np.zeros((1, 4)), track_z=True,
                       horizon_slow=0.8, store_every=1)
    xi = draws_for_steps(9, 2, 100, 4)
    alphas = default_alphas(4)
    z = np.zeros(4)
    lam = model.eigenvalues
    with np.errstate(divide="ignore", invalid="ignore"):
        var = np.where(lam == 0, 0.05, -np.expm1(-2 * lam * 0.05) / (2 * lam))
    for i in range(100):
        z = np.exp(-lam * 0.05) * z + alphas * np.sqrt(var) * xi[i]
    assert np.allclose(run.z[0, -1], z, atol=1e-12)


def test_ae_only_run_matches_reference_em():
    model = burgers_model(4)
    eps = 0.3
    params = SimParams(eps=eps, nu=eps ** 2, sigma=0.5 * eps ** 2, dt=0.1)

    def drift(a):
        return a - 2.0 * a ** 3

    run = run_ensemble(model, params, seed=13, stream_ids=[5], ae0=[[0.4]],
                       ae_drift=drift, horizon_slow=0.9, store_every=1)
    xi = draws_for_steps(13, 5, 100, 4)
    a = 0.4
    dT = eps ** 2 * 0.1
    namp = params.sigma / eps * 1.0 * np.sqrt(0.1)
    for i in range(100):
        a = a + dT * (a - 2 * a ** 3) + namp * xi[i, 0]
    assert abs(run.ae[0, -1, 0] - a) < 1e-12


def test_tangent_linearity():
    model = burgers_model(6)
    params = SimParams(eps=0.3, nu=0.05, sigma=0.05, dt=0.05)
    rng = np.random.default_rng(3)
    v1, v2 = rng.standard_normal((2, 6))
    cols = np.stack([v1, v2, v1 + 2.0 * v2], axis=1)
    u0 = compose_fast(model, np.full((2, 1), 0.4),
                      0.1 * np.ones((2, 5)), 0.3)
    run = run_ensemble(model, params, seed=17, stream_ids=[0, 1], u0=u0,
                       tangent_cols=cols, horizon_slow=0.5)
    V = run.propagators
    assert np.allclose(V[:, :, 2], V[:, :, 0] + 2.0 * V[:, :, 1], atol=1e-10)
    assert run.tangent_norms.shape[1] == run.times.size
