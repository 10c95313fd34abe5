"""Tests for the ensemble experiment drivers and their parallel dispatch."""

import numpy as np
import pytest

from ftle_spde.experiments import (
    EnsembleJob,
    RegimeReport,
    amplitude_sweep,
    decay_profile_study,
    decoupled_control_sweep,
    ftle_ensemble,
    ftle_rate_sweep,
    get_model,
    regime_study,
    run_distributed,
)
from ftle_spde.harness import gap_bound_check
from ftle_spde.integrate import SimParams, run_ensemble
from ftle_spde.spectral import burgers_model


def small_job(**kw):
    base = dict(preset="burgers", n_modes=6,
                params=SimParams(eps=0.3, nu=0.05, sigma=0.05, dt=0.01),
                seed=11, horizon_slow=0.02, a0=(0.4,))
    base.update(kw)
    return EnsembleJob(**base)


def e2(eps):
    return eps * eps


def test_unknown_preset_rejected():
    with pytest.raises(ValueError):
        get_model("heat", 8)


def test_run_distributed_is_worker_count_invariant():
    # 120 paths cut into 50/50/20: same bytes sequentially, with a pool,
    # and as one undivided ensemble call
    job = small_job(track_z=True)
    streams = list(range(120))
    seq = run_distributed(job, streams, workers=1)
    par = run_distributed(job, streams, workers=2)
    assert np.array_equal(seq.states, par.states)
    assert np.array_equal(seq.ae, par.ae)
    assert np.array_equal(seq.tau, par.tau)
    for key, val in seq.metrics.items():
        if val is not None:
            assert np.array_equal(val, par.metrics[key]), key
    direct = job.run(streams)
    assert np.array_equal(seq.states, direct.states)
    assert np.array_equal(seq.metrics["sup_R2"], direct.metrics["sup_R2"])


def test_job_with_per_path_amplitudes():
    job = small_job()
    rows = np.linspace(0.1, 0.6, 4)[:, None]
    run = run_distributed(job, [0, 1, 2, 3], a0_rows=rows)
    # stored state at time zero is the slow-coordinate initial condition
    assert np.allclose(run.states[:, 0, 0], rows[:, 0], rtol=0, atol=1e-12)
    assert np.allclose(run.ae[:, 0, 0], rows[:, 0], rtol=0, atol=1e-15)
    with pytest.raises(ValueError):
        run_distributed(job, [0, 1], a0_rows=rows)


def test_amplitude_sweep_structure():
    res = amplitude_sweep("burgers", 6, [0.4, 0.3, 0.2], e2, e2,
                          a0=(0.4,), horizon_slow=0.1, n_paths=8, seed=3,
                          dt=0.005)
    assert res.stats["err_ca"].shape == (3, 3)
    assert res.stats["R2_sup"].shape == (3, 3)
    assert len(res.raw["err_ca"]) == 3
    assert all(v.size == 8 for v in res.raw["err_ca"])
    assert res.eps_grid[0] > res.eps_grid[-1]
    assert len(res.meta["exit_counts"]) == 3
    # supremum metrics are nonnegative and the state sup is at least the
    # initial amplitude
    assert np.all(res.stats["R2_sup"][:, 0] >= 0.0)
    assert np.all(res.stats["Uc_sup"][:, 0] >= 0.4)


def test_ftle_ensemble_samples_are_internally_consistent():
    params = SimParams(eps=0.3, nu=0.09, sigma=0.09, dt=0.01)
    samples, run = ftle_ensemble("burgers", 6, params, seed=7,
                                 stream_ids=[0, 1, 2, 3], horizon_slow=0.2,
                                 a0=(0.4,))
    assert len(samples) == 4
    T = 0.2
    for i, s in enumerate(samples):
        assert s.time_scale == "slow"
        M = run.propagators[i]
        want = np.log(np.linalg.svd(M, compute_uv=False)[0]) / T
        assert abs(s.lam_spde - want) <= 1e-8 * max(1.0, abs(want))
        assert abs(s.lam_ae - run.metrics["int_growth"][i] / T) <= 1e-14
        # a full-basis defect norm dominates its kernel-column restriction
        assert s.k_x >= s.k_n - 1e-12
        assert s.r2_sup >= 0.0
    report = gap_bound_check(samples)
    assert report.upper_violations == 0
    assert report.lower_violations == 0


def test_ftle_rate_sweep_shrinking_windows():
    res, per_eps = ftle_rate_sweep("burgers", 6, [0.4, 0.3, 0.2], e2, e2,
                                   a0=(0.4,), n_paths=6, seed=5, dt=0.01)
    assert res.stats["ftle_gap_fast"].shape == (3, 3)
    assert [len(s) for s in per_eps] == [6, 6, 6]
    assert np.allclose(res.meta["horizons"],
                       [0.4 ** 0.5, 0.3 ** 0.5, 0.2 ** 0.5])
    for samples, T in zip(per_eps, res.meta["horizons"]):
        assert all(abs(s.horizon_slow - T) < 1e-12 for s in samples)


def test_regime_study_stable_case_signs():
    rep = regime_study("stable", "burgers", 6, 0.3, n_paths=6, seed=9,
                       horizon_slow=0.3, dt=0.01)
    assert isinstance(rep, RegimeReport)
    assert rep.nu == -(0.3 * 0.3) and rep.sigma == 0.3 * 0.3
    # the amplitude linearisation in the stable regime has growth rate
    # <= nu/eps^2 = -1 pointwise, so every path's exponent is <= -1
    assert rep.fractions["ae_negative"]["count"] == 6
    assert rep.lam_ae_max <= -1.0 + 1e-9
    assert rep.blowup_count == 0


def test_regime_study_deterministic_single_path():
    rep = regime_study("deterministic", "burgers", 6, 0.3, n_paths=10,
                       seed=2, horizon_slow=0.3, dt=0.01)
    assert rep.n_paths == 1
    assert rep.sigma == 0.0
    assert np.isfinite(rep.lam_spde).all() and np.isfinite(rep.lam_ae).all()
    # positive control parameter with a small start: growth stays positive
    assert rep.lam_ae[0] > 0.0


def test_regime_study_ergodic_uses_burned_in_amplitudes():
    rep = regime_study("ergodic", "burgers", 6, 0.3, n_paths=4, seed=4,
                       horizon_slow=0.2, dt=0.01, burnin_slow=0.5,
                       burnin_dt=0.05)
    assert rep.nu == 0.0
    assert len(rep.lam_spde) == 4
    # nu = 0 makes the amplitude growth rate -a^2-shaped: nonpositive
    assert rep.fractions["ae_positive"]["count"] == 0
    with pytest.raises(ValueError):
        regime_study("chaotic", "burgers", 6, 0.3, n_paths=2, seed=1)


def test_decay_profile_study_transient_and_kernel_start():
    mixed = decay_profile_study("burgers", 6, [0.4, 0.3, 0.2], e2, e2,
                                a0=(0.4,), horizon_slow=0.2, n_paths=4,
                                seed=6, dt=0.01)
    assert all(f.transient_present for f in mixed["fits"])
    for fit in mixed["fits"]:
        assert not fit.fit_failed
        assert 1.0 < fit.mu_fit < 6.0
    kernel = decay_profile_study("burgers", 6, [0.4, 0.3], e2, e2,
                                 a0=(0.4,), horizon_slow=0.2, n_paths=4,
                                 seed=6, dt=0.01, v0_kind="kernel")
    assert all(not f.transient_present for f in kernel["fits"])
    with pytest.raises(ValueError):
        decay_profile_study("burgers", 6, [0.4], e2, e2, a0=(0.4,),
                            horizon_slow=0.1, n_paths=2, seed=1,
                            v0_kind="sideways")


def test_decoupled_control_structure():
    res = decoupled_control_sweep("burgers", 6, [0.4, 0.3, 0.2], e2, e2,
                                  a0=(0.4,), horizon_slow=0.1, n_paths=6,
                                  seed=8, dt=0.005)
    med = res.stats["err_ca_decoupled"][:, 0]
    assert med.shape == (3,)
    assert np.all(med > 0.0)
    assert res.meta["control"] == "independent amplitude noise"


def test_job_rejects_bad_tangent_kind():
    job = small_job(tangent="sideways")
    with pytest.raises(ValueError):
        job.run([0])
