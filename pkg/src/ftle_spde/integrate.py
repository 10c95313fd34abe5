"""Exponential-Euler integration of the spectral SPDE ensembles.

The state ``u`` lives on the fast time scale ``t``; the slow scale is
``T = eps^2 t``.  Near the bifurcation the state splits as
``u = eps * U_c + eps^2 * U_s`` (kernel and stable parts), and all stored
output uses those slow-scale coordinates.

One step of the scheme for mode ``k`` with rate ``r_k = -lambda_k + nu``:

    u' = exp(r_k dt) u + dt phi1(r_k dt) B(u, u)_k + s_k xi

where ``phi1(z) = (e^z - 1)/z`` and ``s_k`` is the exact one-step standard
deviation of the OU transition (``ou_factors``), so the linear SDE is
integrated without time-discretisation error at any ``dt``.

``run_ensemble`` advances many paths at once and can carry, in the same
pass and from the same keyed noise draws:

* a reduced amplitude state ``a`` on the slow scale (Euler-Maruyama with
  ``dT = eps^2 dt``, driven by the kernel-mode increments),
* the pure stochastic convolution ``z`` (OU with ``nu = 0``, unit noise),
* tangent columns ``V`` propagated by the linearised step
  ``V' = exp(r dt) V + dt phi1(r dt) L(u) V`` with ``L(u) = 2 B(u, .)``,
* running Ito-trick integrals and sup-norm error metrics, accumulated by
  trapezoid at full step resolution and frozen once a path exits.

Per-path results never depend on how the ensemble is batched: every array
reduction has a fixed summation order and each path's noise comes from its
own counter-based stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .noise import EnsembleNoise, default_alphas, ou_factors
from .spectral import ModelSpec

__all__ = [
    "SimParams",
    "Trajectory",
    "EnsembleRun",
    "phi1",
    "step_exponential",
    "simulate",
    "decompose_slow",
    "compose_fast",
    "run_ensemble",
]


def phi1(z):
    """``(e^z - 1) / z`` with the removable singularity filled in."""
    arr = np.asarray(z, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    out = np.ones_like(arr)
    nz = arr != 0.0
    out[nz] = np.expm1(arr[nz]) / arr[nz]
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class SimParams:
    """Physical and numerical parameters of one simulation setting.

    ``nu`` and ``sigma`` are the fast-scale control and noise strength;
    near the bifurcation both are O(eps^2) and the rescaled magnitudes
    ``|nu| / eps^2`` and ``sigma / eps^2`` must stay below ``scale_bound``.
    ``dt`` is the fast-time step; ``None`` picks the stiffness-based
    default ``min(1e-2 / lambda_max, 1e-3)``.
    """

    eps: float
    nu: float
    sigma: float
    dt: Optional[float] = None
    r_c: float = 3.0
    kappa: float = 0.1
    blowup_threshold: float = 1e6
    scale_bound: float = 10.0

    def __post_init__(self):
        if not (0.0 < self.eps <= 1.0):
            raise ValueError(f"eps must be in (0, 1], got {self.eps}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.r_c <= 0 or self.kappa <= 0:
            raise ValueError("r_c and kappa must be > 0")
        e2 = self.eps * self.eps
        if abs(self.nu) / e2 > self.scale_bound + 1e-12:
            raise ValueError(
                f"|nu|/eps^2 = {abs(self.nu) / e2:.3g} exceeds the scale "
                f"bound {self.scale_bound}")
        if self.sigma / e2 > self.scale_bound + 1e-12:
            raise ValueError(
                f"sigma/eps^2 = {self.sigma / e2:.3g} exceeds the scale "
                f"bound {self.scale_bound}")

    def resolved_dt(self, model: ModelSpec) -> float:
        if self.dt is not None:
            return float(self.dt)
        lam_max = float(model.eigenvalues.max())
        return min(1e-2 / lam_max, 1e-3) if lam_max > 0 else 1e-3

    def n_steps(self, model: ModelSpec, horizon_slow: float) -> int:
        dt_slow = self.eps * self.eps * self.resolved_dt(model)
        n = int(round(horizon_slow / dt_slow))
        if n < 1:
            raise ValueError("slow horizon shorter than one step")
        return n


def decompose_slow(model: ModelSpec, u_fast: np.ndarray, eps: float):
    """Split a fast-scale state into slow coordinates ``(U_c, U_s)`` with
    ``u = eps U_c + eps^2 U_s``; ``eps = 1`` is the plain projection pair."""
    u = np.asarray(u_fast, dtype=float)
    return u[..., model.kernel] / eps, u[..., model.stable] / (eps * eps)


def compose_fast(model: ModelSpec, Uc: np.ndarray, Us: np.ndarray, eps: float):
    Uc = np.asarray(Uc, dtype=float)
    Us = np.asarray(Us, dtype=float)
    shape = np.broadcast_shapes(Uc.shape[:-1], Us.shape[:-1]) + (model.n_modes,)
    u = np.zeros(shape)
    u[..., model.kernel] = eps * Uc
    u[..., model.stable] = eps * eps * Us
    return u


class _KernelRows:
    """Kernel-output restriction of a coupling table, plus the stable-output
    restriction to kernel arguments.  These are the only pieces the running
    Ito-trick integrands need, and they are tiny compared with the full
    table."""

    def __init__(self, model: ModelSpec):
        t = model.coupling
        n = model.n_modes
        in_ker = np.isin(t.m_idx, model.kernel)
        self._ck = _SubTable(n, model.kernel, t.m_idx[in_ker], t.j_idx[in_ker],
                             t.k_idx[in_ker], t.coeff[in_ker])
        args_ker = (np.isin(t.j_idx, model.kernel)
                    & np.isin(t.k_idx, model.kernel)
                    & ~in_ker)
        self._sk = _SubTable(n, model.stable, t.m_idx[args_ker],
                             t.j_idx[args_ker], t.k_idx[args_ker],
                             t.coeff[args_ker])
        self._inv_lam_stable = np.zeros(n)
        self._inv_lam_stable[model.stable] = 1.0 / model.eigenvalues[model.stable]

    def b_kernel(self, u, v):
        """Kernel components of ``B(u, v)`` as shape ``(..., kernel_dim)``."""
        return self._ck.apply(u, v)

    def stable_quadratic_of_kernel(self, u):
        """Full-width array holding ``A_s^{-1} P_s B(u, u)`` for ``u``
        supported on the kernel."""
        w = self._sk.apply_full(u, u)
        return -w * self._inv_lam_stable


class _SubTable:
    def __init__(self, n_modes, out_modes, m, j, k, c):
        order = np.lexsort((k, j, m))
        self.n_modes = n_modes
        self.out_modes = np.asarray(out_modes)
        self.m, self.j, self.k = m[order], j[order], k[order]
        self.c = c[order]
        self._m_present, counts = np.unique(self.m, return_counts=True)
        self._starts = np.concatenate(([0], np.cumsum(counts[:-1]))).astype(np.intp)
        # positions of the present output modes inside out_modes
        self._local = np.searchsorted(self.out_modes, self._m_present)

    def apply(self, u, v):
        out = np.zeros(np.broadcast_shapes(u.shape, v.shape)[:-1]
                       + (self.out_modes.size,))
        if self.c.size:
            terms = self.c * u[..., self.j] * v[..., self.k]
            out[..., self._local] = np.add.reduceat(terms, self._starts, axis=-1)
        return out

    def apply_full(self, u, v):
        out = np.zeros(np.broadcast_shapes(u.shape, v.shape)[:-1]
                       + (self.n_modes,))
        if self.c.size:
            terms = self.c * u[..., self.j] * v[..., self.k]
            out[..., self._m_present] = np.add.reduceat(terms, self._starts, axis=-1)
        return out


@dataclass
class EnsembleRun:
    """Output bundle of ``run_ensemble``; array fields are ``None`` when the
    corresponding feature was off."""

    model: ModelSpec
    params: SimParams
    seed: int
    stream_ids: np.ndarray
    dt: float
    times: np.ndarray                     # stored slow times (n_store,)
    states: Optional[np.ndarray]          # (P, n_store, N) slow coordinates
    ae: Optional[np.ndarray]              # (P, n_store, d) amplitudes
    z: Optional[np.ndarray]               # (P, n_store, N) fast-scale OU
    tau: np.ndarray                       # (P,) slow exit times, inf if none
    blowup: np.ndarray                    # (P,) bool
    final_fast: Optional[np.ndarray]      # (P, N)
    final_ae: Optional[np.ndarray]        # (P, d)
    propagators: Optional[np.ndarray]     # (P, N, ncols)
    tangent_norms: Optional[np.ndarray]   # (P, n_store) full tangent norm
    tangent_stable_norms: Optional[np.ndarray]
    metrics: dict = field(default_factory=dict)

    def path(self, i: int) -> "Trajectory":
        return Trajectory(
            model=self.model, params=self.params, dt=self.dt,
            times=self.times,
            states=None if self.states is None else self.states[i],
            ae=None if self.ae is None else self.ae[i],
            z=None if self.z is None else self.z[i],
            tau=float(self.tau[i]), blowup=bool(self.blowup[i]),
            seed=self.seed, stream_id=int(self.stream_ids[i]))


@dataclass
class Trajectory:
    """One stored path in slow coordinates.

    ``states[t]`` holds ``U_c`` on the kernel entries and ``U_s`` on the
    stable entries.  ``tau`` is the first slow time at which
    ``||U_c|| >= r_c`` or ``||U_s|| >= eps^-kappa`` (inf if neither
    happened before the horizon).
    """

    model: ModelSpec
    params: SimParams
    dt: float
    times: np.ndarray
    states: Optional[np.ndarray]
    ae: Optional[np.ndarray]
    z: Optional[np.ndarray]
    tau: float
    blowup: bool
    seed: int
    stream_id: int

    @property
    def Uc(self) -> np.ndarray:
        return self.states[:, self.model.kernel]

    @property
    def Us(self) -> np.ndarray:
        return self.states[:, self.model.stable]

    def norm_Uc(self) -> np.ndarray:
        return np.linalg.norm(self.Uc, axis=1)

    def norm_Us(self) -> np.ndarray:
        return np.linalg.norm(self.Us, axis=1)

    def fast_states(self) -> np.ndarray:
        return compose_fast(self.model, self.Uc, self.Us, self.params.eps)


def step_exponential(model: ModelSpec, params: SimParams, u: np.ndarray,
                     xi: np.ndarray, dt: Optional[float] = None) -> np.ndarray:
    """One exponential-Euler step on fast-scale coefficients ``u``."""
    dt = params.resolved_dt(model) if dt is None else dt
    rate = -model.eigenvalues + params.nu
    decay, var = ou_factors(rate, dt)
    w = dt * phi1(rate * dt)
    # noise amplitudes default to 1/k; callers needing custom spectra use
    # run_ensemble, which takes them explicitly
    std = params.sigma * default_alphas(model.n_modes) * np.sqrt(var)
    return decay * u + w * model.coupling.bilinear(u, u) + std * xi


def run_ensemble(model: ModelSpec,
                 params: SimParams,
                 *,
                 seed: int,
                 stream_ids,
                 horizon_slow: float,
                 alphas: Optional[np.ndarray] = None,
                 u0: Optional[np.ndarray] = None,
                 ae0: Optional[np.ndarray] = None,
                 ae_drift: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 ae_growth: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 track_z: bool = False,
                 tangent_cols: Optional[np.ndarray] = None,
                 metrics: bool = False,
                 acc_every: int = 4,
                 store_every: Optional[int] = None,
                 n_store_target: int = 256) -> EnsembleRun:
    """Advance an ensemble and collect whatever was requested.

    ``stream_ids`` fixes one noise stream per path.  ``u0`` is a fast-scale
    initial state ``(P, N)``; ``None`` disables the SPDE state (amplitude
    only).  ``ae_drift`` is the full slow-scale drift of the amplitude
    (including the ``nu/eps^2`` part); ``ae_growth`` is the scalar
    instantaneous growth rate of its linearisation along ``a``, integrated
    in slow time (for kernel dimension one).  ``tangent_cols`` of shape
    ``(N, ncols)`` switches on tangent propagation.  ``metrics=True`` turns
    on the running error/residual accumulators (sampled every ``acc_every``
    steps, trapezoid rule, frozen at the stopping time).
    """
    eps = params.eps
    e2 = eps * eps
    dt = params.resolved_dt(model)
    n_steps = params.n_steps(model, horizon_slow)
    dT = e2 * dt
    stream_ids = np.asarray(stream_ids, dtype=np.int64)
    n_paths = stream_ids.size
    n = model.n_modes
    if alphas is None:
        alphas = default_alphas(n)
    alphas = np.asarray(alphas, dtype=float)
    if alphas.shape != (n,):
        raise ValueError("alphas must have one entry per mode")

    if store_every is None:
        store_every = max(1, n_steps // n_store_target)
    n_store = n_steps // store_every + 1
    times = dT * store_every * np.arange(n_store)

    ker, stb = model.kernel, model.stable
    rate = -model.eigenvalues + params.nu
    decay, var = ou_factors(rate, dt)
    wphi = dt * phi1(rate * dt)
    noise_std = params.sigma * alphas * np.sqrt(var)
    inv_scale = np.empty(n)
    inv_scale[ker] = 1.0 / eps
    inv_scale[stb] = 1.0 / e2
    us_exit = eps ** (-params.kappa)

    spde_on = u0 is not None
    ae_on = ae0 is not None
    if ae_on and ae_drift is None:
        raise ValueError("ae0 given without ae_drift")
    tangent_on = tangent_cols is not None
    if tangent_on and not spde_on:
        raise ValueError("tangent propagation needs the SPDE state")
    if metrics and not spde_on:
        raise ValueError("metrics need the SPDE state")

    u = np.array(u0, dtype=float) if spde_on else None
    if spde_on and u.shape != (n_paths, n):
        raise ValueError(f"u0 must have shape {(n_paths, n)}")
    a = np.array(ae0, dtype=float) if ae_on else None
    if ae_on and (a.ndim != 2 or a.shape[0] != n_paths):
        raise ValueError("ae0 must have shape (n_paths, kernel_dim)")
    z = np.zeros((n_paths, n)) if track_z else None
    if tangent_on:
        cols = np.asarray(tangent_cols, dtype=float)
        if cols.ndim != 2 or cols.shape[0] != n:
            raise ValueError("tangent_cols must have shape (n, ncols)")
        V = np.broadcast_to(cols, (n_paths,) + cols.shape).copy()
    else:
        V = None

    if ae_on:
        # amplitude noise: eps^-2 sigma d(eps W) = eps^-1 sigma alpha sqrt(dt) xi
        ae_namp = params.sigma / eps * alphas[ker] * np.sqrt(dt)

    noise = EnsembleNoise(seed, stream_ids, n)

    states = np.empty((n_paths, n_store, n)) if spde_on else None
    ae_store = np.empty((n_paths, n_store, ker.size)) if ae_on else None
    z_store = np.empty((n_paths, n_store, n)) if track_z else None
    t_norms = np.empty((n_paths, n_store)) if tangent_on else None
    t_snorms = np.empty((n_paths, n_store)) if tangent_on else None

    tau = np.full(n_paths, np.inf)
    blowup = np.zeros(n_paths, dtype=bool)
    alive = np.ones(n_paths, dtype=bool)
    active = np.ones(n_paths, dtype=bool)   # alive and before the exit time

    kr = _KernelRows(model) if metrics else None
    if metrics:
        nk = ker.size
        i1 = np.zeros((n_paths, nk))   # int B_c(U_c, U_s) dS
        i2 = np.zeros((n_paths, nk))   # int B_c(U_c, As^-1 B_s(U_c,U_c)) dS
        i3 = np.zeros((n_paths, nk))   # int B_c(U_s, U_s) dS
        int_g = np.zeros(n_paths)      # int growth(a) dS
        sup = {k: np.zeros(n_paths) for k in
               ("R1", "R2", "R", "err_ca", "resid_z_s1", "resid_z_s2",
                "Uc", "Us")}
        prev = {}

        def integrands():
            Uc_full = np.zeros_like(u)
            Uc_full[:, ker] = u[:, ker] * (1.0 / eps)
            Us_full = np.zeros_like(u)
            Us_full[:, stb] = u[:, stb] * (1.0 / e2)
            f1 = kr.b_kernel(Uc_full, Us_full)
            w2 = kr.stable_quadratic_of_kernel(Uc_full)
            f2 = kr.b_kernel(Uc_full, w2)
            f3 = kr.b_kernel(Us_full, Us_full)
            g = ae_growth(a) if ae_growth is not None else None
            return f1, f2, f3, g

        def metric_update(T_now):
            f1, f2, f3, g = integrands()
            h = 0.5 * (T_now - prev["T"])
            msk = active
            # Integrals run to the horizon for every living path, like the
            # tangent propagator does; only the sup accumulators freeze at
            # the exit time.
            imsk = alive
            i1[imsk] += h * (prev["f1"][imsk] + f1[imsk])
            i2[imsk] += h * (prev["f2"][imsk] + f2[imsk])
            i3[imsk] += h * (prev["f3"][imsk] + f3[imsk])
            if g is not None:
                int_g[imsk] += h * (prev["g"][imsk] + g[imsk])
            r2 = np.linalg.norm(i1 + i2, axis=1)
            r1 = eps * np.linalg.norm(i3, axis=1)
            rr = np.linalg.norm(eps * i3 + 2.0 * (i1 + i2), axis=1)
            nc = np.linalg.norm(u[:, ker], axis=1) * (1.0 / eps)
            ns = np.linalg.norm(u[:, stb], axis=1) * (1.0 / e2)
            np.maximum(sup["R2"], np.where(msk, r2, 0.0), out=sup["R2"])
            np.maximum(sup["R1"], np.where(msk, r1, 0.0), out=sup["R1"])
            np.maximum(sup["R"], np.where(msk, rr, 0.0), out=sup["R"])
            np.maximum(sup["Uc"], np.where(msk, nc, 0.0), out=sup["Uc"])
            np.maximum(sup["Us"], np.where(msk, ns, 0.0), out=sup["Us"])
            if ae_on:
                err = np.linalg.norm(u[:, ker] * (1.0 / eps) - a, axis=1)
                np.maximum(sup["err_ca"], np.where(msk, err, 0.0),
                           out=sup["err_ca"])
            if track_z:
                zs = z[:, stb]
                us = u[:, stb] * (1.0 / e2)
                c1 = params.sigma / e2
                d1 = np.linalg.norm(us - c1 * zs, axis=1)
                d2 = np.linalg.norm(us - params.sigma * c1 * zs, axis=1)
                np.maximum(sup["resid_z_s1"], np.where(msk, d1, 0.0),
                           out=sup["resid_z_s1"])
                np.maximum(sup["resid_z_s2"], np.where(msk, d2, 0.0),
                           out=sup["resid_z_s2"])
            prev.update(T=T_now, f1=f1, f2=f2, f3=f3, g=g)

        f1, f2, f3, g = integrands()
        prev.update(T=0.0, f1=f1, f2=f2, f3=f3, g=g)
        nc0 = np.linalg.norm(u[:, ker], axis=1) / eps
        ns0 = np.linalg.norm(u[:, stb], axis=1) / e2
        sup["Uc"][:] = nc0
        sup["Us"][:] = ns0
        if ae_on:
            sup["err_ca"][:] = np.linalg.norm(u[:, ker] / eps - a, axis=1)

    def store(idx):
        if spde_on:
            states[:, idx, :] = u * inv_scale
        if ae_on:
            ae_store[:, idx, :] = a
        if track_z:
            z_store[:, idx, :] = z
        if tangent_on:
            t_norms[:, idx] = np.linalg.norm(V, axis=(1, 2))
            t_snorms[:, idx] = np.linalg.norm(V[:, stb, :], axis=(1, 2))

    store(0)
    si = 1

    if track_z:
        zdecay, zvar = ou_factors(-model.eigenvalues, dt)
        zstd = alphas * np.sqrt(zvar)

    any_frozen = False
    for step in range(n_steps):
        xi = noise.draws(step)
        if spde_on:
            drift = model.coupling.bilinear(u, u)
            if tangent_on:
                L = model.coupling.jacobian(u)
                V_new = decay[None, :, None] * V + wphi[None, :, None] * (L @ V)
            u_new = decay * u + wphi * drift + noise_std * xi
            ok = np.isfinite(u_new).all(axis=1)
            ok &= np.einsum("ij,ij->i", u_new, u_new) < params.blowup_threshold ** 2
            newly_dead = alive & ~ok
            if newly_dead.any() or any_frozen:
                any_frozen = True
                blowup |= newly_dead
                alive &= ok
                u = np.where(alive[:, None], u_new, u)
                if tangent_on:
                    V = np.where(alive[:, None, None], V_new, V)
            else:
                u = u_new
                if tangent_on:
                    V = V_new
        if track_z:
            z = zdecay * z + zstd * xi
        if ae_on:
            a_new = a + dT * ae_drift(a) + ae_namp * xi[:, ker]
            a = np.where(alive[:, None], a_new, a) if any_frozen else a_new

        T_now = (step + 1) * dT
        if spde_on:
            nc2 = np.einsum("ij,ij->i", u[:, ker], u[:, ker])
            ns2 = np.einsum("ij,ij->i", u[:, stb], u[:, stb])
            exited = (nc2 >= (params.r_c * eps) ** 2) | (ns2 >= (us_exit * e2) ** 2)
            hit = active & alive & exited
            if hit.any():
                tau[hit] = T_now
                active &= ~hit
            active &= alive
            if metrics and (step + 1) % acc_every == 0:
                metric_update(T_now)

        if (step + 1) % store_every == 0:
            store(si)
            si += 1

    if metrics and n_steps % acc_every != 0:
        metric_update(n_steps * dT)

    out_metrics = {}
    if metrics:
        out_metrics = {
            "ito_I1": i1, "ito_I2": i2, "ito_I3": i3,
            "R1_final": eps * np.linalg.norm(i3, axis=1),
            "R2_final": np.linalg.norm(i1 + i2, axis=1),
            "sup_R1": sup["R1"], "sup_R2": sup["R2"], "sup_R": sup["R"],
            "sup_err_ca": sup["err_ca"] if ae_on else None,
            "sup_resid_z_sigma": sup["resid_z_s1"] if track_z else None,
            "sup_resid_z_sigma2": sup["resid_z_s2"] if track_z else None,
            "sup_norm_Uc": sup["Uc"], "sup_norm_Us": sup["Us"],
            "int_growth": int_g if ae_growth is not None else None,
        }

    return EnsembleRun(
        model=model, params=params, seed=seed, stream_ids=stream_ids, dt=dt,
        times=times, states=states, ae=ae_store, z=z_store,
        tau=tau, blowup=blowup,
        final_fast=u if spde_on else None,
        final_ae=a if ae_on else None,
        propagators=V if tangent_on else None,
        tangent_norms=t_norms, tangent_stable_norms=t_snorms,
        metrics=out_metrics)


def simulate(model: ModelSpec, params: SimParams, *, seed: int,
             stream_id: int = 0, horizon_slow: float,
             u0: Optional[np.ndarray] = None,
             alphas: Optional[np.ndarray] = None,
             track_z: bool = False,
             store_every: Optional[int] = None,
             n_store_target: int = 256) -> Trajectory:
    """Single-path convenience wrapper around ``run_ensemble``."""
    if u0 is None:
        u0 = np.zeros(model.n_modes)
    run = run_ensemble(model, params, seed=seed, stream_ids=[stream_id],
                       horizon_slow=horizon_slow, u0=u0[None, :],
                       alphas=alphas, track_z=track_z,
                       store_every=store_every, n_store_target=n_store_target)
    return run.path(0)
