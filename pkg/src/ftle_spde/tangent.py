"""Tangent dynamics, propagator matrices and finite-time Lyapunov exponents.

The tangent flow along a path ``u(t)`` is

    dv = [A v + nu v + 2 B(u, v)] dt

and one exponential-Euler step is ``v' = exp(r dt) v + dt phi1(r dt) L(u) v``
with ``L(u) = 2 B(u, .)``; this is exactly the derivative of the state step
with respect to the initial condition (the noise is additive and the linear
part is integrated exactly), so finite differences of the state map converge
to the propagator linearly in the perturbation size.

``ftle_spde`` reports ``ln ||M||_2 / T`` for the propagator ``M`` over a
slow-time window ``T``.  Values carry both time normalisations: the
fast-scale exponent over ``t = T / eps^2`` is ``eps^2`` times the
slow-scale one.

The matrix 2-norm comes from power iteration on ``M^T M`` with a
deterministic start vector and a residual-based convergence test;
non-convergence raises instead of returning a silently degraded value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .integrate import SimParams, Trajectory, phi1, run_ensemble
from .noise import ou_factors
from .spectral import ModelSpec

__all__ = [
    "NonConvergedError",
    "TangentState",
    "FtleValue",
    "matrix_two_norm",
    "tangent_step",
    "propagator",
    "propagator_from_trajectory",
    "propagator_ensemble",
    "ftle_spde",
    "ftle_from_propagator",
    "fd_consistency",
    "t_eps",
]


class NonConvergedError(RuntimeError):
    """Power iteration failed to reach the requested residual."""


@dataclass(frozen=True)
class TangentState:
    """A tangent vector with its kernel/stable decomposition.

    Unlike the state, the tangent carries no ``eps`` weights: the split is
    the plain orthogonal projection ``v = V_c + V_s``.  ``r_c`` and ``r_s``
    are the radii used when measuring how long the components stay bounded.
    """

    model: ModelSpec
    v: np.ndarray
    r_c: float = 3.0
    r_s: float = 3.0

    def __post_init__(self):
        arr = np.asarray(self.v, dtype=float)
        if arr.shape != (self.model.n_modes,):
            raise ValueError("tangent vector size does not match model")
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite tangent vector")
        object.__setattr__(self, "v", arr)

    @property
    def Vc(self) -> np.ndarray:
        out = np.zeros_like(self.v)
        out[self.model.kernel] = self.v[self.model.kernel]
        return out

    @property
    def Vs(self) -> np.ndarray:
        out = np.zeros_like(self.v)
        out[self.model.stable] = self.v[self.model.stable]
        return out

    def within_radii(self) -> bool:
        return (np.linalg.norm(self.Vc) < self.r_c
                and np.linalg.norm(self.Vs) < self.r_s)


class FtleValue(NamedTuple):
    """Finite-time Lyapunov exponent with explicit time normalisations."""

    slow: float           # exponent per unit slow time T
    fast: float           # exponent per unit fast time t = T / eps^2
    horizon_slow: float
    eps: float


def matrix_two_norm(M: np.ndarray, tol: float = 1e-10,
                    max_iter: int = 500) -> float:
    """Largest singular value by power iteration on ``M^T M``.

    Convergence requires the Rayleigh residual ``||G x - rho x||`` to fall
    below ``tol * rho``; hitting ``max_iter`` first raises
    ``NonConvergedError``.  The start vector is deterministic so repeated
    calls agree bit for bit.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError("need a matrix")
    n = M.shape[1]
    G = M.T @ M
    scale = float(np.abs(G).max())
    if scale == 0.0:
        return 0.0
    # deterministic, unlikely to be orthogonal to the top eigenvector
    x = np.ones(n) + 0.5 * np.cos(np.pi * np.arange(n) / max(1, n - 1))
    x /= np.linalg.norm(x)
    for _ in range(max_iter):
        y = G @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            # x landed in the null space; restart from the largest column
            x = G[:, int(np.argmax(np.linalg.norm(G, axis=0)))].copy()
            nx = np.linalg.norm(x)
            if nx == 0.0:
                return 0.0
            x /= nx
            continue
        rho = float(x @ y)
        if rho > 0.0 and np.linalg.norm(y - rho * x) <= tol * rho:
            return float(np.sqrt(rho))
        x = y / ny
    raise NonConvergedError(
        f"power iteration did not reach residual {tol:g} within "
        f"{max_iter} iterations")


def tangent_step(model: ModelSpec, params: SimParams, u: np.ndarray,
                 v: np.ndarray, dt: Optional[float] = None) -> np.ndarray:
    """One linearised step along the state ``u``; ``v`` may be a vector or
    a matrix of columns."""
    dt = params.resolved_dt(model) if dt is None else dt
    rate = -model.eigenvalues + params.nu
    decay, _ = ou_factors(rate, dt)
    w = dt * phi1(rate * dt)
    L = model.coupling.jacobian(u)
    if v.ndim == 1:
        return decay * v + w * (L @ v)
    return decay[:, None] * v + w[:, None] * (L @ v)


def propagator(model: ModelSpec, params: SimParams, *, seed: int,
               stream_id: int = 0, u0: np.ndarray, horizon_slow: float,
               alphas: Optional[np.ndarray] = None) -> np.ndarray:
    """Propagator matrix of the tangent flow over a slow window, replaying
    the state path from its noise key.  Zero horizon gives the identity."""
    if horizon_slow == 0.0:
        return np.eye(model.n_modes)
    run = run_ensemble(model, params, seed=seed, stream_ids=[stream_id],
                       horizon_slow=horizon_slow, alphas=alphas,
                       u0=np.asarray(u0, dtype=float)[None, :],
                       tangent_cols=np.eye(model.n_modes))
    return run.propagators[0]


def propagator_from_trajectory(traj: Trajectory,
                               horizon_slow: Optional[float] = None,
                               alphas: Optional[np.ndarray] = None) -> np.ndarray:
    """Propagator along a stored trajectory, re-simulated at full fast
    resolution from the trajectory's noise key (stored snapshots are too
    coarse for the tangent pairing)."""
    if horizon_slow is None:
        horizon_slow = float(traj.times[-1])
    u0 = traj.fast_states()[0]
    return propagator(traj.model, traj.params, seed=traj.seed,
                      stream_id=traj.stream_id, u0=u0,
                      horizon_slow=horizon_slow, alphas=alphas)


def propagator_ensemble(model: ModelSpec, params: SimParams, *, seed: int,
                        stream_ids: Sequence[int], u0: np.ndarray,
                        horizon_slow: float,
                        alphas: Optional[np.ndarray] = None):
    """Propagators for many paths at once; returns the full run bundle."""
    return run_ensemble(model, params, seed=seed, stream_ids=stream_ids,
                        horizon_slow=horizon_slow, alphas=alphas,
                        u0=u0, tangent_cols=np.eye(model.n_modes))


def ftle_from_propagator(M: np.ndarray, params: SimParams,
                         horizon_slow: float) -> FtleValue:
    lam_slow = float(np.log(matrix_two_norm(M)) / horizon_slow)
    return FtleValue(slow=lam_slow, fast=params.eps ** 2 * lam_slow,
                     horizon_slow=horizon_slow, eps=params.eps)


def ftle_spde(model: ModelSpec, params: SimParams, *, seed: int,
              stream_id: int = 0, u0: np.ndarray, horizon_slow: float,
              alphas: Optional[np.ndarray] = None) -> FtleValue:
    """Finite-time Lyapunov exponent of one SPDE path over a slow window."""
    M = propagator(model, params, seed=seed, stream_id=stream_id, u0=u0,
                   horizon_slow=horizon_slow, alphas=alphas)
    return ftle_from_propagator(M, params, horizon_slow)


def fd_consistency(model: ModelSpec, params: SimParams, *, seed: int,
                   stream_id: int = 0, u0: np.ndarray, v0: np.ndarray,
                   horizon_slow: float, h_values: Sequence[float],
                   alphas: Optional[np.ndarray] = None) -> np.ndarray:
    """Errors ``||(S(u0 + h v0) - S(u0))/h - M v0||`` of the state map ``S``
    against the propagator direction, one per ``h``; the same noise stream
    drives every run."""
    u0 = np.asarray(u0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    base = run_ensemble(model, params, seed=seed, stream_ids=[stream_id],
                        horizon_slow=horizon_slow, alphas=alphas,
                        u0=u0[None, :], tangent_cols=v0[:, None])
    mv = base.propagators[0][:, 0]
    u_end = base.final_fast[0]
    errs = []
    for h in h_values:
        pert = run_ensemble(model, params, seed=seed, stream_ids=[stream_id],
                            horizon_slow=horizon_slow, alphas=alphas,
                            u0=(u0 + h * v0)[None, :])
        diff = (pert.final_fast[0] - u_end) / h
        errs.append(np.linalg.norm(diff - mv))
    return np.asarray(errs)


def t_eps(mu: float, eps: float, factor: float = 10.0) -> float:
    """Slow-time transient length ``eps^2 |ln eps| factor / mu`` after which
    the stable tangent component is expected to have collapsed; with the
    default factor the linear transient ``e^{-mu T eps^-2}`` has shrunk to
    ``eps^factor``."""
    if not (0.0 < eps < 1.0):
        raise ValueError("eps must be in (0, 1)")
    if mu <= 0:
        raise ValueError("mu must be > 0")
    return eps * eps * abs(np.log(eps)) * factor / mu
