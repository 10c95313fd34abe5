"""Reduced cubic dynamics on the kernel of the linear part.

For a state ``u = eps U_c + eps^2 U_s`` the kernel amplitude ``a`` follows,
on the slow scale ``T = eps^2 t``,

    da = [nu / eps^2 a + 2 F_c(a)] dT + eps^-2 sigma d(P_c W-tilde)

with the cubic ``F_c(a) = -P_c B(a, A_s^{-1} P_s B(a, a))``.  ``derive_Fc``
evaluates that composition on kernel basis combinations and stores the
symmetrised coefficient tensor, so applying the form is a small einsum.
The derivative is

    DF_c(a) b = -B_c(b, A_s^{-1} B_s(a, a)) - 2 B_c(a, A_s^{-1} B_s(a, b))

(equivalently ``3 T(b, a, a)`` on the symmetrised tensor); both routes are
implemented and cross-checked in the tests together with central finite
differences.

The linearised equation along a path ``a(S)`` is scalar when the kernel is
one-dimensional and its fundamental solution is ``exp`` of a running
integral; ``ae_linearized`` uses that closed form and falls back to a
step-by-step matrix exponential product for larger kernels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .integrate import SimParams, run_ensemble
from .spectral import ModelSpec

__all__ = [
    "CubicForm",
    "derive_Fc",
    "derive_DFc",
    "slow_drift",
    "slow_growth",
    "ae_simulate",
    "ae_linearized",
    "ftle_ae",
    "ae_deterministic_ftle",
    "ae_deterministic_ftle_closed",
]


@dataclass(frozen=True, eq=False)
class CubicForm:
    """Symmetric cubic form on the kernel: ``F(a)_m = T[m,i,j,k] a_i a_j a_k``.

    Construction rejects forms that fail the one-sided stability sign
    ``<F(a), a> <= 0`` on a sample of directions, because the reduction is
    only meaningful for a stabilising nonlinearity.
    """

    model: ModelSpec
    tensor: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.tensor, dtype=float)
        d = self.model.kernel_dim
        if t.shape != (d, d, d, d):
            raise ValueError(f"tensor must have shape {(d,) * 4}")
        if not np.all(np.isfinite(t)):
            raise ValueError("non-finite cubic coefficients")
        object.__setattr__(self, "tensor", t)
        rng = np.random.default_rng(0)
        probes = rng.standard_normal((64, d))
        vals = np.einsum("mijk,pi,pj,pk->pm", t, probes, probes, probes)
        pairing = np.einsum("pm,pm->p", vals, probes)
        if np.any(pairing > 1e-10 * np.linalg.norm(probes, axis=1) ** 4):
            raise ValueError("cubic form is not stabilising: <F(a), a> > 0 "
                             "on sampled directions")

    @property
    def dim(self) -> int:
        return self.tensor.shape[0]

    @property
    def scalar(self) -> float:
        """The single coefficient when the kernel is one-dimensional."""
        if self.dim != 1:
            raise ValueError("scalar form only defined for a 1-d kernel")
        return float(self.tensor[0, 0, 0, 0])

    def __call__(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        return np.einsum("mijk,...i,...j,...k->...m", self.tensor, a, a, a)

    def derivative(self, a: np.ndarray) -> np.ndarray:
        """Jacobian ``DF(a) = 3 T(., a, a)`` of shape ``(..., d, d)``."""
        a = np.asarray(a, dtype=float)
        return 3.0 * np.einsum("mljk,...j,...k->...ml", self.tensor, a, a)


def _fc_composition(model: ModelSpec, a_full: np.ndarray) -> np.ndarray:
    """``-P_c B(a, As^-1 P_s B(a, a))`` on full-width kernel-supported
    vectors; returns kernel components."""
    b = model.coupling.bilinear(a_full, a_full)
    w = np.zeros_like(b)
    w[..., model.stable] = -b[..., model.stable] / model.eigenvalues[model.stable]
    out = model.coupling.bilinear(a_full, w)
    return -out[..., model.kernel]


def derive_Fc(model: ModelSpec) -> CubicForm:
    """Closed cubic on the kernel obtained by slaving the stable modes."""
    d = model.kernel_dim
    basis = np.zeros((d, model.n_modes))
    basis[np.arange(d), model.kernel] = 1.0

    def G(vec):  # vec: coefficients on the kernel basis
        return _fc_composition(model, vec @ basis)

    tensor = np.zeros((d, d, d, d))
    for i in range(d):
        for j in range(i, d):
            for k in range(j, d):
                ei, ej, ek = (np.eye(d)[x] for x in (i, j, k))
                val = (G(ei + ej + ek) - G(ei + ej) - G(ej + ek) - G(ei + ek)
                       + G(ei) + G(ej) + G(ek)) / 6.0
                for perm in {(i, j, k), (i, k, j), (j, i, k), (j, k, i),
                             (k, i, j), (k, j, i)}:
                    tensor[:, perm[0], perm[1], perm[2]] = val
    return CubicForm(model, tensor)


def derive_DFc(model: ModelSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Derivative of the reduction by direct composition (independent of the
    tensor route): ``DF_c(a) b = -B_c(b, As^-1 B_s(a,a)) - 2 B_c(a, As^-1
    B_s(a,b))``.  Returns a function ``a -> (d, d)`` matrix."""
    d = model.kernel_dim
    basis = np.zeros((d, model.n_modes))
    basis[np.arange(d), model.kernel] = 1.0
    inv_lam = np.zeros(model.n_modes)
    inv_lam[model.stable] = 1.0 / model.eigenvalues[model.stable]

    def as_inv_ps(v):
        out = np.zeros_like(v)
        out[..., model.stable] = -v[..., model.stable] * inv_lam[model.stable]
        return out

    def jac(a):
        a_full = np.asarray(a, dtype=float) @ basis
        baa = as_inv_ps(model.coupling.bilinear(a_full, a_full))
        cols = []
        for l in range(d):
            b_full = basis[l]
            term1 = model.coupling.bilinear(b_full, baa)
            bab = as_inv_ps(model.coupling.bilinear(a_full, b_full)
                            + model.coupling.bilinear(b_full, a_full))
            term2 = model.coupling.bilinear(a_full, bab)
            cols.append(-(term1[..., model.kernel] + term2[..., model.kernel]))
        return np.stack(cols, axis=-1)

    return jac


def slow_drift(cubic: CubicForm, params: SimParams) -> Callable[[np.ndarray], np.ndarray]:
    """Full slow-scale drift ``a -> nu/eps^2 a + 2 F_c(a)``."""
    nu_slow = params.nu / params.eps ** 2

    def drift(a):
        return nu_slow * a + 2.0 * cubic(a)

    return drift


def slow_growth(cubic: CubicForm, params: SimParams) -> Callable[[np.ndarray], np.ndarray]:
    """Instantaneous growth rate of the linearised amplitude equation,
    ``nu/eps^2 + 2 DF_c(a)``, as a scalar; kernel dimension one only."""
    if cubic.dim != 1:
        raise ValueError("scalar growth rate needs a 1-d kernel")
    nu_slow = params.nu / params.eps ** 2
    c6 = 6.0 * cubic.scalar

    def growth(a):
        return nu_slow + c6 * a[..., 0] ** 2

    return growth


def ae_simulate(model: ModelSpec, cubic: CubicForm, params: SimParams, *,
                seed: int, stream_id: int = 0, a0, horizon_slow: float,
                alphas: Optional[np.ndarray] = None,
                store_every: Optional[int] = None,
                n_store_target: int = 256,
                with_noise: bool = True):
    """Integrate the amplitude equation alone, driven by the kernel
    components of the same keyed noise stream the full model would use.
    Returns ``(times, a_path)``.  ``with_noise=False`` drops the stochastic
    term (the deterministic reduction)."""
    p = params if with_noise else SimParams(
        eps=params.eps, nu=params.nu, sigma=0.0, dt=params.dt,
        r_c=params.r_c, kappa=params.kappa,
        blowup_threshold=params.blowup_threshold,
        scale_bound=params.scale_bound)
    a0 = np.atleast_1d(np.asarray(a0, dtype=float))
    run = run_ensemble(model, p, seed=seed, stream_ids=[stream_id],
                       horizon_slow=horizon_slow, alphas=alphas,
                       ae0=a0[None, :], ae_drift=slow_drift(cubic, p),
                       store_every=store_every,
                       n_store_target=n_store_target)
    return run.times, run.ae[0]


def ae_linearized(cubic: CubicForm, params: SimParams, times: np.ndarray,
                  a_path: np.ndarray) -> float:
    """Fundamental-solution magnitude of the linearised amplitude equation
    along ``a_path``.

    Kernel dimension one: ``exp(int nu/eps^2 + 2 dF_c/da(a) dS)`` with the
    integral taken by trapezoid (exact for the piecewise-linear
    interpolant).  Higher dimensions: interval-wise matrix exponentials of
    the midpoint Jacobian; returns the 2-norm of the product.
    """
    a_path = np.atleast_2d(np.asarray(a_path, dtype=float).T).T
    if cubic.dim == 1:
        g = slow_growth(cubic, params)(a_path)
        return float(np.exp(np.trapezoid(g, times)))
    from scipy.linalg import expm
    nu_slow = params.nu / params.eps ** 2
    d = cubic.dim
    phi = np.eye(d)
    for i in range(len(times) - 1):
        h = times[i + 1] - times[i]
        mid = 0.5 * (a_path[i] + a_path[i + 1])
        rate = nu_slow * np.eye(d) + 2.0 * cubic.derivative(mid)
        phi = expm(rate * h) @ phi
    return float(np.linalg.norm(phi, 2))


def ftle_ae(cubic: CubicForm, params: SimParams, times: np.ndarray,
            a_path: np.ndarray) -> float:
    """Slow-scale finite-time Lyapunov exponent of the amplitude equation
    along a path: ``ln ||phi(T)|| / T``."""
    T = float(times[-1] - times[0])
    if T <= 0:
        raise ValueError("need a nonzero horizon")
    return float(np.log(ae_linearized(cubic, params, times, a_path)) / T)


def _scalar_coefficients(cubic: CubicForm, params: SimParams):
    if cubic.dim != 1:
        raise ValueError("deterministic exponent needs a 1-d kernel")
    g = params.nu / params.eps ** 2
    h = 2.0 * cubic.scalar          # drift is g a + h a^3
    return g, h


def ae_deterministic_ftle(cubic: CubicForm, params: SimParams, a0: float,
                          horizon_slow: float, rtol: float = 1e-11,
                          atol: float = 1e-13) -> float:
    """Noise-free amplitude exponent by adaptive integration.

    Solves ``a' = g a + h a^3`` together with the running growth integral
    ``G' = g + 3 h a^2`` and returns ``G(T) / T``.
    """
    from scipy.integrate import solve_ivp
    g, h = _scalar_coefficients(cubic, params)
    T = float(horizon_slow)
    if T <= 0:
        raise ValueError("need a positive horizon")

    def rhs(_, state):
        a = state[0]
        return (g * a + h * a ** 3, g + 3.0 * h * a * a)

    sol = solve_ivp(rhs, (0.0, T), (float(a0), 0.0), method="DOP853",
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"amplitude integration failed: {sol.message}")
    return float(sol.y[1, -1] / T)


def ae_deterministic_ftle_closed(cubic: CubicForm, params: SimParams,
                                 a0: float, horizon_slow: float) -> float:
    """Closed-form noise-free amplitude exponent.

    The substitution ``y = a^-2`` turns ``a' = g a + h a^3`` into the
    linear equation ``y' = -2 g y - 2 h``, so

        y(T) = (y0 + h/g) e^{-2 g T} - h/g        (g != 0)
        y(T) = y0 - 2 h T                          (g == 0)

    and the growth integral collapses to logarithms:
    ``lambda = -2 g - (3 / 2T) ln(y(T) / y0)``.
    """
    g, h = _scalar_coefficients(cubic, params)
    T = float(horizon_slow)
    if T <= 0:
        raise ValueError("need a positive horizon")
    if a0 == 0.0 or h == 0.0:
        # the origin is invariant; with no cubic the equation is linear
        return g
    y0 = 1.0 / float(a0) ** 2
    if g == 0.0:
        y_T = y0 - 2.0 * h * T
    else:
        y_T = (y0 + h / g) * np.exp(-2.0 * g * T) - h / g
    if y_T <= 0.0:
        raise ValueError("amplitude reaches infinity before the horizon")
    return float(-2.0 * g - 1.5 * np.log(y_T / y0) / T)
