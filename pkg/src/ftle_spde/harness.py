"""Statistical post-processing of simulation ensembles.

This module holds the pure analysis pieces: per-path sample records,
sweep statistics with log-log slope fits, Wilson score intervals for sign
fractions, offline reconstruction of the reduction residuals from stored
trajectories, the propagator-gap bound checks, and the fit of the stable
tangent decay profile.  Nothing here runs a simulation; the drivers in
``experiments`` produce the inputs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .integrate import Trajectory
from .tangent import t_eps

__all__ = [
    "FtleSample",
    "SweepResult",
    "ItoResidualSeries",
    "GapCheck",
    "GapReport",
    "DecayFit",
    "fit_loglog",
    "wilson_interval",
    "sign_fraction",
    "ito_residual",
    "approximation_error",
    "gap_bound_check",
    "decay_profile_fit",
]


@dataclass(frozen=True)
class FtleSample:
    """One path's finite-time Lyapunov data on a fixed slow window.

    ``lam_spde`` and ``lam_ae`` are in slow time units (exponent per unit
    ``T``); the fast-scale values are ``eps^2`` times these, exposed as
    properties so no caller ever mixes the two scales silently.  ``k_x``
    and ``k_n`` are the measured distances between the tangent propagator
    and the amplitude propagator embedded on the kernel, from a full basis
    and from a kernel basis of initial vectors respectively.
    """

    seed: int
    stream_id: int
    eps: float
    nu: float
    sigma: float
    horizon_slow: float
    lam_spde: float
    lam_ae: float
    k_x: float
    k_n: float
    r2_sup: float
    tau_star: float
    flags: tuple = ()
    time_scale: str = "slow"

    def __post_init__(self):
        if self.time_scale != "slow":
            raise ValueError("samples store slow-scale exponents only")
        if "blowup" not in self.flags:
            for name in ("lam_spde", "lam_ae", "k_x", "k_n", "r2_sup"):
                if not np.isfinite(getattr(self, name)):
                    raise ValueError(f"non-finite {name} without blowup flag")

    @property
    def lam_spde_fast(self) -> float:
        return self.eps ** 2 * self.lam_spde

    @property
    def lam_ae_fast(self) -> float:
        return self.eps ** 2 * self.lam_ae

    @property
    def gap_slow(self) -> float:
        return self.lam_spde - self.lam_ae

    @property
    def gap_fast(self) -> float:
        return self.eps ** 2 * (self.lam_spde - self.lam_ae)

    def as_record(self) -> dict:
        """Flat dict for one JSONL line."""
        return {
            "seed": self.seed, "stream_id": self.stream_id,
            "eps": self.eps, "nu": self.nu, "sigma": self.sigma,
            "horizon_slow": self.horizon_slow,
            "lam_spde_slow": self.lam_spde, "lam_ae_slow": self.lam_ae,
            "lam_spde_fast": self.lam_spde_fast,
            "lam_ae_fast": self.lam_ae_fast,
            "k_x": self.k_x, "k_n": self.k_n, "r2_sup": self.r2_sup,
            "tau_star": self.tau_star, "flags": list(self.flags),
            "time_scale": self.time_scale,
        }


@dataclass
class SweepResult:
    """Ensemble statistics of error metrics across an ``eps`` grid.

    ``stats[metric]`` has one row per ``eps`` with columns
    ``(median, q05, q95)``.  ``slopes[metric]`` is the least-squares slope
    of ``log(median)`` against ``log(eps)`` with its standard error; fits
    are only made from at least three grid points with positive medians.
    ``raw[metric]`` keeps the per-path values, one row per ``eps``.
    """

    eps_grid: np.ndarray
    n_paths: int
    stats: dict = field(default_factory=dict)
    slopes: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def add_metric(self, name: str, per_eps_values: Sequence[np.ndarray]):
        rows = []
        raw = []
        for vals in per_eps_values:
            vals = np.asarray(vals, dtype=float)
            raw.append(vals)
            finite = vals[np.isfinite(vals)]
            if finite.size == 0:
                rows.append((np.nan, np.nan, np.nan))
            else:
                rows.append((float(np.median(finite)),
                             float(np.quantile(finite, 0.05)),
                             float(np.quantile(finite, 0.95))))
        self.stats[name] = np.asarray(rows)
        self.raw[name] = raw
        med = self.stats[name][:, 0]
        if med.size >= 3 and np.all(np.isfinite(med)) and np.all(med > 0):
            self.slopes[name] = fit_loglog(self.eps_grid, med)

    def slope(self, name: str) -> float:
        return self.slopes[name][0]


def fit_loglog(x: np.ndarray, y: np.ndarray):
    """Least-squares slope of ``log y`` against ``log x`` with its standard
    error.  Refuses fewer than three points: two points always fit exactly
    and say nothing about a rate."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise ValueError("slope fit needs at least 3 grid points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("slope fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    lxc = lx - lx.mean()
    sxx = float(lxc @ lxc)
    slope = float(lxc @ ly) / sxx
    resid = ly - (ly.mean() + slope * lxc)
    dof = x.size - 2
    stderr = float(np.sqrt((resid @ resid) / dof / sxx)) if dof > 0 else np.inf
    return slope, stderr


def wilson_interval(k: int, n: int, z: float = 1.959963984540054):
    """Wilson score interval for a binomial proportion ``k / n``."""
    if n <= 0 or not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n with n > 0")
    p = k / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    half = z * np.sqrt(p * (1.0 - p) / n + z2 / (4 * n * n)) / denom
    lo = 0.0 if k == 0 else max(0.0, center - half)
    hi = 1.0 if k == n else min(1.0, center + half)
    return lo, hi


def sign_fraction(values: np.ndarray, positive: bool) -> dict:
    """Count, fraction and Wilson interval of the strict sign of finite
    entries."""
    vals = np.asarray(values, dtype=float)
    vals = vals[np.isfinite(vals)]
    n = vals.size
    if n == 0:
        raise ValueError("no finite values")
    k = int(np.sum(vals > 0) if positive else np.sum(vals < 0))
    lo, hi = wilson_interval(k, n)
    return {"count": k, "n": n, "fraction": k / n,
            "wilson_lo": lo, "wilson_hi": hi}


# ----------------------------------------------------------- Ito residual

@dataclass
class ItoResidualSeries:
    """Reduction residuals reconstructed from a stored trajectory.

    ``R2`` is the defect of replacing the mixed quadratic kernel forcing by
    its quadratic-in-``U_c`` stationary value; ``R1`` is the purely stable
    quadratic contribution weighted by ``eps``; ``R`` combines both the way
    they enter the amplitude equation.  All three are cumulative integrals
    over slow time, cropped at the trajectory's exit time.
    """

    times: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    R: np.ndarray
    refinement_gap: float
    resolution_warning: bool


def _residual_integrands(traj: Trajectory):
    m = traj.model
    n_store = traj.times.size
    Uc_full = np.zeros((n_store, m.n_modes))
    Uc_full[:, m.kernel] = traj.Uc
    Us_full = np.zeros((n_store, m.n_modes))
    Us_full[:, m.stable] = traj.Us
    f1 = m.coupling.bilinear(Uc_full, Us_full)[:, m.kernel]
    b = m.coupling.bilinear(Uc_full, Uc_full)
    w2 = np.zeros_like(b)
    w2[:, m.stable] = -b[:, m.stable] / m.eigenvalues[m.stable]
    f2 = m.coupling.bilinear(Uc_full, w2)[:, m.kernel]
    f3 = m.coupling.bilinear(Us_full, Us_full)[:, m.kernel]
    return f1, f2, f3


def _cumtrap(f: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(f)
    h = 0.5 * np.diff(t)[:, None]
    out[1:] = np.cumsum(h * (f[1:] + f[:-1]), axis=0)
    return out


def ito_residual(traj: Trajectory) -> ItoResidualSeries:
    """Residual time series from a stored trajectory, with a quadrature
    self-check: the series is recomputed on every second stored point and a
    relative disagreement above 10% raises a resolution warning."""
    keep = traj.times <= min(traj.tau, traj.times[-1])
    times = traj.times[keep]
    f1, f2, f3 = _residual_integrands(traj)
    f1, f2, f3 = f1[keep], f2[keep], f3[keep]
    I1 = _cumtrap(f1, times)
    I2 = _cumtrap(f2, times)
    I3 = _cumtrap(f3, times)
    eps = traj.params.eps
    R1 = eps * np.linalg.norm(I3, axis=1)
    R2 = np.linalg.norm(I1 + I2, axis=1)
    R = np.linalg.norm(eps * I3 + 2.0 * (I1 + I2), axis=1)

    gap = 0.0
    if times.size >= 5:
        half = slice(None, None, 2)
        I1h = _cumtrap(f1[half], times[half])
        I2h = _cumtrap(f2[half], times[half])
        R2h = np.linalg.norm(I1h + I2h, axis=1)
        # normalise by whichever resolution saw more signal, so a series
        # that cancels to zero on one grid still counts as disagreement
        scale = float(max(np.max(R2), np.max(R2h)))
        if scale > 0.0:
            gap = float(np.max(np.abs(R2[half] - R2h))) / scale
    warn = gap > 0.10
    if warn:
        warnings.warn(
            f"stored resolution too coarse for the residual quadrature "
            f"(refinement disagreement {gap:.1%})", RuntimeWarning)
    return ItoResidualSeries(times=times, R1=R1, R2=R2, R=R,
                             refinement_gap=gap, resolution_warning=warn)


def approximation_error(traj: Trajectory,
                        ae_path: Optional[np.ndarray] = None) -> float:
    """Sup over stored times up to ``min(tau, horizon)`` of
    ``||U_c(T) - a(T)||``.  ``ae_path`` defaults to the amplitude path
    carried by the trajectory; passing one generated with independent noise
    turns this into the decoupling control."""
    if ae_path is None:
        ae_path = traj.ae
    if ae_path is None:
        raise ValueError("trajectory has no amplitude path and none was given")
    a = np.asarray(ae_path, dtype=float)
    if a.shape[0] != traj.times.size:
        raise ValueError("amplitude path is not on the trajectory's grid")
    keep = traj.times <= min(traj.tau, traj.times[-1])
    diff = traj.Uc[keep] - a[keep]
    return float(np.max(np.linalg.norm(diff, axis=1)))


# -------------------------------------------------------- gap bound check

@dataclass(frozen=True)
class GapCheck:
    """Bound verdict for one sample."""

    stream_id: int
    gap: float                 # lam_spde - lam_ae, slow units
    upper_bound: float
    upper_holds: bool
    q: float                   # K_N e^{-T lam_ae}, validity margin
    lower_valid: bool
    lower_bound: float
    lower_holds: bool


@dataclass
class GapReport:
    checks: list
    n: int
    upper_violations: int
    lower_checked: int
    lower_violations: int

    @property
    def upper_violation_fraction(self) -> float:
        return self.upper_violations / self.n if self.n else 0.0

    @property
    def lower_violation_fraction(self) -> float:
        return (self.lower_violations / self.lower_checked
                if self.lower_checked else 0.0)


def gap_bound_check(samples: Sequence[FtleSample], tol: float = 1e-9) -> GapReport:
    """Check the propagator-gap bounds on every sample.

    Upper: ``lam_spde - lam_ae <= K_X e^{-T lam_ae} / T``.  Lower (only
    where ``q = K_N e^{-T lam_ae} < 1/2``):
    ``lam_spde - lam_ae >= -(1/T) q / (1 - q)``, the ``1/(1-q)`` factor
    playing the role of the constant in front of the kernel defect.
    ``tol`` absorbs quadrature and iteration roundoff.
    """
    checks = []
    up_viol = low_checked = low_viol = n = 0
    for s in samples:
        if "blowup" in s.flags:
            continue
        n += 1
        T = s.horizon_slow
        gap = s.lam_spde - s.lam_ae
        damp = np.exp(-T * s.lam_ae)
        upper = s.k_x * damp / T
        upper_ok = gap <= upper + tol
        q = s.k_n * damp
        valid = q < 0.5
        lower = -q / (1.0 - q) / T if valid else -np.inf
        lower_ok = (gap >= lower - tol) if valid else True
        checks.append(GapCheck(stream_id=s.stream_id, gap=gap,
                               upper_bound=upper, upper_holds=upper_ok,
                               q=q, lower_valid=valid, lower_bound=lower,
                               lower_holds=lower_ok))
        up_viol += not upper_ok
        if valid:
            low_checked += 1
            low_viol += not lower_ok
    return GapReport(checks=checks, n=n, upper_violations=up_viol,
                     lower_checked=low_checked, lower_violations=low_viol)


# ------------------------------------------------------ V_s decay profile

@dataclass
class DecayFit:
    """Two-component fit of a stable tangent norm profile: an initial
    exponential transient in fast time plus an ``eps``-dependent floor."""

    mu_fit: float
    tail: float
    transient_present: bool
    n_fit_points: int
    fit_failed: bool


def decay_profile_fit(times_slow: np.ndarray, profile: np.ndarray,
                      eps: float, mu: float) -> DecayFit:
    """Fit ``profile ~ C e^{-mu_fit t}`` on the early fast-time window and
    measure the late-time floor.

    The floor is the median over slow times past the transient length
    ``t_eps(mu, eps)``; the fit window keeps the first six e-folds above
    the floor.  A window of fewer than three points marks the fit failed
    instead of extrapolating.
    """
    t_slow = np.asarray(times_slow, dtype=float)
    prof = np.asarray(profile, dtype=float)
    if t_slow.shape != prof.shape or t_slow.size < 4:
        raise ValueError("need matching time and profile arrays, >= 4 points")
    T_end = t_slow[-1]
    T_tail = min(t_eps(mu, eps), 0.5 * T_end)
    tail_vals = prof[t_slow >= T_tail]
    tail = float(np.median(tail_vals)) if tail_vals.size else float(prof[-1])

    transient = prof[0] > max(2.0 * tail, 0.0) and prof[0] > 0.0
    if not transient:
        return DecayFit(mu_fit=np.nan, tail=tail, transient_present=False,
                        n_fit_points=0, fit_failed=False)

    floor = max(prof[0] * np.exp(-6.0), 3.0 * tail)
    win = (prof >= floor) & (t_slow <= 0.5 * T_end) & (prof > 0.0)
    n_fit = int(np.sum(win))
    if n_fit < 3:
        return DecayFit(mu_fit=np.nan, tail=tail, transient_present=True,
                        n_fit_points=n_fit, fit_failed=True)
    t_fast = t_slow[win] / (eps * eps)
    slope = np.polyfit(t_fast, np.log(prof[win]), 1)[0]
    return DecayFit(mu_fit=float(-slope), tail=tail, transient_present=True,
                    n_fit_points=n_fit, fit_failed=False)
