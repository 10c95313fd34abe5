"""Command line surface.

Subcommands cover the ensemble experiments (``simulate``, ``ftle``,
``sweep``, ``regime``), numerics self-checks (``validate-ito``), the
symbolic reduction (``derive-fc``) and artifact indexing
(``report-index``).  Each run resolves a config file, applies ``--seed``
and ``--out`` overrides (``FTLE_SPDE_OUT`` in the environment overrides
the output directory only), writes artifacts named by the config hash,
and prints one summary line per experiment.

Exit status: 0 when every asserted threshold passes, 1 with a
machine-readable JSON failure list on stdout when one does not, 2 for
config or usage errors.  All file writes happen in this process, after
the worker pool has returned, so reruns of the same config and seed give
byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path
from typing import List, Optional

import numpy as np

from .amplitude import (
    ae_deterministic_ftle,
    ae_deterministic_ftle_closed,
    derive_Fc,
)
from .config import (
    ConfigError,
    config_hash,
    parse_config,
    serialize_config,
)
from .datafiles import (
    ARTIFACT_VERSION,
    artifact_path,
    write_regime_summary,
    write_report_index,
    write_samples_jsonl,
    write_sweep_csv,
    write_trajectory_csv,
)
from .experiments import (
    PRESETS,
    REGIME_CASES,
    EnsembleJob,
    amplitude_sweep,
    ftle_ensemble,
    ftle_rate_sweep,
    get_model,
    regime_study,
    run_distributed,
)
from .harness import gap_bound_check, ito_residual
from .spectral import basis_matrix

__all__ = ["main", "build_parser"]

# initial kernel amplitude shared by all experiment commands
DEFAULT_A0 = 0.5

OUT_ENV = "FTLE_SPDE_OUT"

# fraction of paths allowed to violate the propagator-gap bounds
GAP_VIOLATION_BUDGET = 0.01

# allowed quadrature gap between the configured residual sampling and a
# per-step reference, as a fraction of the residual scale
RESOLUTION_BUDGET = 0.25

# slope thresholds: reduction error, residual, and the exponent gap
# (the last one depends on the window exponent alpha)
MIN_SLOPE_ERR = 0.9
MIN_SLOPE_R2 = 0.8

_DOMAIN_LENGTH = {"sine_dirichlet_0_pi": np.pi,
                  "fourier_periodic_0_2pi": 2.0 * np.pi}

# how many example trajectories ``simulate`` materializes as CSV
N_TRAJECTORY_FILES = 8


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def _finish(args, failures: List[dict]) -> int:
    if failures:
        _emit({"failures": failures})
        return 1
    _say(args, "ok")
    return 0


def _load_config(args):
    """Config + overrides -> (config, hash, created output dir)."""
    if not args.config:
        raise ConfigError(["--config is required for this command"])
    text = Path(args.config).read_text(encoding="utf-8")
    cfg = parse_config(text)
    out_override = args.out or os.environ.get(OUT_ENV)
    cfg = cfg.with_overrides(seed=args.seed, out_dir=out_override)
    h = config_hash(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    snapshot = (f"# config_hash: {h}\n"
                f"# artifact_version: {ARTIFACT_VERSION}\n"
                + serialize_config(cfg))
    with open(out / f"config-{h}.ini", "w", encoding="utf-8",
              newline="") as fh:
        fh.write(snapshot)
    return cfg, h, out


def _eps_tag(eps: float) -> str:
    return f"{eps:g}".replace(".", "p")


# ------------------------------------------------------------- subcommands

def cmd_derive_fc(args) -> int:
    model = get_model(args.preset, args.n_modes)
    cubic = derive_Fc(model)
    length = _DOMAIN_LENGTH[model.basis]
    x = np.linspace(0.0, length, 10001)
    peak = float(np.max(np.abs(basis_matrix(model, x)[model.kernel[0]])))
    # "per unit amplitude": the kernel basis function rescaled to peak 1;
    # its coefficient is 1/peak, so the function-units cubic coefficient
    # picks up peak^-3 from the argument and peak from the output
    per_unit = cubic.scalar / peak ** 2
    print(f"preset={args.preset} n_modes={args.n_modes} "
          f"kernel_index={int(model.kernel[0])}")
    print(f"cubic_coefficient_per_unit_amplitude = {per_unit!r}")
    print(f"reduced_drift_cubic_coefficient = {2.0 * per_unit!r}")
    print(f"coefficient_units_scalar = {cubic.scalar!r}")
    return 0


def cmd_simulate(args) -> int:
    cfg, h, out = _load_config(args)
    eps = cfg.eps_grid[0]
    job = EnsembleJob(preset=cfg.preset, n_modes=cfg.n_modes,
                      params=cfg.params_for(eps), seed=cfg.seed,
                      horizon_slow=cfg.t0, a0=(DEFAULT_A0,),
                      acc_every=cfg.acc_every)
    run = run_distributed(job, range(cfg.n_paths), args.workers)
    n_files = min(cfg.n_paths, N_TRAJECTORY_FILES)
    for i in range(n_files):
        sid = int(run.stream_ids[i])
        write_trajectory_csv(
            artifact_path(out, f"trajectory-s{sid}", h, "csv"), run, i, h)
    exits = int(np.isfinite(run.tau).sum())
    _say(args, f"[simulate] preset={cfg.preset} eps={eps:g} "
               f"paths={cfg.n_paths} exits={exits} "
               f"blowups={int(run.blowup.sum())} trajectories={n_files} "
               f"out={out}")
    return _finish(args, [])


def cmd_ftle(args) -> int:
    cfg, h, out = _load_config(args)
    failures = []
    for eps in cfg.eps_grid:
        samples, _ = ftle_ensemble(
            cfg.preset, cfg.n_modes, cfg.params_for(eps), seed=cfg.seed,
            stream_ids=range(cfg.n_paths), horizon_slow=cfg.t0,
            a0=(DEFAULT_A0,), workers=args.workers)
        write_samples_jsonl(
            artifact_path(out, f"ftle-eps{_eps_tag(eps)}", h, "jsonl"),
            samples, h, eps=eps, horizon_slow=cfg.t0)
        rep = gap_bound_check(samples)
        _say(args, f"[ftle] eps={eps:g} paths={rep.n} "
                   f"upper_violations={rep.upper_violations}/{rep.n} "
                   f"lower_violations={rep.lower_violations}/"
                   f"{rep.lower_checked}")
        if rep.upper_violation_fraction > GAP_VIOLATION_BUDGET:
            failures.append({"check": f"gap-upper-eps{eps:g}",
                             "value": rep.upper_violation_fraction,
                             "threshold": GAP_VIOLATION_BUDGET})
        if rep.lower_violation_fraction > GAP_VIOLATION_BUDGET:
            failures.append({"check": f"gap-lower-eps{eps:g}",
                             "value": rep.lower_violation_fraction,
                             "threshold": GAP_VIOLATION_BUDGET})
    return _finish(args, failures)


def _slope_check(result, metric: str, threshold: float,
                 failures: List[dict]) -> str:
    fit = result.slopes.get(metric)
    if fit is None:
        failures.append({"check": f"slope-{metric}", "value": None,
                         "threshold": threshold,
                         "reason": "slope not fitted"})
        return f"slope({metric})=unfitted"
    slope, stderr = fit
    if slope < threshold:
        failures.append({"check": f"slope-{metric}", "value": slope,
                         "threshold": threshold})
    return f"slope({metric})={slope:.3f}+-{stderr:.3f} (>= {threshold:g})"


def cmd_sweep(args) -> int:
    cfg, h, out = _load_config(args)
    if len(cfg.eps_grid) < 3:
        _emit({"errors": ["sweep needs at least 3 eps values for a slope "
                          f"fit, got {len(cfg.eps_grid)}"]})
        return 2
    failures: List[dict] = []
    amp = amplitude_sweep(
        cfg.preset, cfg.n_modes, cfg.eps_grid, cfg.nu_rule, cfg.sigma_rule,
        a0=(DEFAULT_A0,), horizon_slow=cfg.t0, n_paths=cfg.n_paths,
        seed=cfg.seed, dt=cfg.dt, workers=args.workers, r_c=cfg.r_c,
        kappa=cfg.kappa)
    write_sweep_csv(artifact_path(out, "sweep-amplitude", h, "csv"), amp, h)
    _say(args, "[sweep] amplitude: "
         + _slope_check(amp, "err_ca", MIN_SLOPE_ERR, failures) + " "
         + _slope_check(amp, "R2_sup", MIN_SLOPE_R2, failures))

    rate, per_eps = ftle_rate_sweep(
        cfg.preset, cfg.n_modes, cfg.eps_grid, cfg.nu_rule, cfg.sigma_rule,
        a0=(DEFAULT_A0,), n_paths=cfg.n_paths, seed=cfg.seed,
        alpha_T=cfg.alpha, dt=cfg.dt, workers=args.workers, r_c=cfg.r_c,
        kappa=cfg.kappa)
    write_sweep_csv(artifact_path(out, "sweep-ftle-rate", h, "csv"), rate, h)
    for eps, samples in zip(rate.eps_grid, per_eps):
        write_samples_jsonl(
            artifact_path(out, f"ftle-rate-eps{_eps_tag(eps)}", h, "jsonl"),
            samples, h, eps=float(eps), window_exponent=cfg.alpha)
    min_gap_slope = 3.0 - cfg.alpha - 0.2
    _say(args, "[sweep] exponent gap: "
         + _slope_check(rate, "ftle_gap_fast", min_gap_slope, failures))
    return _finish(args, failures)


def cmd_regime(args) -> int:
    cfg, h, out = _load_config(args)
    case = args.case
    eps = cfg.eps_grid[0]
    rep = regime_study(case, cfg.preset, cfg.n_modes, eps,
                       n_paths=cfg.n_paths, seed=cfg.seed,
                       horizon_slow=cfg.t0, a0=DEFAULT_A0, dt=cfg.dt,
                       workers=args.workers, r_c=cfg.r_c, kappa=cfg.kappa)
    samples_path = artifact_path(out, f"regime-{case}", h, "jsonl")
    write_samples_jsonl(samples_path, rep.samples, h, case=case)
    write_regime_summary(artifact_path(out, f"regime-{case}", h, "json"),
                         rep, h, samples_file=samples_path.name)
    failures: List[dict] = []
    neg = rep.fractions["spde_negative"]
    pos = rep.fractions["spde_positive"]
    _say(args, f"[regime {case}] eps={eps:g} paths={rep.n_paths} "
               f"frac(lam_spde<0)={neg['fraction']:.3f} "
               f"[{neg['wilson_lo']:.3f},{neg['wilson_hi']:.3f}] "
               f"frac(lam_spde>0)={pos['fraction']:.3f} "
               f"[{pos['wilson_lo']:.3f},{pos['wilson_hi']:.3f}] "
               f"blowups={rep.blowup_count}")
    if case == "stable":
        if neg["fraction"] < 0.95:
            failures.append({"check": "stable-negative-fraction",
                             "value": neg["fraction"], "threshold": 0.95})
    elif case == "unstable":
        if not pos["wilson_lo"] > 0.0:
            failures.append({"check": "unstable-positive-ci",
                             "value": pos["wilson_lo"],
                             "threshold": "> 0"})
    elif case == "deterministic":
        cubic = derive_Fc(get_model(cfg.preset, cfg.n_modes))
        params = cfg.params_for(eps)
        lam_closed = ae_deterministic_ftle_closed(cubic, params, DEFAULT_A0,
                                                  cfg.t0)
        lam_adaptive = ae_deterministic_ftle(cubic, params, DEFAULT_A0,
                                             cfg.t0)
        gap = abs(lam_adaptive - lam_closed)
        _say(args, f"[regime deterministic] lam_closed={lam_closed:.10f} "
                   f"lam_adaptive={lam_adaptive:.10f} "
                   f"lam_path={rep.lam_ae[0]:.6f}")
        if gap > 1e-8:
            failures.append({"check": "deterministic-closed-form",
                             "value": gap, "threshold": 1e-8})
        scale = max(1.0, abs(lam_closed))
        if abs(rep.lam_ae[0] - lam_closed) > 0.05 * scale:
            failures.append({"check": "deterministic-path-consistency",
                             "value": abs(rep.lam_ae[0] - lam_closed),
                             "threshold": 0.05 * scale})
    # the ergodic case is exploratory: fractions are reported, not asserted
    return _finish(args, failures)


def cmd_validate_ito(args) -> int:
    """Two integrity checks on the running residual accumulators.

    Consistency: recomputing the residual offline from a trajectory stored
    exactly on the accumulator grid must reproduce the online values node
    for node.  Resolution: re-running the same noise with the accumulator
    sampling every step gives a refined quadrature of the same path.  The
    residual integrand is noise-rough, so the two quadratures differ by
    an eps-independent O(sqrt(sampling * dt)) fraction of the residual
    scale; the budget below flags configs whose step is too coarse while
    tolerating that irreducible sampling noise.
    """
    cfg, h, out = _load_config(args)
    model = get_model(cfg.preset, cfg.n_modes)
    n_check = min(cfg.n_paths, 8)
    failures: List[dict] = []
    report = {"kind": "ito-check", "config_hash": h,
              "artifact_version": ARTIFACT_VERSION, "per_eps": []}
    for eps in cfg.eps_grid:
        params = cfg.params_for(eps)
        job = EnsembleJob(preset=cfg.preset, n_modes=cfg.n_modes,
                          params=params, seed=cfg.seed, horizon_slow=cfg.t0,
                          a0=(DEFAULT_A0,), acc_every=cfg.acc_every,
                          store_every=cfg.acc_every)
        run = run_distributed(job, range(n_check), args.workers)
        # same seed and streams, so the same path, but the accumulators
        # sample every step: a refined quadrature of identical dynamics
        fine = run_distributed(
            EnsembleJob(preset=cfg.preset, n_modes=cfg.n_modes,
                        params=params, seed=cfg.seed, horizon_slow=cfg.t0,
                        a0=(DEFAULT_A0,), acc_every=1, n_store_target=2),
            range(n_check), args.workers)
        strict = params.n_steps(model, cfg.t0) % cfg.acc_every == 0
        tol = 1e-6 if strict else 5e-2
        worst_consistency = 0.0
        worst_resolution = 0.0
        checked = 0
        for i in range(n_check):
            if run.blowup[i] or np.isfinite(run.tau[i]):
                continue
            checked += 1
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                series = ito_residual(run.path(i))
            scale = max(float(np.max(series.R2)),
                        float(run.metrics["sup_R2"][i]), 1e-300)
            rel_final = abs(float(series.R2[-1])
                            - float(run.metrics["R2_final"][i])) / scale
            rel_sup = abs(float(np.max(series.R2))
                          - float(run.metrics["sup_R2"][i])) / scale
            worst_consistency = max(worst_consistency, rel_final, rel_sup)
            ref_scale = max(float(fine.metrics["sup_R2"][i]), 1e-300)
            gap = abs(float(run.metrics["R2_final"][i])
                      - float(fine.metrics["R2_final"][i])) / ref_scale
            worst_resolution = max(worst_resolution, gap)
        report["per_eps"].append(
            {"eps": float(eps), "checked": checked,
             "skipped": n_check - checked,
             "max_rel_consistency": worst_consistency,
             "max_rel_resolution": worst_resolution,
             "grid": "strict" if strict else "lenient"})
        _say(args, f"[validate-ito] eps={eps:g} checked={checked}/{n_check} "
                   f"consistency={worst_consistency:.3e} "
                   f"resolution={worst_resolution:.3e} "
                   f"grid={'strict' if strict else 'lenient'}")
        if checked == 0:
            failures.append({"check": f"ito-paths-eps{eps:g}",
                             "value": 0, "threshold": ">= 1 clean path"})
        if worst_consistency > tol:
            failures.append({"check": f"ito-consistency-eps{eps:g}",
                             "value": worst_consistency, "threshold": tol})
        if worst_resolution > RESOLUTION_BUDGET:
            failures.append({"check": f"ito-resolution-eps{eps:g}",
                             "value": worst_resolution,
                             "threshold": RESOLUTION_BUDGET})
    with open(artifact_path(out, "ito-check", h, "json"), "w",
              encoding="utf-8", newline="") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return _finish(args, failures)


def cmd_report_index(args) -> int:
    out = args.out or os.environ.get(OUT_ENV)
    if not out and args.config:
        cfg = parse_config(Path(args.config).read_text(encoding="utf-8"))
        out = cfg.out_dir
    if not out:
        raise ConfigError(["report-index needs --out, the output "
                           "environment override, or --config"])
    index = write_report_index(out)
    _say(args, f"[report-index] {index['n_entries']} artifacts, "
               f"{len(index['config_hashes'])} configs in {out}")
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ftle-spde",
        description="Finite-time Lyapunov exponents of spectral stochastic "
                    "PDEs and their reduced amplitude equations.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to an INI config file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--workers", type=int, default=1,
                        help="worker processes (default 1)")
    common.add_argument("--out", help="override the output directory")
    common.add_argument("--quiet", action="store_true",
                        help="suppress summary lines")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", parents=[common],
                        help="integrate one ensemble and store example "
                             "trajectories")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("ftle", parents=[common],
                        help="exponent samples and propagator-gap bound "
                             "checks per eps")
    sp.set_defaults(func=cmd_ftle)

    sp = sub.add_parser("sweep", parents=[common],
                        help="reduction-error and exponent-gap rate sweeps")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("regime", parents=[common],
                        help="sign-of-exponent study in one parameter "
                             "regime")
    sp.add_argument("case", choices=REGIME_CASES)
    sp.set_defaults(func=cmd_regime)

    sp = sub.add_parser("validate-ito", parents=[common],
                        help="cross-check online residual accumulators "
                             "against stored-path recomputation")
    sp.set_defaults(func=cmd_validate_ito)

    sp = sub.add_parser("derive-fc", parents=[common],
                        help="print the reduced cubic coefficient of a "
                             "preset")
    sp.add_argument("preset", choices=sorted(PRESETS))
    sp.add_argument("--n-modes", type=int, default=16)
    sp.set_defaults(func=cmd_derive_fc)

    sp = sub.add_parser("report-index", parents=[common],
                        help="scan the output directory and write "
                             "index.json")
    sp.set_defaults(func=cmd_report_index)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _emit({"errors": exc.errors})
        return 2
    except FileNotFoundError as exc:
        _emit({"errors": [str(exc)]})
        return 2


if __name__ == "__main__":
    sys.exit(main())
