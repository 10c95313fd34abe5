"""Experiment configuration: parsing, validation, serialization, hashing.

Configs are INI text with a fixed set of sections.  Parsing validates
everything and reports the complete list of problems, not just the first.
Serialization is canonical (fixed section and key order, ``repr`` floats),
so the config hash is stable across platforms and reruns.

The two scaling rules are small expressions in ``eps`` such as ``eps^2``,
``-eps^2``, ``0.5*eps``, or a plain number.  The noise rule must keep
``sigma(eps) * eps^-2`` bounded by ``SCALE_BOUND`` over the whole grid;
rules that grow faster than the slow-time scaling allows are rejected.
"""

from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

from .integrate import SimParams

__all__ = [
    "SCALE_BOUND",
    "ConfigError",
    "ScalingRule",
    "ExperimentConfig",
    "parse_config",
    "serialize_config",
    "config_hash",
]

# admissible bound on |rule(eps)| / eps^2 over the eps grid
SCALE_BOUND = 10.0

_RULE_RE = re.compile(
    r"^([+-]?)(?:((?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\*)?"
    r"eps(?:\^(\d+))?$")


class ConfigError(ValueError):
    """Carries every validation problem found in one parse."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("invalid config:\n" + "\n".join(
            f"  - {e}" for e in self.errors))


@dataclass(frozen=True)
class ScalingRule:
    """A rule ``eps -> coef * eps**power`` with its source text preserved."""

    text: str
    coef: float
    power: int

    @classmethod
    def parse(cls, text: str) -> "ScalingRule":
        compact = text.replace(" ", "")
        try:
            return cls(text=compact, coef=float(compact), power=0)
        except ValueError:
            pass
        m = _RULE_RE.match(compact)
        if m is None:
            raise ValueError(
                f"cannot parse scaling rule {text!r}; expected a number or "
                f"[sign][coef*]eps[^power]")
        sign, coef, power = m.groups()
        value = float(coef) if coef is not None else 1.0
        if sign == "-":
            value = -value
        return cls(text=compact, coef=value, power=int(power or 1))

    def __call__(self, eps: float) -> float:
        return self.coef * eps ** self.power


_PRESETS = ("burgers", "ks")

_DEFAULTS = {
    "model": {"preset": "burgers", "n_modes": "32"},
    "scaling": {"eps_grid": "0.2, 0.1, 0.05, 0.025",
                "nu_rule": "eps^2", "sigma_rule": "eps^2"},
    "windows": {"t0": "1.0", "alpha": "0.5"},
    "ensemble": {"n_paths": "200", "seed": "1000"},
    "cutoffs": {"r_c": "3.0", "kappa": "0.1"},
    "stepping": {"dt": "auto", "acc_every": "4"},
    "output": {"out_dir": "results"},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description.

    ``t0`` is the fixed horizon in slow time; ``alpha`` sets the shrinking
    windows ``T = eps**alpha`` used by the exponent-gap sweeps.  ``dt`` of
    ``None`` defers to the stiffness-resolved default step.
    """

    preset: str = "burgers"
    n_modes: int = 32
    eps_grid: Tuple[float, ...] = (0.2, 0.1, 0.05, 0.025)
    nu_rule: ScalingRule = field(
        default_factory=lambda: ScalingRule.parse("eps^2"))
    sigma_rule: ScalingRule = field(
        default_factory=lambda: ScalingRule.parse("eps^2"))
    t0: float = 1.0
    alpha: float = 0.5
    n_paths: int = 200
    seed: int = 1000
    r_c: float = 3.0
    kappa: float = 0.1
    dt: Optional[float] = None
    acc_every: int = 4
    out_dir: str = "results"

    def params_for(self, eps: float) -> SimParams:
        return SimParams(eps=eps, nu=self.nu_rule(eps),
                         sigma=self.sigma_rule(eps), dt=self.dt,
                         r_c=self.r_c, kappa=self.kappa)

    def with_overrides(self, seed: Optional[int] = None,
                       out_dir: Optional[str] = None) -> "ExperimentConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if out_dir is not None:
            cfg = replace(cfg, out_dir=out_dir)
        return cfg


def _fmt_floats(values: Sequence[float]) -> str:
    return ", ".join(repr(float(v)) for v in values)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical INI text; parsing it reproduces ``cfg`` exactly."""
    lines = [
        "[model]",
        f"preset = {cfg.preset}",
        f"n_modes = {cfg.n_modes}",
        "",
        "[scaling]",
        f"eps_grid = {_fmt_floats(cfg.eps_grid)}",
        f"nu_rule = {cfg.nu_rule.text}",
        f"sigma_rule = {cfg.sigma_rule.text}",
        "",
        "[windows]",
        f"t0 = {cfg.t0!r}",
        f"alpha = {cfg.alpha!r}",
        "",
        "[ensemble]",
        f"n_paths = {cfg.n_paths}",
        f"seed = {cfg.seed}",
        "",
        "[cutoffs]",
        f"r_c = {cfg.r_c!r}",
        f"kappa = {cfg.kappa!r}",
        "",
        "[stepping]",
        f"dt = {'auto' if cfg.dt is None else repr(cfg.dt)}",
        f"acc_every = {cfg.acc_every}",
        "",
        "[output]",
        f"out_dir = {cfg.out_dir}",
        "",
    ]
    return "\n".join(lines)


def config_hash(cfg: ExperimentConfig) -> str:
    """Hex digest of the canonical serialization (first 12 characters).

    The output directory is normalized away first: where results are
    stored does not change what experiment they came from."""
    canonical = replace(cfg, out_dir=_DEFAULTS["output"]["out_dir"])
    digest = hashlib.sha256(serialize_config(canonical).encode("utf-8"))
    return digest.hexdigest()[:12]


def _parse_float(raw: str, name: str, errors: List[str],
                 fallback: float = 0.0) -> float:
    try:
        return float(raw)
    except ValueError:
        errors.append(f"{name}: not a number: {raw!r}")
        return fallback


def _parse_int(raw: str, name: str, errors: List[str],
               fallback: int = 0) -> int:
    try:
        return int(raw)
    except ValueError:
        errors.append(f"{name}: not an integer: {raw!r}")
        return fallback


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate INI text, raising ``ConfigError`` with the full
    list of problems when anything is wrong."""
    parser = configparser.ConfigParser(interpolation=None)
    errors: List[str] = []
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from None

    # reject unknown sections and keys before touching values
    for section in parser.sections():
        if section not in _DEFAULTS:
            errors.append(f"unknown section [{section}]")
            continue
        for key in parser[section]:
            if key not in _DEFAULTS[section]:
                errors.append(f"unknown key {key!r} in [{section}]")

    def get(section: str, key: str) -> str:
        if parser.has_option(section, key):
            return parser.get(section, key).strip()
        return _DEFAULTS[section][key]

    preset = get("model", "preset")
    if preset not in _PRESETS:
        errors.append(f"model.preset: {preset!r} is not one of {_PRESETS}")
    n_modes = _parse_int(get("model", "n_modes"), "model.n_modes", errors, 2)
    if n_modes < 2:
        errors.append("model.n_modes: need at least 2 modes")
    if preset == "ks" and n_modes % 2 == 0:
        errors.append("model.n_modes: the ks preset needs an odd mode count")

    eps_grid: List[float] = []
    for tok in get("scaling", "eps_grid").split(","):
        tok = tok.strip()
        if not tok:
            continue
        eps_grid.append(_parse_float(tok, "scaling.eps_grid", errors, 0.1))
    if not eps_grid:
        errors.append("scaling.eps_grid: empty")
    for e in eps_grid:
        if not 0.0 < e < 1.0:
            errors.append(f"scaling.eps_grid: eps={e!r} outside (0, 1)")
    if len(set(eps_grid)) != len(eps_grid):
        errors.append("scaling.eps_grid: duplicate eps values")

    rules = {}
    for key in ("nu_rule", "sigma_rule"):
        try:
            rules[key] = ScalingRule.parse(get("scaling", key))
        except ValueError as exc:
            errors.append(f"scaling.{key}: {exc}")
            rules[key] = ScalingRule.parse("0")

    # scaling-rule admissibility over the grid: the slow-time rescaling
    # needs nu, sigma = O(eps^2) with a fixed bound on the prefactor
    for key, must_be_nonneg in (("nu_rule", False), ("sigma_rule", True)):
        rule = rules[key]
        for e in eps_grid:
            if not 0.0 < e < 1.0:
                continue
            val = rule(e)
            if must_be_nonneg and val < 0.0:
                errors.append(f"scaling.{key}: negative noise amplitude "
                              f"{val!r} at eps={e!r}")
                break
            if abs(val) / e ** 2 > SCALE_BOUND:
                errors.append(
                    f"scaling.{key}: |{rule.text}| * eps^-2 = "
                    f"{abs(val) / e ** 2:.3g} at eps={e!r} exceeds the "
                    f"admissible bound {SCALE_BOUND:g}")
                break

    t0 = _parse_float(get("windows", "t0"), "windows.t0", errors, 1.0)
    if t0 <= 0.0:
        errors.append("windows.t0: must be positive")
    alpha = _parse_float(get("windows", "alpha"), "windows.alpha", errors,
                         0.5)
    if not 0.0 <= alpha <= 2.0:
        errors.append("windows.alpha: must lie in [0, 2]")

    n_paths = _parse_int(get("ensemble", "n_paths"), "ensemble.n_paths",
                         errors, 1)
    if n_paths < 1:
        errors.append("ensemble.n_paths: must be at least 1")
    seed = _parse_int(get("ensemble", "seed"), "ensemble.seed", errors, 0)
    if not 0 <= seed < 2 ** 64:
        errors.append("ensemble.seed: must fit in an unsigned 64-bit value")

    r_c = _parse_float(get("cutoffs", "r_c"), "cutoffs.r_c", errors, 3.0)
    if r_c <= 0.0:
        errors.append("cutoffs.r_c: must be positive")
    kappa = _parse_float(get("cutoffs", "kappa"), "cutoffs.kappa", errors,
                         0.1)
    if not 0.0 < kappa < 1.0:
        errors.append("cutoffs.kappa: must lie in (0, 1)")

    dt_raw = get("stepping", "dt")
    dt: Optional[float]
    if dt_raw == "auto":
        dt = None
    else:
        dt = _parse_float(dt_raw, "stepping.dt", errors, 1e-3)
        if dt is not None and dt <= 0.0:
            errors.append("stepping.dt: must be positive (or 'auto')")
    acc_every = _parse_int(get("stepping", "acc_every"),
                           "stepping.acc_every", errors, 4)
    if acc_every < 1:
        errors.append("stepping.acc_every: must be at least 1")

    out_dir = get("output", "out_dir")
    if not out_dir:
        errors.append("output.out_dir: empty")

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        preset=preset, n_modes=n_modes, eps_grid=tuple(eps_grid),
        nu_rule=rules["nu_rule"], sigma_rule=rules["sigma_rule"],
        t0=t0, alpha=alpha, n_paths=n_paths, seed=seed, r_c=r_c,
        kappa=kappa, dt=dt, acc_every=acc_every, out_dir=out_dir)
