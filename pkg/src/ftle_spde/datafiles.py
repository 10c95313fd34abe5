"""Deterministic result files: JSONL samples, versioned CSV, report index.

Every file embeds the artifact version, a schema version for its kind, and
the hash of the config that produced it.  Writers emit sorted keys, fixed
``repr`` floats and ``\\n`` newlines only, so identical inputs give
byte-identical files on any platform.  Non-finite numbers are stored as
JSON ``null`` or an empty CSV cell; readers turn them back into ``nan``.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .harness import FtleSample, SweepResult

__all__ = [
    "ARTIFACT_VERSION",
    "SCHEMA_VERSIONS",
    "artifact_path",
    "write_samples_jsonl",
    "read_samples_jsonl",
    "samples_from_records",
    "write_sweep_csv",
    "read_sweep_csv",
    "write_regime_summary",
    "read_json_artifact",
    "write_trajectory_csv",
    "write_report_index",
]

ARTIFACT_VERSION = "1.0.0"

SCHEMA_VERSIONS = {
    "ftle-samples": 1,
    "sweep-result": 1,
    "regime-summary": 1,
    "trajectory": 1,
    "report-index": 1,
}

_SWEEP_COLUMNS = ("eps", "metric", "median", "q05", "q95",
                  "slope", "slope_stderr")


def artifact_path(out_dir, stem: str, cfg_hash: str, ext: str) -> Path:
    """Standard artifact location ``<out_dir>/<stem>-<hash>.<ext>``."""
    return Path(out_dir) / f"{stem}-{cfg_hash}.{ext}"


def _clean(obj):
    """Make ``obj`` JSON-safe: numpy to native, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    return obj


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, allow_nan=False,
                      separators=(",", ": "))


def _header(kind: str, cfg_hash: str, **extra) -> dict:
    head = {"kind": kind, "schema_version": SCHEMA_VERSIONS[kind],
            "artifact_version": ARTIFACT_VERSION, "config_hash": cfg_hash}
    head.update(extra)
    return head


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# ------------------------------------------------------------ JSONL samples

def write_samples_jsonl(path, samples: Sequence[FtleSample],
                        cfg_hash: str, **extra) -> None:
    """One header line, then one record per sample, keys sorted."""
    lines = [_dumps(_header("ftle-samples", cfg_hash,
                            n_samples=len(samples), **extra))]
    for s in samples:
        lines.append(_dumps(s.as_record()))
    _write_text(path, "\n".join(lines) + "\n")


def read_samples_jsonl(path) -> Tuple[dict, List[dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty samples file")
    meta = json.loads(lines[0])
    if meta.get("kind") != "ftle-samples":
        raise ValueError(f"{path}: not a samples file")
    records = []
    for ln in lines[1:]:
        rec = json.loads(ln)
        for key, val in rec.items():
            if val is None:
                rec[key] = math.nan
        records.append(rec)
    return meta, records


def samples_from_records(records: Sequence[dict]) -> List[FtleSample]:
    """Rebuild sample objects from parsed JSONL records."""
    out = []
    for rec in records:
        flags = tuple(rec["flags"])
        tau = rec["tau_star"]
        # a path that never exited has an infinite exit time, which JSON
        # stored as null; restore it
        if not math.isfinite(tau) and "exited" not in flags:
            tau = math.inf
        out.append(FtleSample(
            seed=int(rec["seed"]), stream_id=int(rec["stream_id"]),
            eps=rec["eps"], nu=rec["nu"], sigma=rec["sigma"],
            horizon_slow=rec["horizon_slow"],
            lam_spde=rec["lam_spde_slow"], lam_ae=rec["lam_ae_slow"],
            k_x=rec["k_x"], k_n=rec["k_n"], r2_sup=rec["r2_sup"],
            tau_star=tau, flags=flags))
    return out


# --------------------------------------------------------------- sweep CSV

def _cell(value) -> str:
    if value is None:
        return ""
    v = float(value)
    return repr(v) if math.isfinite(v) else ""


def write_sweep_csv(path, result: SweepResult, cfg_hash: str) -> None:
    """Long-format CSV: one row per (eps, metric) with quantiles, plus the
    fitted slope repeated on each row of its metric when available."""
    lines = ["# kind: sweep-result",
             f"# schema_version: {SCHEMA_VERSIONS['sweep-result']}",
             f"# artifact_version: {ARTIFACT_VERSION}",
             f"# config_hash: {cfg_hash}",
             f"# n_paths: {result.n_paths}",
             f"# meta: {_dumps(result.meta)}",
             ",".join(_SWEEP_COLUMNS)]
    for metric in sorted(result.stats):
        stats = result.stats[metric]
        fit = result.slopes.get(metric)
        for i, eps in enumerate(result.eps_grid):
            med, q05, q95 = stats[i]
            row = [repr(float(eps)), metric, _cell(med), _cell(q05),
                   _cell(q95),
                   _cell(fit[0]) if fit is not None else "",
                   _cell(fit[1]) if fit is not None else ""]
            lines.append(",".join(row))
    _write_text(path, "\n".join(lines) + "\n")


def read_sweep_csv(path) -> Tuple[dict, List[dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    meta = {}
    body = []
    for ln in lines:
        if ln.startswith("# "):
            key, _, val = ln[2:].partition(": ")
            meta[key] = val
        elif ln.strip():
            body.append(ln)
    if meta.get("kind") != "sweep-result":
        raise ValueError(f"{path}: not a sweep CSV")
    if not body or body[0] != ",".join(_SWEEP_COLUMNS):
        raise ValueError(f"{path}: unexpected column header")
    rows = []
    for ln in body[1:]:
        parts = ln.split(",")
        rec = dict(zip(_SWEEP_COLUMNS, parts))
        for key in ("eps", "median", "q05", "q95", "slope", "slope_stderr"):
            rec[key] = float(rec[key]) if rec[key] else math.nan
        rows.append(rec)
    if "meta" in meta:
        meta["meta"] = json.loads(meta["meta"])
    return meta, rows


# ------------------------------------------------------------ JSON reports

def write_regime_summary(path, report, cfg_hash: str,
                         samples_file: Optional[str] = None) -> None:
    obj = _header("regime-summary", cfg_hash)
    obj.update(case=report.case, eps=report.eps, nu=report.nu,
               sigma=report.sigma, horizon_slow=report.horizon_slow,
               n_paths=report.n_paths, fractions=report.fractions,
               lam_ae_max=report.lam_ae_max,
               blowup_count=report.blowup_count, meta=report.meta,
               samples_file=samples_file)
    _write_text(path, json.dumps(_clean(obj), sort_keys=True,
                                 allow_nan=False, indent=2) + "\n")


def read_json_artifact(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


# ----------------------------------------------------------- trajectories

def write_trajectory_csv(path, run, index: int, cfg_hash: str) -> None:
    """Stored path ``index`` of an ensemble run, slow coordinates per mode
    and the reduced amplitude when present."""
    n = run.states.shape[2]
    cols = ["t_slow"] + [f"x{j}" for j in range(n)]
    if run.ae is not None:
        cols += [f"a{j}" for j in range(run.ae.shape[2])]
    lines = ["# kind: trajectory",
             f"# schema_version: {SCHEMA_VERSIONS['trajectory']}",
             f"# artifact_version: {ARTIFACT_VERSION}",
             f"# config_hash: {cfg_hash}",
             f"# stream_id: {int(run.stream_ids[index])}",
             f"# seed: {run.seed}",
             ",".join(cols)]
    for k, t in enumerate(run.times):
        row = [repr(float(t))]
        row += [_cell(v) for v in run.states[index, k]]
        if run.ae is not None:
            row += [_cell(v) for v in run.ae[index, k]]
        lines.append(",".join(row))
    _write_text(path, "\n".join(lines) + "\n")


# ------------------------------------------------------------ report index

def _probe(path: Path) -> Optional[dict]:
    """Embedded header of one artifact, or None if unrecognized."""
    try:
        if path.suffix == ".jsonl":
            with open(path, "r", encoding="utf-8") as fh:
                head = json.loads(fh.readline())
        elif path.suffix == ".json":
            head = read_json_artifact(path)
        elif path.suffix == ".csv":
            meta = {}
            with open(path, "r", encoding="utf-8") as fh:
                for ln in fh:
                    if not ln.startswith("# "):
                        break
                    key, _, val = ln[2:].strip().partition(": ")
                    meta[key] = val
            head = {"kind": meta.get("kind"),
                    "schema_version": int(meta.get("schema_version", 0)),
                    "config_hash": meta.get("config_hash")}
        else:
            return None
    except (ValueError, OSError):
        return None
    if head.get("kind") not in SCHEMA_VERSIONS or not head.get("config_hash"):
        return None
    return {"file": path.name, "kind": head["kind"],
            "schema_version": int(head["schema_version"]),
            "config_hash": head["config_hash"]}


def write_report_index(out_dir) -> dict:
    """Scan ``out_dir`` for artifacts and write ``index.json`` grouping
    them by config hash; returns the index object."""
    out = Path(out_dir)
    if not out.is_dir():
        raise FileNotFoundError(f"output directory {out} does not exist")
    entries = []
    for path in sorted(out.iterdir()):
        if path.name == "index.json" or not path.is_file():
            continue
        probed = _probe(path)
        if probed is not None:
            entries.append(probed)
    hashes = sorted({e["config_hash"] for e in entries})
    index = {"kind": "report-index",
             "schema_version": SCHEMA_VERSIONS["report-index"],
             "artifact_version": ARTIFACT_VERSION,
             "entries": entries, "config_hashes": hashes,
             "n_entries": len(entries)}
    _write_text(out / "index.json",
                json.dumps(_clean(index), sort_keys=True, allow_nan=False,
                           indent=2) + "\n")
    return index
