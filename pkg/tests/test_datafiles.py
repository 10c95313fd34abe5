"""Tests for deterministic artifact files and the report index."""

import json
import math

import numpy as np
import pytest

from ftle_spde.datafiles import (
    ARTIFACT_VERSION,
    artifact_path,
    read_samples_jsonl,
    read_sweep_csv,
    samples_from_records,
    write_regime_summary,
    write_report_index,
    write_samples_jsonl,
    write_sweep_csv,
    write_trajectory_csv,
)
from ftle_spde.harness import FtleSample, SweepResult

HASH = "deadbeef0123"


def sample_trio():
    plain = FtleSample(seed=5, stream_id=0, eps=0.1, nu=0.01, sigma=0.01,
                       horizon_slow=1.0, lam_spde=0.42, lam_ae=0.40,
                       k_x=0.2, k_n=0.1, r2_sup=0.05, tau_star=math.inf)
    exited = FtleSample(seed=5, stream_id=1, eps=0.1, nu=0.01, sigma=0.01,
                        horizon_slow=1.0, lam_spde=-0.3, lam_ae=-0.31,
                        k_x=0.15, k_n=0.02, r2_sup=0.01, tau_star=0.625,
                        flags=("exited",))
    dead = FtleSample(seed=5, stream_id=2, eps=0.1, nu=0.01, sigma=0.01,
                      horizon_slow=1.0, lam_spde=math.nan, lam_ae=math.nan,
                      k_x=math.nan, k_n=math.nan, r2_sup=math.nan,
                      tau_star=math.inf, flags=("blowup",))
    return [plain, exited, dead]


def small_sweep():
    res = SweepResult(eps_grid=np.array([0.4, 0.2, 0.1]), n_paths=4)
    res.add_metric("err", [e * np.array([1.0, 1.1, 0.9, 1.05])
                           for e in (0.4, 0.2, 0.1)])
    # zero medians admit no log-log fit, so this metric has no slope
    res.add_metric("flat", [np.zeros(2) for _ in range(3)])
    res.meta = {"preset": "burgers", "seed": 5}
    return res


def test_samples_round_trip(tmp_path):
    path = tmp_path / "s.jsonl"
    originals = sample_trio()
    write_samples_jsonl(path, originals, HASH)
    meta, records = read_samples_jsonl(path)
    assert meta["config_hash"] == HASH
    assert meta["artifact_version"] == ARTIFACT_VERSION
    assert meta["n_samples"] == 3
    rebuilt = samples_from_records(records)
    assert rebuilt[0] == originals[0]
    assert rebuilt[1] == originals[1]
    # the blowup sample carries nans, so compare field-wise
    assert rebuilt[2].flags == ("blowup",)
    assert math.isnan(rebuilt[2].lam_spde)
    assert rebuilt[2].tau_star == math.inf


def test_samples_file_is_valid_json_lines(tmp_path):
    path = tmp_path / "s.jsonl"
    write_samples_jsonl(path, sample_trio(), HASH)
    for line in path.read_text().splitlines():
        obj = json.loads(line)          # strict JSON: no NaN tokens
        assert "NaN" not in line and "Infinity" not in line
        assert isinstance(obj, dict)


def test_writes_are_byte_identical(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_samples_jsonl(a, sample_trio(), HASH)
    write_samples_jsonl(b, sample_trio(), HASH)
    assert a.read_bytes() == b.read_bytes()
    ca, cb = tmp_path / "a.csv", tmp_path / "b.csv"
    write_sweep_csv(ca, small_sweep(), HASH)
    write_sweep_csv(cb, small_sweep(), HASH)
    assert ca.read_bytes() == cb.read_bytes()


def test_sweep_csv_round_trip(tmp_path):
    path = tmp_path / "sweep.csv"
    res = small_sweep()
    write_sweep_csv(path, res, HASH)
    meta, rows = read_sweep_csv(path)
    assert meta["config_hash"] == HASH
    assert meta["meta"]["preset"] == "burgers"
    assert int(meta["n_paths"]) == 4
    err_rows = [r for r in rows if r["metric"] == "err"]
    assert [r["eps"] for r in err_rows] == [0.4, 0.2, 0.1]
    for row, want in zip(err_rows, res.stats["err"][:, 0]):
        assert row["median"] == want
        assert row["slope"] == pytest.approx(res.slope("err"))
    flat_rows = [r for r in rows if r["metric"] == "flat"]
    assert all(math.isnan(r["slope"]) for r in flat_rows)


def test_sweep_csv_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_sweep_csv(path)


def test_regime_summary_written_as_json(tmp_path):
    class Report:
        case = "stable"
        eps = 0.1
        nu = -0.01
        sigma = 0.01
        horizon_slow = 1.0
        n_paths = 6
        fractions = {"spde_negative": {"count": 6, "n": 6, "fraction": 1.0,
                                       "wilson_lo": 0.61, "wilson_hi": 1.0}}
        lam_ae_max = -1.2
        blowup_count = 0
        meta = {"preset": "burgers"}

    path = tmp_path / "regime.json"
    write_regime_summary(path, Report(), HASH, samples_file="s.jsonl")
    obj = json.loads(path.read_text())
    assert obj["kind"] == "regime-summary"
    assert obj["config_hash"] == HASH
    assert obj["case"] == "stable"
    assert obj["fractions"]["spde_negative"]["count"] == 6
    assert obj["samples_file"] == "s.jsonl"


def test_trajectory_csv_layout(tmp_path):
    class Run:
        states = np.arange(24.0).reshape(2, 3, 4)
        ae = np.arange(6.0).reshape(2, 3, 1) / 7.0
        times = np.array([0.0, 0.5, 1.0])
        stream_ids = np.array([10, 11])
        seed = 3

    path = tmp_path / "traj.csv"
    write_trajectory_csv(path, Run(), 1, HASH)
    lines = path.read_text().splitlines()
    header = [ln for ln in lines if not ln.startswith("#")]
    assert header[0] == "t_slow,x0,x1,x2,x3,a0"
    first = header[1].split(",")
    assert float(first[0]) == 0.0
    assert float(first[1]) == 12.0
    assert float(first[5]) == pytest.approx(3.0 / 7.0)
    assert any(ln == f"# stream_id: 11" for ln in lines)


def test_report_index_scans_and_groups(tmp_path):
    write_samples_jsonl(tmp_path / "s-aaa.jsonl", sample_trio(), "aaa")
    write_sweep_csv(tmp_path / "w-bbb.csv", small_sweep(), "bbb")
    (tmp_path / "notes.txt").write_text("not an artifact")
    (tmp_path / "rogue.csv").write_text("x,y\n1,2\n")
    index = write_report_index(tmp_path)
    kinds = {e["file"]: e["kind"] for e in index["entries"]}
    assert kinds == {"s-aaa.jsonl": "ftle-samples", "w-bbb.csv": "sweep-result"}
    assert index["config_hashes"] == ["aaa", "bbb"]
    on_disk = json.loads((tmp_path / "index.json").read_text())
    assert on_disk["n_entries"] == 2
    # rerunning after the index exists gives the same bytes and does not
    # index the index itself
    before = (tmp_path / "index.json").read_bytes()
    write_report_index(tmp_path)
    assert (tmp_path / "index.json").read_bytes() == before
    with pytest.raises(FileNotFoundError):
        write_report_index(tmp_path / "missing")


def test_artifact_path_name():
    p = artifact_path("out", "sweep", "abc123", "csv")
    assert str(p) == "out/sweep-abc123.csv"
