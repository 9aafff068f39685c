"""CSV ingestion, the panel collapse transform, and the batch CLI contract."""

import json
import subprocess
import sys

import numpy as np
import pytest
from scipy import stats

import robustinf as ri
from robustinf.cli import main
from robustinf.data import collapse_periods
from robustinf.errors import ConfigError, EmptyAfterFiltering, ParseError


def _fmt(v):
    return repr(float(v))


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------


def test_ingest_well_formed_three_rows(tmp_path):
    p = _write(tmp_path / "d.csv", "y,x\n1,2\n2,3\n3,4\n")
    data, rep = ri.ingest_csv(p, outcome="y", covariates=["x"])
    assert data.n_rows == 3
    assert rep.n_dropped == 0


def test_ingest_blank_outcome_cell_drops_and_counts(tmp_path):
    p = _write(tmp_path / "d.csv", "y,x\n1,2\n,3\n3,4\n")
    data, rep = ri.ingest_csv(p, outcome="y", covariates=["x"])
    assert data.n_rows == 2
    assert rep.n_dropped == 1
    assert rep.dropped_by_column == {"y": 1}


def test_ingest_cluster_labels_densified_with_mapping(tmp_path):
    p = _write(tmp_path / "d.csv", "y,x,state\n1,2,WA\n2,3,OR\n3,4,WA\n")
    data, rep = ri.ingest_csv(
        p, outcome="y", covariates=["x"], cluster_columns=["state"]
    )
    np.testing.assert_array_equal(data.cluster_labels["state"], [0, 1, 0])
    assert rep.label_maps["state"] == {"WA": 0, "OR": 1}


def test_ingest_unparseable_cell_raises_with_location(tmp_path):
    p = _write(tmp_path / "d.csv", "y,x\n1,2\n2,oops\n")
    with pytest.raises(ParseError) as err:
        ri.ingest_csv(p, outcome="y", covariates=["x"])
    assert err.value.line == 3
    assert err.value.column == "x"


def test_ingest_all_rows_dropped_raises(tmp_path):
    p = _write(tmp_path / "d.csv", "y,x\n,2\n,3\n")
    with pytest.raises(EmptyAfterFiltering):
        ri.ingest_csv(p, outcome="y", covariates=["x"])


def test_ingest_missing_column_is_config_error(tmp_path):
    p = _write(tmp_path / "d.csv", "y,x\n1,2\n")
    with pytest.raises(ConfigError):
        ri.ingest_csv(p, outcome="y", covariates=["zz"])


def test_ingest_nonfinite_values_dropped(tmp_path):
    p = _write(tmp_path / "d.csv", "y,x\n1,2\ninf,3\n2,4\nnan,5\n3,6\n")
    data, rep = ri.ingest_csv(p, outcome="y", covariates=["x"])
    assert data.n_rows == 3
    assert rep.n_dropped == 2
    assert np.all(np.isfinite(data.outcome))


# ---------------------------------------------------------------------------
# collapse_periods
# ---------------------------------------------------------------------------


def test_collapse_four_periods_to_two_rows_of_means():
    columns = {
        "id": ["u1"] * 4,
        "t": ["1", "2", "3", "4"],
        "y": ["1", "3", "10", "20"],
    }
    out, rep = collapse_periods(columns, unit="id", period="t", cutoff=2)
    assert rep.n_units == 1
    assert out["id"] == ["u1", "u1"]
    assert out["t"] == ["0", "1"]
    assert [float(v) for v in out["y"]] == [2.0, 15.0]


def test_collapse_two_periods_is_identity_up_to_ordering():
    columns = {
        "id": ["a", "b", "a", "b"],
        "t": ["0", "0", "1", "1"],
        "y": ["1", "2", "3", "4"],
    }
    out, _ = collapse_periods(columns, unit="id", period="t", cutoff=0)
    got = sorted(zip(out["id"], out["t"], [float(v) for v in out["y"]]))
    assert got == [("a", "0", 1.0), ("a", "1", 3.0), ("b", "0", 2.0), ("b", "1", 4.0)]


def test_collapse_drops_one_sided_units_and_counts():
    columns = {
        "id": ["a", "a", "b"],
        "t": ["0", "1", "0"],
        "y": ["1", "2", "9"],
    }
    out, rep = collapse_periods(columns, unit="id", period="t", cutoff=0)
    assert rep.units_dropped_one_sided == 1
    assert out["id"] == ["a", "a"]


def test_collapse_seeded_panel_matches_group_mean_oracle():
    rng = np.random.default_rng(55)
    units, periods = 12, 6
    ids, ts, ys, xs = [], [], [], []
    for u in range(units):
        for t in range(periods):
            ids.append(f"u{u}")
            ts.append(str(t))
            ys.append(repr(rng.normal()))
            xs.append(repr(rng.normal()))
    columns = {"id": ids, "t": ts, "y": ys, "x": xs}
    cutoff = 2
    out, rep = collapse_periods(columns, unit="id", period="t", cutoff=cutoff)
    assert rep.n_units == units
    y = np.array([float(v) for v in ys]).reshape(units, periods)
    for u in range(units):
        pre = float(out["y"][2 * u])
        post = float(out["y"][2 * u + 1])
        assert pre == pytest.approx(y[u, : cutoff + 1].mean(), abs=1e-12)
        assert post == pytest.approx(y[u, cutoff + 1 :].mean(), abs=1e-12)


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def _behrens_fisher_csv(tmp_path, seed=4, n0=3, n1=27, s0=0.5, s1=2.0):
    rng = np.random.default_rng(seed)
    y = np.concatenate([rng.normal(0, s0, n0), rng.normal(1.0, s1, n1)])
    t = np.r_[np.zeros(n0), np.ones(n1)]
    lines = ["y,t"] + [f"{_fmt(v)},{int(d)}" for v, d in zip(y, t)]
    return _write(tmp_path / "bf.csv", "\n".join(lines) + "\n"), y, t


def _config(tmp_path, **kw):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(kw), encoding="utf-8")
    return str(path)


def test_cli_behrens_fisher_bm_matches_welch_oracle(tmp_path):
    csv_path, y, t = _behrens_fisher_csv(tmp_path)
    out = tmp_path / "report.json"
    cfg = _config(
        tmp_path,
        input=csv_path,
        outcome="y",
        covariates=["t"],
        treatment="t",
        vcov="hc2_bm",
        output={"path": str(out), "timestamp": False},
    )
    assert main(["--config", cfg]) == 0
    report = json.loads(out.read_text())
    row = [c for c in report["coefficients"] if c["name"] == "t"][0]
    t_w, p_w = stats.ttest_ind(y[t == 1], y[t == 0], equal_var=False)
    assert row["statistic"] == pytest.approx(t_w, rel=1e-9)
    assert row["p_value"] == pytest.approx(p_w, rel=1e-6)
    assert (row["p_value"] < 0.05) == (p_w < 0.05)


def test_cli_low_replication_warning_lands_in_report(tmp_path):
    csv_path, *_ = _behrens_fisher_csv(tmp_path)
    out = tmp_path / "report.json"
    cfg = _config(
        tmp_path,
        input=csv_path,
        outcome="y",
        covariates=["t"],
        vcov="hc1",
        resample={"scheme": "pairs", "replications": 500, "seed": 9},
        output={"path": str(out), "timestamp": False},
    )
    assert main(["--config", cfg]) == 0
    report = json.loads(out.read_text())
    assert any("below the r >=" in w for w in report["warnings"])
    assert report["resample"]["replications"] == 500


def test_cli_mht_holm_consistent_with_library(tmp_path):
    rng = np.random.default_rng(77)
    n = 60
    d = (rng.random(n) < 0.5).astype(int)
    lines = ["y1,y2,y3,d"]
    for i in range(n):
        y1 = 0.9 * d[i] + rng.normal()
        y2 = 0.5 * d[i] + rng.normal()
        y3 = rng.normal()
        lines.append(f"{_fmt(y1)},{_fmt(y2)},{_fmt(y3)},{int(d[i])}")
    csv_path = _write(tmp_path / "m.csv", "\n".join(lines) + "\n")
    out = tmp_path / "report.json"
    cfg = _config(
        tmp_path,
        input=csv_path,
        outcome="y1",
        covariates=["d"],
        treatment="d",
        vcov="hc1",
        mht={"method": "holm", "family": ["y1", "y2", "y3"], "target": "d"},
        output={"path": str(out), "timestamp": False},
    )
    assert main(["--config", cfg]) == 0
    report = json.loads(out.read_text())
    raw = [r["raw_p"] for r in report["mht"]["results"]]
    lib = ri.holm(ri.PValueFamily.from_p_values(raw, ids=["y1", "y2", "y3"]))
    assert [r["adjusted_p"] for r in report["mht"]["results"]] == pytest.approx(
        [x.adjusted_p for x in lib.results]
    )
    assert [r["rejected"] for r in report["mht"]["results"]] == [
        x.rejected for x in lib.results
    ]


def test_cli_report_roundtrip_and_byte_identical_reruns(tmp_path):
    csv_path, *_ = _behrens_fisher_csv(tmp_path)
    out1, out2 = tmp_path / "r1.json", tmp_path / "r2.json"
    base = dict(
        input=csv_path,
        outcome="y",
        covariates=["t"],
        treatment="t",
        vcov="hc1",
        resample={"scheme": "ri", "replications": 2000, "seed": 11},
    )
    cfg1 = _config(tmp_path, **base, output={"path": str(out1), "timestamp": False})
    assert main(["--config", cfg1]) == 0
    cfg2 = json.loads((tmp_path / "config.json").read_text())
    cfg2["output"]["path"] = str(out2)
    (tmp_path / "config2.json").write_text(json.dumps(cfg2))
    assert main(["--config", str(tmp_path / "config2.json")]) == 0
    assert out1.read_bytes() == out2.read_bytes()

    report = json.loads(out1.read_text())
    assert json.loads(json.dumps(report)) == report  # numeric fields round-trip


def test_cli_flag_overrides_beat_config(tmp_path):
    csv_path, *_ = _behrens_fisher_csv(tmp_path)
    out = tmp_path / "report.json"
    cfg = _config(
        tmp_path,
        input=csv_path,
        outcome="y",
        covariates=["t"],
        vcov="conventional",
        resample={"scheme": "pairs", "replications": 6000, "seed": 1},
        output={"path": str(out), "timestamp": False},
    )
    assert main(["--config", cfg, "--vcov", "hc3", "--reps", "5000", "--seed", "2"]) == 0
    report = json.loads(out.read_text())
    assert report["vcov"]["kind"] == "hc3"
    assert report["resample"]["replications"] == 5000
    assert report["resample"]["seed"] == 2


def test_cli_exit_codes(tmp_path):
    # config error: missing required key
    bad_cfg = _config(tmp_path, input="x.csv", outcome="y")
    assert main(["--config", bad_cfg]) == 2

    # config error: resampling without a seed
    csv_path, *_ = _behrens_fisher_csv(tmp_path)
    noseed = _config(
        tmp_path, input=csv_path, outcome="y", covariates=["t"],
        resample={"scheme": "pairs", "replications": 100},
    )
    assert main(["--config", noseed]) == 2

    # data error: input file missing
    gone = _config(tmp_path, input=str(tmp_path / "gone.csv"), outcome="y",
                   covariates=["t"])
    assert main(["--config", gone]) == 3

    # numeric infeasibility: saturated dummy with HC2
    lines = ["y,x,solo"]
    rng = np.random.default_rng(8)
    for i in range(10):
        lines.append(f"{_fmt(rng.normal())},{_fmt(rng.normal())},{int(i == 4)}")
    sat = _write(tmp_path / "sat.csv", "\n".join(lines) + "\n")
    satcfg = _config(tmp_path, input=sat, outcome="y", covariates=["x", "solo"],
                     vcov="hc2")
    assert main(["--config", satcfg]) == 4


def test_cli_collapse_periods_config(tmp_path):
    rng = np.random.default_rng(12)
    lines = ["id,t,y,d"]
    for u in range(20):
        d = int(u < 10)
        for t in range(4):
            y = 0.5 * d * (t > 1) + rng.normal()
            lines.append(f"u{u},{t},{_fmt(y)},{d}")
    csv_path = _write(tmp_path / "panel.csv", "\n".join(lines) + "\n")
    out = tmp_path / "report.json"
    cfg = _config(
        tmp_path,
        input=csv_path,
        outcome="y",
        covariates=["d"],
        vcov="hc1",
        collapse_periods={"unit": "id", "period": "t", "cutoff": 1},
        output={"path": str(out), "timestamp": False},
    )
    assert main(["--config", cfg]) == 0
    report = json.loads(out.read_text())
    assert report["transform"]["collapse_periods"]["n_units"] == 20
    assert report["data"]["n_rows_used"] == 40


def test_cli_csv_coefficient_table(tmp_path):
    csv_path, *_ = _behrens_fisher_csv(tmp_path)
    out = tmp_path / "report.json"
    flat = tmp_path / "coef.csv"
    cfg = _config(
        tmp_path, input=csv_path, outcome="y", covariates=["t"], vcov="hc1",
        output={"path": str(out), "csv_path": str(flat), "timestamp": False},
    )
    assert main(["--config", cfg]) == 0
    rows = flat.read_text().strip().splitlines()
    assert rows[0].split(",")[:3] == ["name", "estimate", "se"]
    assert len(rows) == 3  # header + const + t


def test_console_script_runs_as_subprocess(tmp_path):
    csv_path, *_ = _behrens_fisher_csv(tmp_path)
    out = tmp_path / "report.json"
    cfg = _config(
        tmp_path, input=csv_path, outcome="y", covariates=["t"], vcov="hc1",
        output={"path": str(out), "timestamp": False},
    )
    proc = subprocess.run(
        [sys.executable, "-m", "robustinf.cli", "--config", cfg],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert out.exists()


def test_effective_clusters_and_diagnostics_in_report(tmp_path):
    rng = np.random.default_rng(13)
    lines = ["y,x,g"]
    labels = np.repeat(np.arange(8), 6)
    for i in range(48):
        lines.append(f"{_fmt(rng.normal())},{_fmt(rng.normal())},g{labels[i]}")
    csv_path = _write(tmp_path / "c.csv", "\n".join(lines) + "\n")
    out = tmp_path / "report.json"
    cfg = _config(
        tmp_path, input=csv_path, outcome="y", covariates=["x"],
        clusters=["g"], vcov="cluster",
        output={"path": str(out), "timestamp": False},
    )
    assert main(["--config", cfg]) == 0
    report = json.loads(out.read_text())
    assert report["vcov"]["cluster_counts"] == {"g": 8}
    eff = report["diagnostics"]["effective_clusters"]["g"]
    assert 1.0 < eff["x"] <= 8.0
    assert "max_leverage" in report["diagnostics"]
    assert report["assumption_statement"]["source"] == "template"


def test_cli_multiway_vcov(tmp_path):
    rng = np.random.default_rng(14)
    lines = ["y,d,grp,period"]
    for g in range(12):
        for t in range(6):
            d = int(g < 6)
            y = 0.4 * d + rng.normal()
            lines.append(f"{_fmt(y)},{d},g{g},p{t}")
    csv_path = _write(tmp_path / "panel2.csv", "\n".join(lines) + "\n")
    out = tmp_path / "report.json"
    cfg = _config(
        tmp_path, input=csv_path, outcome="y", covariates=["d"],
        clusters=["grp", "period"], vcov="multiway",
        output={"path": str(out), "timestamp": False},
    )
    assert main(["--config", cfg]) == 0
    report = json.loads(out.read_text())
    assert report["vcov"]["kind"] == "multiway"
    assert report["vcov"]["cluster_counts"]["grp"] == 12
    assert report["vcov"]["cluster_counts"]["period"] == 6
    # conservative dof note surfaces in the report
    assert any("min(C_a, C_b)" in note for note in report["vcov"]["notes"])
    assert report["coefficients"][1]["dof"] == 5.0


def test_cli_romano_wolf_family(tmp_path):
    rng = np.random.default_rng(15)
    n = 60
    d = (rng.random(n) < 0.5).astype(int)
    lines = ["y1,y2,d"]
    for i in range(n):
        lines.append(
            f"{_fmt(1.0 * d[i] + rng.normal())},{_fmt(rng.normal())},{int(d[i])}"
        )
    csv_path = _write(tmp_path / "rw.csv", "\n".join(lines) + "\n")
    out = tmp_path / "report.json"
    cfg = _config(
        tmp_path, input=csv_path, outcome="y1", covariates=["d"], treatment="d",
        vcov="hc1",
        mht={"method": "rw", "family": ["y1", "y2"], "target": "d",
             "seed": 3, "replications": 1500},
        output={"path": str(out), "timestamp": False},
    )
    assert main(["--config", cfg]) == 0
    report = json.loads(out.read_text())
    assert report["mht"]["method"] == "romano_wolf"
    assert len(report["mht"]["results"]) == 2
    for row in report["mht"]["results"]:
        assert 0.0 <= row["raw_p"] <= row["adjusted_p"] <= 1.0
