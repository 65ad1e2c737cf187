import json
import shutil
import subprocess
import sys

import numpy as np
import pandas as pd
import pytest

from icejam.cli import main
from icejam.features import StationSeries
from icejam.io import (
    CSVFormatError,
    fmt6,
    load_feature_table,
    load_station_csv,
    write_feature_table,
    write_station_csv,
)
from icejam.pipeline import StageError, compute_features, load_config, run_pipeline

HEADER = "station_id,date,tmean_c,precip_mm\n"


def write(tmp_path, text, name="s.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_station_csv_well_formed(tmp_path):
    p = write(tmp_path, HEADER + "A,2000-01-01,-3.5,0\nA,2000-01-02,-4,1.2\nA,2000-01-03,1,0.4\n")
    s = load_station_csv(p)
    assert len(s.dates) == 3 and s.station_id == "A"
    assert s.tmean.tolist() == [-3.5, -4.0, 1.0]


def test_station_csv_missing_field_kept(tmp_path):
    s = load_station_csv(write(tmp_path, HEADER + "A,2000-01-01,,0.5\nA,2000-01-02,2,\n"))
    assert np.isnan(s.tmean[0]) and s.precip[0] == 0.5
    assert np.isnan(s.precip[1])
    assert [str(d) for d in s.missing_dates("tmean")] == ["2000-01-01"]


@pytest.mark.parametrize("body,line,fragment", [
    ("A,2000-01-01,1,0\nA,2000-01-01,2,0\n", 3, "duplicate date"),
    ("A,2000-01-01,1,-0.1\n", 2, "negative precipitation"),
    ("A,2000-01-01,1,0\nA,2000-01-02,x,0\n", 3, "bad tmean_c"),
    ("A,2000-01-02,1,0\nA,2000-01-01,1,0\n", 3, "out of order"),
    ("A,2000-01-01,1,0\nB,2000-01-02,1,0\n", 3, "mixed station"),
    ("A,2000-13-01,1,0\n", 2, "bad date"),
])
def test_station_csv_rejects_with_line(tmp_path, body, line, fragment):
    with pytest.raises(CSVFormatError) as exc:
        load_station_csv(write(tmp_path, HEADER + body))
    assert exc.value.line == line
    assert fragment in str(exc.value)
    assert f":{line}:" in str(exc.value)


def test_station_csv_header_checked(tmp_path):
    with pytest.raises(CSVFormatError, match="expected header"):
        load_station_csv(write(tmp_path, "id,date,t,p\nA,2000-01-01,1,0\n"))


def test_station_csv_round_trip(tmp_path):
    dates = np.arange("2001-01-01", "2001-03-01", dtype="datetime64[D]")
    rng = np.random.default_rng(0)
    t = rng.normal(size=dates.size)
    t[5] = np.nan
    s = StationSeries("X", dates, t, rng.gamma(1.0, size=dates.size))
    write_station_csv(s, tmp_path / "x.csv")
    assert load_station_csv(tmp_path / "x.csv") == s


def test_feature_table_round_trip_exact(tmp_path):
    rng = np.random.default_rng(1)
    table = pd.DataFrame({"breakup_year": np.arange(1972, 1990),
                          "gp_precip_pct": rng.normal(size=18) / 3,
                          "fv_ddf": rng.normal(size=18) * 1e-7,
                          "melt_test": rng.integers(5, 30, 18).astype(float),
                          "flood": rng.integers(0, 2, 18)})
    table.loc[3, "melt_test"] = np.nan
    write_feature_table(table, tmp_path / "f.csv")
    back = load_feature_table(tmp_path / "f.csv")
    pd.testing.assert_frame_equal(back, table, check_exact=True, check_dtype=False)


def test_fmt6():
    assert fmt6(42.172345678) == 42.1723
    assert fmt6(0.000123456789) == 0.000123457
    assert np.isnan(fmt6(float("nan")))


# ---------------------------------------------------------------------------
# pipeline on the synthetic data set


@pytest.fixture(scope="module")
def cfg(synthetic_dir):
    return load_config(synthetic_dir / "run.yaml")


@pytest.fixture(scope="module")
def features(cfg):
    return compute_features(cfg)


def test_exclusions_absent(features, cfg):
    years = set(features.table["breakup_year"])
    assert not years & {1968, 1969, 1970, 1971}
    assert {1968, 1969, 1970, 1971} <= set(features.all_years["breakup_year"])


def test_row_count(features, cfg):
    floods = pd.read_csv(cfg.path(cfg.flood_file))
    assert len(features.table) == len(floods) - 4
    assert len(features.table) == 55


def test_provenance_lists_exactly_the_injected_gaps(features, cfg):
    expected = set()
    for role, fields in (("precip", ("tmean", "precip")), ("upstream", ("tmean",)),
                         ("downstream", ("tmean",))):
        raw = pd.read_csv(cfg.path(cfg.stations[role]["target"]), keep_default_na=True)
        for name in fields:
            col = {"tmean": "tmean_c", "precip": "precip_mm"}[name]
            for _, row in raw[raw[col].isna()].iterrows():
                expected.add((row["station_id"], row["date"], name))
    got = set(zip(features.provenance["station_id"], features.provenance["date"],
                  features.provenance["field"]))
    assert expected and got == expected


def test_features_stage_isolated(cfg, tmp_path):
    res = run_pipeline(cfg, ["features"], tmp_path)
    names = {p.name for p in tmp_path.iterdir()}
    assert names == {"features.csv", "features_all_years.csv", "features_provenance.csv",
                     "features_incomplete.csv", "scaling.json", "manifest.json"}
    assert res["stages"] == ["features"]
    table = load_feature_table(tmp_path / "features.csv")
    assert len(table) == 55


def test_seed_required_for_stochastic_stage(cfg, tmp_path):
    from dataclasses import replace

    with pytest.raises(StageError) as exc:
        run_pipeline(replace(cfg, seed=None), ["features", "select", "fit", "bootstrap"], tmp_path)
    assert exc.value.stage == "bootstrap"
    assert not any(tmp_path.iterdir())


def test_stage_error_names_stage(cfg, tmp_path):
    from dataclasses import replace

    bad = replace(cfg, candidates=["no_such_column"])
    with pytest.raises(StageError) as exc:
        run_pipeline(bad, ["features", "select"], tmp_path)
    assert exc.value.stage == "select"


def test_later_stage_reuses_bundle(cfg, tmp_path):
    run_pipeline(cfg, ["features", "select", "fit"], tmp_path)
    before = (tmp_path / "fit.csv").read_bytes()
    run_pipeline(cfg, ["fit"], tmp_path)
    assert (tmp_path / "fit.csv").read_bytes() == before


def test_full_run_is_byte_identical(cfg, tmp_path):
    from dataclasses import replace

    a, b = tmp_path / "a", tmp_path / "b"
    run_pipeline(cfg, ["features", "select", "fit", "bootstrap", "project", "report"], a)
    run_pipeline(replace(cfg, workers=2), ["features", "select", "fit", "bootstrap", "project",
                                           "report"], b)
    files_a = sorted(p.name for p in a.iterdir())
    assert files_a == sorted(p.name for p in b.iterdir())
    for name in files_a:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    for name in ("corridors.csv", "wait_times.json", "bootstrap_ci.csv", "selection_path.csv",
                 "combinations.csv", "report.md"):
        assert (a / name).exists()
    corr = pd.read_csv(a / "corridors.csv")
    assert list(corr.columns) == ["gcm", "rcp", "year", "level", "p", "return_period"]
    waits = json.loads((a / "wait_times.json").read_text())
    assert {"gcm", "rcp", "reference_year", "median", "censored_fraction", "quantiles"} <= set(waits[0])


def test_config_rejects_unknown_keys(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("seed: 1\nbogus: 2\n")
    with pytest.raises(ValueError, match="bogus"):
        load_config(p)


# ---------------------------------------------------------------------------
# command line


def test_cli_features_success(synthetic_dir, tmp_path, capsys):
    code = main(["features", "--config", str(synthetic_dir / "run.yaml"), "--out", str(tmp_path)])
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["stages"] == ["features"]


def test_cli_error_line(synthetic_dir, tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    text = (synthetic_dir / "run.yaml").read_text().replace("data/floods.csv", "data/none.csv")
    cfg.write_text(text)
    shutil.copytree(synthetic_dir / "data", tmp_path / "data")
    code = main(["features", "--config", str(cfg), "--out", str(tmp_path / "out")])
    assert code == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"]["stage"] == "features"
    assert err["error"]["type"] == "FileNotFoundError"


def test_cli_usage_errors(tmp_path, capsys):
    assert main(["fit", "--config", str(tmp_path / "missing.yaml")]) == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"]["stage"] == "config"
    with pytest.raises(SystemExit) as exc:
        main(["fit"])
    assert exc.value.code == 2


def test_cli_entry_point_runs(synthetic_dir, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "icejam.cli", "select", "--config",
                           str(synthetic_dir / "run.yaml"), "--stages", "features,select",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "selection_path.csv").exists()
