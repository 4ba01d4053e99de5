"""
End-to-end tests of the ``lagcorr`` commands, their exit codes and run manifests.
"""
import json
import os
from pathlib import Path

import pytest

from lagcorr.correlation import read_summary_csv
from lagcorr.ingest import clean, read_dataset_csv
from lagcorr.main import build_parser, run
from lagcorr.models import CurveStatus, VariableKind

ENV_CSV = """date,temp,humidity,pm2.5,NO2
2020-03-01,10.0,72,31,19.5
2020-03-02,11.5,70,30.2,21
2020-03-03,12.25,,28,23
"""

CASES_CSV = """data,stato,codice_provincia,denominazione_provincia,sigla_provincia,totale_casi
2020-03-01T17:00:00,ITA,15,Milano,MI,46
2020-03-02T17:00:00,ITA,15,Milano,MI,58
2020-03-03T17:00:00,ITA,15,Milano,MI,93
2020-03-01T17:00:00,ITA,17,Brescia,BS,116
"""


def manifest(out_dir: Path, command: str) -> dict:
    return json.loads((out_dir / f"manifest_{command}.json").read_text())


def write_inputs(tmp_path: Path) -> Path:
    inputs = tmp_path / "inputs"
    inputs.mkdir()
    (inputs / "milano_env.csv").write_text(ENV_CSV)
    (inputs / "brescia_env.csv").write_text(ENV_CSV)
    (inputs / "cases.csv").write_text(CASES_CSV)
    return inputs


def ingest_args(inputs: Path, out_dir: Path, districts: str):
    return [
        "ingest",
        "--out-dir", str(out_dir),
        "--districts", districts,
        "--env-source", str(inputs / "{district}_env.csv"),
        "--cases-source", str(inputs / "cases.csv"),
    ]


def synth(out_dir: Path, *extra: str) -> int:
    return run(["synth", "--out-dir", str(out_dir), "--seed", "5", "--days", "200", "--lag", "10", *extra])


# ingest

def test_ingest_writes_dataset_and_audit(tmp_path):
    inputs, out_dir = write_inputs(tmp_path), tmp_path / "out"
    assert run(ingest_args(inputs, out_dir, "milano")) == 0

    ds = read_dataset_csv(out_dir / "datasets" / "milano.csv", "milano")
    assert [d.isoformat() for d in ds.dates] == ["2020-03-02", "2020-03-03"]
    assert ds.frame["new_cases"].tolist() == [12, 35]
    audit = json.loads((out_dir / "datasets" / "milano_audit.json").read_text())
    assert audit["removed"]["missing_new_cases"] == 1
    assert "humidity_median" not in audit["required_variables"]
    assert manifest(out_dir, "ingest")["exit_code"] == 0


LONG_ENV_CSV = """Date,Country,City,Specie,count,min,max,median,variance
2020-03-01,IT,Milan,temperature,24,5,12,9.5,3.1
2020-03-01,IT,Milan,no2,24,10,40,22,40
2020-03-02,IT,Milan,temperature,24,6,13,10.5,2.9
2020-03-02,IT,Milan,no2,24,12,44,25,38
2020-03-03,IT,Milan,temperature,24,6,14,11.0,2.7
2020-03-03,IT,Milan,no2,24,11,41,24,35
2020-03-03,IT,Rome,temperature,24,8,16,13,2.0
"""


@pytest.mark.parametrize("district", ["Milano", "Milan", "MI"])
def test_ingest_combines_air_quality_export_with_civil_protection_cases(tmp_path, district):
    inputs, out_dir = write_inputs(tmp_path), tmp_path / "out"
    (inputs / "air_quality.csv").write_text(LONG_ENV_CSV)
    code = run([
        "ingest", "--out-dir", str(out_dir), "--districts", district,
        "--env-source", str(inputs / "air_quality.csv"),
        "--cases-source", str(inputs / "cases.csv"),
    ])
    assert code == 0

    slug = district.lower()
    ds = read_dataset_csv(out_dir / "datasets" / f"{slug}.csv", slug)
    assert [d.isoformat() for d in ds.dates] == ["2020-03-02", "2020-03-03"]
    assert ds.frame["temp_median"].tolist() == [10.5, 11.0]
    assert ds.frame["new_cases"].tolist() == [12, 35]


def test_ingest_missing_file_exits_2(tmp_path):
    out_dir = tmp_path / "out"
    code = run([
        "ingest", "--out-dir", str(out_dir), "--districts", "milano",
        "--env-source", str(tmp_path / "nowhere.csv"),
        "--cases-source", str(tmp_path / "cases.csv"),
    ])
    assert code == 2
    failure = manifest(out_dir, "ingest")["failures"][0]
    assert failure["error_code"] == "SOURCE_NOT_FOUND"
    assert "nowhere.csv" in failure["message"]


def test_ingest_empty_after_clean_exits_3(tmp_path):
    inputs, out_dir = write_inputs(tmp_path), tmp_path / "out"
    # Brescia has a single cumulative count, so no day has new cases.
    assert run(ingest_args(inputs, out_dir, "milano,brescia")) == 3
    record = manifest(out_dir, "ingest")
    assert [failure["item"] for failure in record["failures"]] == ["brescia"]
    assert (out_dir / "datasets" / "milano.csv").is_file()


def test_ingest_requires_an_environment_source(tmp_path):
    out_dir = tmp_path / "out"
    assert run(["ingest", "--out-dir", str(out_dir), "--districts", "milano"]) == 2
    assert manifest(out_dir, "ingest")["failures"][0]["error_code"] == "CONFIG_INVALID"


# synth, correlate, train

def test_synth_output_passes_clean_unchanged(tmp_path):
    out_dir = tmp_path / "out"
    assert run(["synth", "--out-dir", str(out_dir), "--lag", "22", "--days", "400"]) == 0
    ds = read_dataset_csv(out_dir / "datasets" / "synthetic.csv", "synthetic")
    cleaned, audit = clean(ds)
    assert audit.rows_after == audit.rows_before == 400
    assert manifest(out_dir, "synth")["config"]["synthetic"]["variables"][0]["planted_lag"] == 22


def test_synth_rejects_too_short_series(tmp_path):
    out_dir = tmp_path / "out"
    assert run(["synth", "--out-dir", str(out_dir), "--days", "50", "--lag", "22"]) == 2
    assert not (out_dir / "datasets" / "synthetic.csv").exists()
    assert manifest(out_dir, "synth")["exit_code"] == 2


def test_synth_is_byte_identical_for_a_seed(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert synth(first) == synth(second) == 0
    assert (first / "datasets" / "synthetic.csv").read_bytes() == (second / "datasets" / "synthetic.csv").read_bytes()

    before = (first / "manifest_synth.json").read_bytes()
    synth(first)
    assert (first / "manifest_synth.json").read_bytes() == before


def test_correlate_reports_planted_lag(tmp_path):
    out_dir = tmp_path / "out"
    synth(out_dir)
    assert run(["correlate", "--out-dir", str(out_dir), "--max-lag", "15"]) == 0

    summary = {row.variable: row for row in read_summary_csv(out_dir / "curves" / "synthetic_summary.csv")}
    assert abs(summary[VariableKind.TEMP_MEDIAN].peak_lag - 10) <= 1
    assert all(row.status == CurveStatus.OK for row in summary.values())
    assert (out_dir / "curves" / "synthetic_temp_median_curve.csv").is_file()
    assert (out_dir / "curves" / "synthetic_temp_median_curve.json").is_file()


def test_correlate_is_identical_across_runs_and_job_counts(tmp_path):
    runs = []
    for name, jobs in (("serial", "1"), ("parallel", "3")):
        out_dir = tmp_path / name
        synth(out_dir)
        assert run(["correlate", "--out-dir", str(out_dir), "--max-lag", "12", "--jobs", jobs]) == 0
        runs.append(out_dir / "curves")
    for path in sorted(runs[0].iterdir()):
        assert path.read_bytes() == (runs[1] / path.name).read_bytes()


def test_correlate_without_datasets_exits_2(tmp_path):
    assert run(["correlate", "--out-dir", str(tmp_path / "empty")]) == 2


def test_train_at_fixed_lag_with_every_family(tmp_path):
    out_dir = tmp_path / "out"
    config = tmp_path / "run.env"
    config.write_text("forest_n_estimators=10\nboost_n_estimators=20\nmlp_epochs=20\n")
    synth(out_dir, "--days", "400")
    code = run([
        "train", "--config", str(config), "--out-dir", str(out_dir),
        "--models", "forest,boost,mlp", "--lags", "10", "--max-lag", "15",
    ])
    assert code == 0
    reports = sorted(path.name for path in (out_dir / "reports").glob("*.json"))
    assert reports == ["synthetic_boost_lag10.json", "synthetic_forest_lag10.json", "synthetic_mlp_lag10.json"]
    forest = json.loads((out_dir / "reports" / "synthetic_forest_lag10.json").read_text())
    assert forest["r2"] > 0.6
    assert forest["spec"]["n_estimators"] == 10
    assert (out_dir / "reports" / "synthetic_forest_lag10_predictions.csv").is_file()
    assert (out_dir / "models" / "synthetic_mlp_lag10.json").is_file()
    assert len(manifest(out_dir, "train")["outputs"]) == 9


def test_train_at_correlation_peaks(tmp_path):
    out_dir = tmp_path / "out"
    synth(out_dir)
    run(["correlate", "--out-dir", str(out_dir), "--max-lag", "15"])
    assert run(["train", "--out-dir", str(out_dir), "--models", "tree", "--max-lag", "15"]) == 0
    names = [path.name for path in (out_dir / "reports").glob("synthetic_tree_lag*.json")]
    assert any(name in names for name in ("synthetic_tree_lag9.json", "synthetic_tree_lag10.json", "synthetic_tree_lag11.json"))


def test_train_without_correlation_summary_fails(tmp_path):
    out_dir = tmp_path / "out"
    synth(out_dir)
    assert run(["train", "--out-dir", str(out_dir), "--models", "tree"]) == 2
    assert manifest(out_dir, "train")["failures"][0]["error_code"] == "SOURCE_NOT_FOUND"


def test_train_rejects_bad_spec_before_training(tmp_path):
    out_dir = tmp_path / "out"
    synth(out_dir)
    assert run(["train", "--out-dir", str(out_dir), "--lags", "12", "--max-lag", "10"]) == 2
    assert not (out_dir / "reports").exists()


def test_parser_rejects_unknown_method():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["correlate", "--method", "kendall"])


# Historical extracts: brescia_env.csv, milano_env.csv and the province cases.csv.

@pytest.mark.skipif(not os.environ.get("LAGCORR_PAPER_DATA_DIR"), reason="historical extracts not available")
def test_historical_extracts(tmp_path):
    data_dir = Path(os.environ["LAGCORR_PAPER_DATA_DIR"])
    out_dir = tmp_path / "out"
    assert run(ingest_args(data_dir, out_dir, "brescia,milano")) == 0
    assert run(["correlate", "--out-dir", str(out_dir)]) == 0

    curve = json.loads((out_dir / "curves" / "brescia_temp_median_curve.json").read_text())
    assert abs(curve["peak"]["lag"] - 10) <= 2
    assert abs(abs(curve["peak"]["r"]) - 0.7799) <= 0.05

    assert run([
        "train", "--out-dir", str(out_dir), "--districts", "milano", "--models", "forest", "--lags", "10",
    ]) == 0
    report = json.loads((out_dir / "reports" / "milano_forest_lag10.json").read_text())
    assert 0.65 <= report["cv_mean"] <= 0.80
