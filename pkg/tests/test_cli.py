import json
import subprocess
import sys

import pandas as pd
import pytest

from taskauto import cli
from taskauto.pipeline import OUTPUT_COLUMNS


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert cli.main(["synth", "fixture", "--rows", "12", "--invalid", "2", "--missing-wage", "1",
                     "--seed", "3", "--out", str(out)]) == 0
    return out


def test_synth_fixture_files(fixture_dir):
    for name in ("survey.csv", "complexity.csv", "wages.csv"):
        assert (fixture_dir / name).exists()


def test_optimize_writes_outputs(fixture_dir, tmp_path, capsys):
    assert cli.main(["optimize", "--data", str(fixture_dir), "--out", str(tmp_path)]) == 0
    df = pd.read_csv(tmp_path / "decisions.csv")
    assert list(df.columns) == list(OUTPUT_COLUMNS)
    assert len(df) == 13
    assert len(pd.read_csv(tmp_path / "rejections.csv")) == 2
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["input_rows"] == 15 and summary["missing_wage_rows"] == 1
    assert "automation rate" in capsys.readouterr().out


def test_optimize_pooled_and_scale(fixture_dir, tmp_path):
    assert cli.main(["optimize", "--data", str(fixture_dir), "--deployment", "pooled", "--scale", "10",
                     "--pooling-key", "occupation_task_naics", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["deployment"] == "pooled" and summary["employee_scale"] == 10.0


def test_aggregate_round_trip(fixture_dir, tmp_path):
    cli.main(["optimize", "--data", str(fixture_dir), "--out", str(tmp_path)])
    first = json.loads((tmp_path / "summary.json").read_text())
    agg = tmp_path / "agg"
    assert cli.main(["aggregate", "--decisions", str(tmp_path / "decisions.csv"), "--out", str(agg)]) == 0
    again = json.loads((agg / "summary.json").read_text())
    # decisions.csv keeps ten significant digits
    assert again["automation_rate"] == pytest.approx(first["automation_rate"], rel=1e-9)
    assert (agg / "occupations.csv").exists()


def test_aggregate_rejects_bad_file(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("soc_code\n11-1011\n", encoding="utf-8")
    assert cli.main(["aggregate", "--decisions", str(bad), "--out", str(tmp_path)]) == 2


def test_missing_data_dir_is_input_error(tmp_path):
    assert cli.main(["optimize", "--data", str(tmp_path / "nope"), "--out", str(tmp_path)]) == 2


def test_bad_config_is_input_error(fixture_dir, tmp_path):
    cfg = tmp_path / "run.kv"
    cfg.write_text("not_a_key = 1\n", encoding="utf-8")
    assert cli.main(["optimize", "--data", str(fixture_dir), "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_coeffs_and_elasticity(tmp_path, capsys):
    assert cli.main(["coeffs", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "coefficients.json").read_text())
    assert report["c_F_recomputed"] == pytest.approx(3_486_090, rel=1e-3)
    assert cli.main(["elasticity", "--out", str(tmp_path)]) == 0
    assert len(pd.read_csv(tmp_path / "elasticities.csv")) == 56
    assert "closest convention" in capsys.readouterr().out


def test_synth_experiments_and_fit_failure(tmp_path):
    assert cli.main(["synth", "experiments", "--replicates", "2", "--out", str(tmp_path)]) == 0
    obs = pd.read_csv(tmp_path / "observations.csv")
    assert len(obs) == 160
    cfg = tmp_path / "few.csv"
    obs.head(5).to_csv(cfg, index=False)
    # five observations cannot identify the law
    assert cli.main(["fit", "--observations", str(cfg), "--restarts", "2", "--out", str(tmp_path)]) in (2, 3)


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "taskauto.cli", "coeffs"], capture_output=True, text=True)
    assert proc.returncode == 0 and "c_F" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "taskauto.cli", "optimize"], capture_output=True, text=True)
    assert proc.returncode == 2  # argparse usage error
