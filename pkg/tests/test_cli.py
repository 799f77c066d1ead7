import json

from credscore.cli import main
from credscore.ingest import AGENCIES
from synth import write_run_files


def test_run_all_then_report(tmp_path, capsys):
    path, _ = write_run_files(tmp_path, agencies=AGENCIES[:1], firms=30, presets=["depthwise"], trials=2)
    assert main(["run-all", "--config", str(path)]) == 0
    out = tmp_path / "out"
    assert (out / "manifest.json").is_file()
    assert (out / "report" / "classification_table.csv").is_file()
    assert (out / "report" / "regression_table.csv").is_file()
    assert main(["report", "--out", str(out)]) == 0
    assert "report files" in capsys.readouterr().out


def test_overrides_reach_manifest(tmp_path):
    path, _ = write_run_files(tmp_path, agencies=AGENCIES[:1], firms=20)
    out = tmp_path / "elsewhere"
    assert main(["plan-folds", "--config", str(path), "--seed", "11", "--trials", "4", "--target", "binary", "--out", str(out)]) == 0
    cfg = json.loads((out / "manifest.json").read_text())["config"]
    assert (cfg["seed"], cfg["trials"], cfg["target"]) == (11, 4, "binary")


def test_absent_agency_exits_one(tmp_path, capsys):
    path, _ = write_run_files(tmp_path, agencies=AGENCIES[:1], firms=20)
    code = main(["plan-folds", "--config", str(path), "--agency", AGENCIES[0], "--agency", AGENCIES[3]])
    assert code == 1
    assert f"{AGENCIES[3]}: no data" in capsys.readouterr().out


def test_config_errors_exit_two(tmp_path, capsys):
    assert main(["plan-folds", "--config", str(tmp_path / "missing.json")]) == 2
    path, data = write_run_files(tmp_path, agencies=AGENCIES[:1], firms=20)
    data.unlink()
    assert main(["plan-folds", "--config", str(path)]) == 2
    assert main(["report", "--out", str(tmp_path / "nothing")]) == 2
    assert "error:" in capsys.readouterr().err


def test_report_on_partial_run_exits_two(tmp_path, capsys):
    path, _ = write_run_files(tmp_path, agencies=AGENCIES[:1], firms=20)
    assert main(["plan-folds", "--config", str(path)]) == 0
    assert main(["report", "--out", str(tmp_path / "out")]) == 2
    assert "stage 'tune' missing" in capsys.readouterr().err


def test_ingest_and_summarize(tmp_path, capsys):
    path, _ = write_run_files(tmp_path, agencies=AGENCIES[:2], firms=10)
    assert main(["ingest", "--config", str(path)]) == 0
    doc = json.loads((tmp_path / "out" / "ingest.json").read_text())
    assert doc["n_rows"] == 2 * 10 * 5 and set(doc["agencies"]) == set(AGENCIES[:2])
    assert main(["summarize", "--config", str(path)]) == 0
    assert (tmp_path / "out" / "summary.json").is_file()
    assert "Total observations" in (tmp_path / "out" / "summary.txt").read_text()
