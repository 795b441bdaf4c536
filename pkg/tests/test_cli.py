import json
import subprocess
import sys

import pytest

from pedcross.cli import main
from pedcross.csvio import write_trials
from pedcross.synthgen import GeneratorConfig, generate_dataset


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "data.csv"
    write_trials(generate_dataset(GeneratorConfig(n_pairs=6, seed=2)), path)
    return path


def test_help_lists_subcommands():
    out = subprocess.run([sys.executable, "-m", "pedcross", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("generate", "ingest", "train", "evaluate", "run", "ablate", "report"):
        assert cmd in out.stdout


def test_usage_error_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--data", "x.csv"])
    assert exc.value.code == 2


def test_generate_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["generate", "--seed", "7", "--out", str(a)]) == 0
    assert main(["generate", "--seed", "7", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) == 1281
    prov = json.loads((tmp_path / "a.csv.provenance.json").read_text())
    assert prov["command"] == "generate" and prov["resolved"]["generator"]["seed"] == 7


def test_generate_bad_config_names_field(tmp_path, capsys):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text("n_pairs = -4\n")
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "d.csv")]) == 2
    assert "n_pairs" in capsys.readouterr().err
    assert not (tmp_path / "d.csv").exists()


def test_ingest_well_formed_file(tmp_path, data_csv, capsys):
    out = tmp_path / "canon.csv"
    assert main(["ingest", "--data", str(data_csv), "--out", str(out), "--strict"]) == 0
    assert out.read_bytes() == data_csv.read_bytes()
    assert "0 rejected" in capsys.readouterr().out


def _corrupt(data_csv, tmp_path):
    lines = data_csv.read_text().splitlines()
    waiting = next(i for i, l in enumerate(lines) if i > 1 and l.endswith(",0,,"))
    lines[waiting] = lines[waiting][:-1] + "1.2,"
    lines[1] = lines[1].replace(",zebra,", ",roundabout,").replace(",non_zebra,", ",roundabout,")
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines) + "\n")
    return bad, waiting + 1


def test_ingest_reports_rejects_with_line_numbers(tmp_path, data_csv, capsys):
    bad, line = _corrupt(data_csv, tmp_path)
    assert main(["ingest", "--data", str(bad)]) == 0
    captured = capsys.readouterr()
    assert f"line {line}: cit present for waiting trial" in captured.err
    assert "line 2: location must be one of" in captured.err
    assert "2 rejected" in captured.out
    assert main(["ingest", "--data", str(bad), "--strict"]) == 1


def test_train_and_score_saved_model(tmp_path, data_csv, capsys):
    model = tmp_path / "m.json"
    matrix = tmp_path / "x.csv"
    assert main(["train", "--data", str(data_csv), "--task", "cd", "--model", "rf", "--features", "ours",
                 "--seed", "3", "--out", str(model), "--dump-matrix", str(matrix)]) == 0
    assert (tmp_path / "m.json.provenance.json").exists()
    assert matrix.read_text().splitlines()[0].startswith("row,T_a,T_w,L=zebra")
    capsys.readouterr()
    assert main(["evaluate", "--data", str(data_csv), "--model-file", str(model)]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["task"] == "cd" and set(result["metrics"]) == {"mae", "rmse"}


def test_evaluate_cross_validates_one_cell(tmp_path, data_csv):
    out = tmp_path / "r.json"
    assert main(["evaluate", "--data", str(data_csv), "--model", "svm", "--features", "subset4",
                 "--seed", "1", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["model"] == "svm" and rep["k"] == 5 and len(rep["per_fold"]) == 5


def test_svm_regression_is_a_config_error(data_csv, capsys):
    assert main(["evaluate", "--data", str(data_csv), "--task", "cit", "--model", "svm"]) == 2
    assert "svm" in capsys.readouterr().err


def test_corrupt_model_file_exits_2(tmp_path, data_csv):
    bad = tmp_path / "m.json"
    bad.write_text("{not json")
    assert main(["evaluate", "--data", str(data_csv), "--model-file", str(bad)]) == 2


def test_run_dry_run_writes_nothing(tmp_path, data_csv, capsys):
    out = tmp_path / "out"
    assert main(["run", "--data", str(data_csv), "--out", str(out), "--dry-run", "--no-ablation"]) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 11
    assert not out.exists()


def test_run_missing_data_exits_2(tmp_path):
    assert main(["run", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o")]) == 2


def test_run_with_bad_rows_exits_1(tmp_path, data_csv):
    bad, _ = _corrupt(data_csv, tmp_path)
    assert main(["run", "--data", str(bad), "--out", str(tmp_path / "o"), "--no-ablation"]) == 1


def test_run_plan_file_produces_eleven_reports(tmp_path, data_csv, capsys):
    plan = tmp_path / "paper_grid.toml"
    from importlib import resources

    text = resources.files("pedcross").joinpath("data/paper_grid.toml").read_text()
    plan.write_text(text.replace("ablation = true", "ablation = false"))
    out = tmp_path / "out"
    assert main(["run", "--plan", str(plan), "--data", str(data_csv), "--out", str(out), "--seed", "0"]) == 0
    assert len(list((out / "reports").glob("*.json"))) == 11
    prov = json.loads((out / "provenance.json").read_text())
    assert prov["resolved"]["plan"]["dataset"] == {"csv": str(data_csv)}
    capsys.readouterr()
    assert main(["report", "--dir", str(out)]) == 0
    text = capsys.readouterr().out
    assert "## decision_main" in text and "| mlp/ours |" in text


def test_report_without_tables_exits_2(tmp_path):
    assert main(["report", "--dir", str(tmp_path)]) == 2
