import json
import subprocess
import sys

import pytest

from ttql.harness.cli import main

TINY = 'experiment_name = "cli"\nregime = "no_transfer"\nscale = 0.01\ngamma = 0.9\nlearning_rate = 1e-3\nhidden_sizes = [16, 16]\n'


def run_cli(capsys, *argv):
    try:
        code = main(list(argv))
    except SystemExit as exc:
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


def error_of(err):
    lines = err.strip().splitlines()
    assert len(lines) == 1
    return json.loads(lines[0])


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text(TINY)
    return p


def test_oracle_prints_table(capsys):
    code, out, _ = run_cli(capsys, "oracle", "--grid", "grid5x5", "--gamma", "0.9")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "25 4" and len(lines) == 26


def test_bad_gamma_is_one_json_line(capsys, config, tmp_path):
    config.write_text(TINY.replace("gamma = 0.9", "gamma = 1.5"))
    code, _, err = run_cli(capsys, "run", "--config", str(config), "--out", str(tmp_path / "o"))
    assert code == 1
    e = error_of(err)
    assert e["error"] == "ConfigError" and e["key"] == "gamma"
    assert not (tmp_path / "o").exists()


def test_negative_seed_rejected(capsys, config, tmp_path):
    code, _, err = run_cli(capsys, "run", "--config", str(config), "--seed", "-1", "--out", str(tmp_path / "o"))
    assert code == 1 and error_of(err)["key"] == "seed"


def test_strict_flag_controls_unknown_keys(capsys, config, tmp_path):
    config.write_text(TINY + "colour = 3\n")
    code, _, err = run_cli(capsys, "--strict", "oracle", "--grid", "grid5x5", "--gamma", "0.9")
    assert code == 0
    code, _, err = run_cli(capsys, "--strict", "run", "--config", str(config), "--out", str(tmp_path / "o"))
    assert code == 1 and error_of(err)["key"] == "colour"


def test_usage_errors(capsys):
    code, _, err = run_cli(capsys, "launch")
    assert code == 2 and error_of(err)["error"] == "UsageError"
    code, _, err = run_cli(capsys, "oracle", "--grid", "grid5x5")
    assert code == 2 and error_of(err)["error"] == "UsageError"


def test_missing_inputs(capsys, tmp_path):
    code, _, err = run_cli(capsys, "run", "--config", str(tmp_path / "none.toml"), "--out", str(tmp_path / "o"))
    assert code == 1 and error_of(err)["error"] == "ConfigError"
    code, _, err = run_cli(capsys, "chart", "--runs", str(tmp_path), "--out", str(tmp_path / "c"))
    assert code == 1 and error_of(err)["error"] == "FileNotFoundError"
    code, _, err = run_cli(capsys, "compare", "--runs", str(tmp_path), "--out", str(tmp_path / "s"))
    assert code == 1
    code, _, err = run_cli(capsys, "oracle", "--grid", str(tmp_path / "g.toml"), "--gamma", "0.9")
    assert code == 1
    code, _, err = run_cli(capsys, "oracle", "--grid", "grid5x5", "--gamma", "1.0")
    assert code == 1


def test_run_compare_chart_pipeline(capsys, config, tmp_path):
    runs = tmp_path / "runs"
    for seed in ("0", "1"):
        code, out, _ = run_cli(capsys, "run", "--config", str(config), "--seed", seed, "--out", str(runs / seed))
        assert code == 0 and out.strip() == str(runs / seed)
    code, out, _ = run_cli(capsys, "compare", "--runs", str(runs), "--out", str(tmp_path / "summary"))
    assert code == 0 and "cli-no_transfer-seed1" in out
    assert (tmp_path / "summary.csv").is_file() and (tmp_path / "summary.txt").read_text() == out
    code, out, _ = run_cli(capsys, "chart", "--runs", str(runs), "--out", str(tmp_path / "fig"))
    assert code == 0 and len(out.splitlines()) == 2
    assert (tmp_path / "fig_reward.svg").is_file() and (tmp_path / "fig_transfers.svg").is_file()


def test_train_source_then_reuse(capsys, config, tmp_path):
    config.write_text(TINY.replace("no_transfer", "ttql"))
    code, _, _ = run_cli(capsys, "train-source", "--config", str(config), "--out", str(tmp_path / "src"))
    assert code == 0 and (tmp_path / "src" / "source.ttqlnet").is_file()
    assert len(list((tmp_path / "source_cache").iterdir())) == 1
    code, _, _ = run_cli(capsys, "run", "--config", str(config), "--out", str(tmp_path / "t"),
                         "--source", str(tmp_path / "src" / "source.ttqlnet"))
    assert code == 0 and (tmp_path / "t" / "ticks.csv").is_file()


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "ttql.harness.cli", "oracle", "--grid", "grid5x5", "--gamma", "2"],
                         capture_output=True, text=True)
    assert res.returncode == 1
    assert json.loads(res.stderr)["error"] == "ParameterError"
