from pathlib import Path

import pytest
from typer.testing import CliRunner

from app import app, main

SMOKE = str(Path(__file__).resolve().parents[1] / "configs" / "smoke.yaml")

runner = CliRunner()


def invoke(*args):
    return runner.invoke(app, list(args))


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert invoke("gen-world", "--config", SMOKE, "--out", str(out)).exit_code == 0
    assert invoke("make-splits", "--config", SMOKE, "--out", str(out)).exit_code == 0
    return out


def test_gen_world_outputs(workspace):
    for name in ("worlds.jsonl", "frequencies.txt", "config.yaml", "splits.jsonl"):
        assert (workspace / name).exists()


def test_gen_world_is_deterministic(tmp_path, workspace):
    result = invoke("gen-world", "--config", SMOKE, "--out", str(tmp_path))
    assert result.exit_code == 0
    assert (tmp_path / "worlds.jsonl").read_bytes() == (workspace / "worlds.jsonl").read_bytes()
    assert (tmp_path / "frequencies.txt").read_text() == (workspace / "frequencies.txt").read_text()


def test_seed_changes_worlds(tmp_path, workspace):
    assert invoke("gen-world", "--config", SMOKE, "--seed", "1", "--out", str(tmp_path)).exit_code == 0
    assert (tmp_path / "worlds.jsonl").read_bytes() != (workspace / "worlds.jsonl").read_bytes()


def test_oracle_eval_and_trace_dump(workspace):
    result = invoke("eval", "--config", SMOKE, "--out", str(workspace), "--policy", "oracle", "--split", "test")
    assert result.exit_code == 0, result.output
    assert (workspace / "eval_oracle.csv").exists()
    header = (workspace / "eval_oracle.csv").read_text().splitlines()[0]
    assert header.startswith("policy,condition,episodes,success_rate,success_min,success_max,mean_CUR")

    traces = sorted((workspace / "traces" / "oracle" / "test_unseen_env").glob("*.jsonl"))
    assert traces
    dumped = invoke("trace-dump", str(traces[0]))
    assert dumped.exit_code == 0
    assert "success True (recomputed True)" in dumped.output


def test_missing_inputs_exit_one(tmp_path):
    result = invoke("make-splits", "--out", str(tmp_path))
    assert result.exit_code == 1
    assert "error:" in result.output
    result = invoke("pretrain", "--out", str(tmp_path))
    assert result.exit_code == 1


def test_bad_split_is_usage_error(workspace):
    result = invoke("eval", "--config", SMOKE, "--out", str(workspace), "--policy", "oracle", "--split", "nowhere")
    assert result.exit_code == 2


def test_unknown_command():
    assert invoke("fly").exit_code == 2


def test_grad_check_passes():
    result = invoke("grad-check", "--samples", "16")
    assert result.exit_code == 0, result.output
    assert "max relative error" in result.output


def test_main_exit_codes(tmp_path):
    assert main(["fly"]) == 2
    assert main(["make-splits", "--out", str(tmp_path)]) == 1
