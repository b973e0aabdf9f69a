import csv

import numpy as np
import pytest

from src.backend.classes import EpisodeTrace, IntentKind, StepRecord
from src.backend.datasets import write_worlds
from src.backend.errors import CheckpointError, SchemaError, SplitError, WorldGenerationError
from src.clients.agents import NoAssistAgent
from src.clients.execution import ExecutionPolicy, OracleExecutor
from src.clients.intention import IntentionActor, input_dim
from src.clients.nn import Vocabulary
from src.config import EnvConfig, EvalConfig
from src.harness.evaluation import TEST_CONDITIONS, PolicySpec, load_policy, run_eval, run_skyline
from src.harness.experiments import study_columns, study_row
from src.harness.metrics import (
    METRICS_COLUMNS,
    ConditionStats,
    MetricsReport,
    action_over_time,
    bootstrap_ci,
    directional_check,
    merge_reports,
    normalize_bins,
    time_bin,
)
from src.harness.traces import read_trace, recompute_success, write_trace
from src.harness.workspace import Workspace
from src.training.rollouts import run_episode
from src.training.tuning import mean_counts, tune_budget_baseline, within


def make_trace(actions, success, seed=0, raw=1.0):
    steps = [
        StepRecord(t=t + 1, action=a, exec_node=0, stack_depth=1, raw_cost=raw / len(actions), shaped_cost=0.0)
        for t, a in enumerate(actions)
    ]
    return EpisodeTrace(
        task_id="t", world_id="w", seed=seed, start=0, goal=0, steps=steps, final_node=0, success=success, total_raw=raw
    )


@pytest.fixture
def traces():
    return [
        make_trace([IntentKind.CUR, IntentKind.DO, IntentKind.DO, IntentKind.DONE], True, seed=0),
        make_trace([IntentKind.SUB, IntentKind.DO, IntentKind.DONE, IntentKind.DONE], False, seed=1),
        make_trace([IntentKind.GOAL, IntentKind.DONE], True, seed=1, raw=3.0),
    ]


def test_time_bins():
    assert [time_bin(t, 4, 2) for t in (1, 2, 3, 4)] == [0, 0, 1, 1]
    assert time_bin(10, 10, 10) == 9
    with pytest.raises(ValueError):
        action_over_time([], bins=0)


def test_action_over_time(traces):
    table = action_over_time(traces[:1], bins=2)
    assert table[IntentKind.CUR] == [1, 0]
    assert table[IntentKind.DO] == [1, 1]
    assert table[IntentKind.DONE] == [0, 1]
    assert normalize_bins(table)[IntentKind.DO] == [0.5, 0.5]
    assert normalize_bins(table)[IntentKind.SUB] == [0.0, 0.0]


def test_condition_row(traces):
    report = MetricsReport(policy="p", bins=2)
    for trace in traces:
        report.add("test_unseen_env", trace)
    row = report.rows()[0]
    assert list(row) == list(METRICS_COLUMNS)
    assert row["episodes"] == 3
    assert row["success_rate"] == pytest.approx(2 / 3, abs=1e-6)
    assert row["success_min"] == 0.5
    assert row["success_max"] == 1.0
    assert row["mean_DONE"] == pytest.approx(4 / 3, abs=1e-6)
    assert row["mean_raw_cost"] == pytest.approx(5 / 3, abs=1e-6)
    assert row["mean_steps"] == pytest.approx(10 / 3, abs=1e-6)


def test_merge_is_associative(traces):
    parts = []
    for trace in traces:
        report = MetricsReport(policy="p", bins=3)
        report.add("val_unseen_obj", trace)
        parts.append(report)
    left = parts[0].merge(parts[1]).merge(parts[2])
    right = parts[0].merge(parts[1].merge(parts[2]))
    assert left.model_dump() == right.model_dump()

    whole = MetricsReport(policy="p", bins=3)
    for trace in traces:
        whole.add("val_unseen_obj", trace)
    assert merge_reports(parts).model_dump() == whole.model_dump()


def test_merge_rejects_different_bins():
    with pytest.raises(ValueError):
        MetricsReport(bins=2).merge(MetricsReport(bins=3))


def test_empty_condition_stats():
    stats = ConditionStats()
    assert stats.success_rate == 0.0
    assert stats.row("p", "c")["success_min"] == 0.0


def test_write_csv(tmp_path, traces):
    report = MetricsReport(policy="p", bins=2)
    report.add("test_unseen_str", traces[0])
    path = tmp_path / "eval.csv"
    report.write_csv(path)
    report.write_csv(path, append=True)
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        assert tuple(reader.fieldnames) == METRICS_COLUMNS
        rows = list(reader)
    assert len(rows) == 2
    assert rows[0]["condition"] == "test_unseen_str"


def test_bootstrap_ci():
    assert bootstrap_ci([1.0, 1.0, 1.0]) == (1.0, 1.0, 1.0)
    assert bootstrap_ci([]) == (0.0, 0.0, 0.0)
    values = np.random.default_rng(0).random(50)
    mean, low, high = bootstrap_ci(values, resamples=500, seed=1)
    assert low <= mean <= high
    assert bootstrap_ci(values, resamples=500, seed=1) == (mean, low, high)


def test_directional_check():
    check = directional_check("a_vs_b", [1, 1, 1, 0], [0, 0, 1, 0], factor=2.0, resamples=200)
    assert check.passed
    assert check.a == 0.75 and check.b == 0.25
    assert check.low <= 0.25 <= check.high
    assert not directional_check("b_vs_a", [0, 0, 1, 0], [1, 1, 1, 0]).passed


def test_trace_file(tmp_path, world, task):
    trace = run_episode(
        world, task, OracleExecutor(8), NoAssistAgent(), EnvConfig(perception="dense"), None, np.random.default_rng(0), 4
    ).trace
    path = tmp_path / "trace.jsonl.gz"
    write_trace(path, trace)
    loaded = read_trace(path)
    assert loaded == trace
    assert loaded.seed == 4
    assert recompute_success(loaded) == trace.success


def test_recompute_success_needs_main_goal_done():
    assert not recompute_success(make_trace([IntentKind.DO], True))
    assert recompute_success(make_trace([IntentKind.DO, IntentKind.DONE], False))
    assert not recompute_success(make_trace([], True))


def test_read_trace_rejects_other_files(tmp_path, corpus):
    write_worlds(tmp_path / "worlds.jsonl", corpus[:1])
    with pytest.raises(SchemaError):
        read_trace(tmp_path / "worlds.jsonl")


def test_oracle_evaluation(tmp_path, splits, world_map, freq):
    spec = PolicySpec(name="oracle", executor="oracle", intention="oracle")
    eval_cfg = EvalConfig(seeds=[0, 1], num_workers=2)
    report, traces = run_eval(spec, splits, world_map, EnvConfig(), eval_cfg, TEST_CONDITIONS, freq, tmp_path)
    for condition in TEST_CONDITIONS:
        stats = report.conditions[condition]
        assert stats.episodes == 2 * len(splits.tasks(condition))
        assert stats.success_rate == 1.0
        assert stats.mean_actions()[IntentKind.DONE] == 1.0
        assert stats.seed_rates() == [1.0, 1.0]
        assert len(list((tmp_path / condition).glob("*.jsonl"))) == stats.episodes
        assert all(trace.success for trace in traces[condition])


def test_load_policy_needs_checkpoints():
    with pytest.raises(CheckpointError):
        load_policy(PolicySpec(executor="learned", intention="no_assist"))
    with pytest.raises(CheckpointError):
        load_policy(PolicySpec(executor="oracle", intention="learned"))
    assert load_policy(PolicySpec(executor="oracle", intention="dense_cur")).actor is None


def test_policy_spec():
    assert PolicySpec(intention="dense_goal", executor="oracle").label == "dense_goal+oracle"
    env = PolicySpec(cooperative=False, stack_size=3).env_config(EnvConfig())
    assert not env.cooperative and env.stack_size == 3


def test_workspace_paths_and_errors(tmp_path):
    ws = Workspace(tmp_path)
    assert ws.actor().name == "actor.npz"
    assert ws.actor("cost0.1").name == "actor_cost0.1.npz"
    assert ws.metrics("a2c").name == "a2c_metrics.jsonl"
    assert ws.traces("learned", "test_unseen_env") == tmp_path / "traces" / "learned" / "test_unseen_env"
    with pytest.raises(WorldGenerationError):
        ws.load_worlds()
    with pytest.raises(SplitError):
        ws.load_splits([])
    with pytest.raises(CheckpointError):
        ws.load_exec_policy()


def test_study_row_matches_columns(traces):
    report = MetricsReport(policy="p", bins=2)
    report.add("test_unseen_env", traces[0])
    row = study_row("cost", 0.1, report, ["test_unseen_env"])
    assert list(row) == study_columns("cost", ["test_unseen_env"])
    assert row["success_test_unseen_env"] == 1.0


def test_budget_tuning_reaches_targets():
    targets = {IntentKind.CUR: 1.0, IntentKind.DO: 3.0}

    def half(budgets):
        return {kind: 0.5 * value for kind, value in budgets.items()}

    budgets, realized = tune_budget_baseline(targets, half, tolerance=0.05)
    assert within(realized, {IntentKind.CUR: 1.0, IntentKind.DO: 3.0}, 0.05)
    assert budgets[IntentKind.CUR] == pytest.approx(2.0)
    assert budgets[IntentKind.DO] == pytest.approx(6.0)


def test_mean_counts(world, task):
    rollouts = [
        run_episode(world, task, OracleExecutor(8), NoAssistAgent(), EnvConfig(perception="dense"), None, np.random.default_rng(0))
        for _ in range(2)
    ]
    counts = mean_counts(rollouts)
    assert counts[IntentKind.DO] == task.path_length
    assert counts[IntentKind.DONE] == 1.0


def test_skyline_evaluation(tmp_path, splits, world_map, freq):
    ExecutionPolicy(Vocabulary.default(), hidden=8, seed=0).save(tmp_path / "exec_policy.npz")
    IntentionActor(input_dim(8), hidden=8, action_embedding=4, seed=0).save(tmp_path / "actor.npz")
    spec = PolicySpec(actor_checkpoint=tmp_path / "actor.npz", exec_checkpoint=tmp_path / "exec_policy.npz")
    env_cfg = EnvConfig()
    report, traces = run_skyline(
        spec, splits, world_map, env_cfg, EvalConfig(seeds=[0], num_workers=1), ["val_unseen_obj"], freq
    )
    assert report.policy == "skyline"
    assert report.conditions["val_unseen_obj"].episodes == len(splits.val_unseen_obj)
    assert all(len(trace.steps) <= env_cfg.costs.H for trace in traces["val_unseen_obj"])
