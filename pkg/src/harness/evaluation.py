import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Literal, Mapping, Optional, Sequence, Tuple

from pydantic import BaseModel
from tqdm import tqdm

from src.backend.classes import DatasetSplits, EpisodeTrace, IntentKind, Task, WorldGraph
from src.backend.errors import CheckpointError
from src.backend.world import FrequencyTable
from src.clients.agents import IntentionAgent, LearnedIntentionAgent, make_baseline
from src.clients.execution import ExecutionPolicy, make_executor
from src.clients.intention import IntentionActor
from src.config import EnvConfig, EvalConfig
from src.training.rollouts import RolloutPool, episode_rng, run_episode

from .metrics import ConditionStats, MetricsReport
from .traces import write_trace

logger = logging.getLogger("intention_nav")

EVAL_STREAM = 3
VAL_CONDITIONS: Tuple[str, ...] = ("val_unseen_str", "val_unseen_obj", "val_unseen_env")
TEST_CONDITIONS: Tuple[str, ...] = ("test_unseen_str", "test_unseen_obj", "test_unseen_env")


class PolicySpec(BaseModel):
    """An evaluated agent: an executor, an intention policy and the assistant it talks to."""

    name: str = ""
    executor: Literal["learned", "oracle", "skyline"] = "learned"
    # learned, oracle (the no-assistance rule) or a baseline kind
    intention: str = "learned"
    exec_checkpoint: Optional[Path] = None
    actor_checkpoint: Optional[Path] = None
    budgets: Optional[Dict[IntentKind, float]] = None
    cooperative: bool = True
    stack_size: Optional[int] = None

    @property
    def label(self) -> str:
        return self.name or f"{self.intention}+{self.executor}"

    def env_config(self, env_cfg: EnvConfig) -> EnvConfig:
        update = {"cooperative": self.cooperative}
        if self.stack_size is not None:
            update["stack_size"] = self.stack_size
        return env_cfg.model_copy(update=update)


@dataclass
class LoadedPolicy:
    spec: PolicySpec
    exec_policy: Optional[ExecutionPolicy] = None
    actor: Optional[IntentionActor] = None
    stack_features: bool = True


def load_policy(
    spec: PolicySpec, exec_policy: Optional[ExecutionPolicy] = None, actor: Optional[IntentionActor] = None
) -> LoadedPolicy:
    """Loads whatever checkpoints this policy needs that were not passed in."""
    stack_features = True
    if exec_policy is None and spec.executor != "oracle":
        if spec.exec_checkpoint is None:
            raise CheckpointError(f"Policy {spec.label} not loaded, executor {spec.executor} needs a checkpoint")
        exec_policy, _, _ = ExecutionPolicy.load(spec.exec_checkpoint)
    if spec.intention == "learned" and actor is None:
        if spec.actor_checkpoint is None:
            raise CheckpointError(f"Policy {spec.label} not loaded, the learned intention policy needs a checkpoint")
        actor, manifest, _ = IntentionActor.load(spec.actor_checkpoint)
        stack_features = manifest.get("stack_features", True)
    return LoadedPolicy(spec=spec, exec_policy=exec_policy, actor=actor, stack_features=stack_features)


def make_agent(policy: LoadedPolicy, horizon: int) -> IntentionAgent:
    spec = policy.spec
    if spec.intention == "learned":
        return LearnedIntentionAgent(policy.actor, horizon, greedy=True, stack_features=policy.stack_features)
    return make_baseline(spec.intention, spec.budgets)


def trace_path(trace_dir: Path, trace: EpisodeTrace, gzip_traces: bool) -> Path:
    return trace_dir / f"{trace.task_id}.s{trace.seed}.jsonl{'.gz' if gzip_traces else ''}"


def evaluate_tasks(
    policy: LoadedPolicy,
    condition: str,
    tasks: Sequence[Task],
    worlds: Mapping[str, WorldGraph],
    env_cfg: EnvConfig,
    eval_cfg: EvalConfig,
    freq: Optional[FrequencyTable] = None,
    trace_dir: Optional[Path] = None,
) -> Tuple[MetricsReport, List[EpisodeTrace]]:
    """Every task once per evaluation seed, argmax intention actions, no subgoal budget enforcement."""
    spec = policy.spec
    env_cfg = spec.env_config(env_cfg)
    pool = RolloutPool(eval_cfg.num_workers)
    report = MetricsReport(policy=spec.label, bins=eval_cfg.bins)
    traces: List[EpisodeTrace] = []
    for seed in tqdm(eval_cfg.seeds, desc=condition, disable=not sys.stderr.isatty()):
        jobs = [
            (
                lambda task=task, index=j, seed=seed: run_episode(
                    worlds[task.world],
                    task,
                    make_executor(spec.executor, policy.exec_policy),
                    make_agent(policy, env_cfg.costs.H),
                    env_cfg,
                    freq,
                    episode_rng(seed, 0, index, EVAL_STREAM),
                    seed,
                )
            )
            for j, task in enumerate(tasks)
        ]
        for rollout in pool.map(jobs):
            report.add(condition, rollout.trace)
            traces.append(rollout.trace)
            if trace_dir is not None:
                write_trace(trace_path(trace_dir, rollout.trace, eval_cfg.gzip_traces), rollout.trace)
    report.conditions.setdefault(condition, ConditionStats())
    logger.info(f"{spec.label} on {condition}: success {report.success_rate(condition):.3f} over {len(traces)} episodes")
    return report, traces


def run_eval(
    spec: PolicySpec,
    splits: DatasetSplits,
    worlds: Mapping[str, WorldGraph],
    env_cfg: EnvConfig,
    eval_cfg: EvalConfig,
    conditions: Sequence[str] = TEST_CONDITIONS,
    freq: Optional[FrequencyTable] = None,
    trace_root: Optional[Path] = None,
    exec_policy: Optional[ExecutionPolicy] = None,
    actor: Optional[IntentionActor] = None,
) -> Tuple[MetricsReport, Dict[str, List[EpisodeTrace]]]:
    policy = load_policy(spec, exec_policy, actor)
    report = MetricsReport(policy=spec.label, bins=eval_cfg.bins)
    traces = {}
    for condition in conditions:
        trace_dir = trace_root / condition if trace_root is not None else None
        part, traces[condition] = evaluate_tasks(
            policy, condition, splits.tasks(condition), worlds, env_cfg, eval_cfg, freq, trace_dir
        )
        report = report.merge(part)
    return report, traces


def run_skyline(
    spec: PolicySpec,
    splits: DatasetSplits,
    worlds: Mapping[str, WorldGraph],
    env_cfg: EnvConfig,
    eval_cfg: EvalConfig,
    conditions: Sequence[str] = TEST_CONDITIONS,
    freq: Optional[FrequencyTable] = None,
    trace_root: Optional[Path] = None,
) -> Tuple[MetricsReport, Dict[str, List[EpisodeTrace]]]:
    """Subgoal legs executed by the shortest-path oracle; `spec` should hold an actor trained that way."""
    skyline = spec.model_copy(update={"executor": "skyline", "name": spec.name or "skyline"})
    return run_eval(skyline, splits, worlds, env_cfg, eval_cfg, conditions, freq, trace_root)
