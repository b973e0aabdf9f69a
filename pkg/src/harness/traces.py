import logging
from typing import Dict, List, Optional

from src.backend.classes import EpisodeTrace, IntentKind, StepRecord, Task
from src.backend.errors import SchemaError
from src.backend.intention_env import IntentionEnv
from src.backend.records import PathLike, read_jsonl, write_jsonl

logger = logging.getLogger("intention_nav")

STEP_FIELDS = ("t", "action", "exec_node", "stack_depth", "raw_cost", "shaped_cost", "reply_kind", "answered", "forced")


def recompute_success(trace: EpisodeTrace) -> bool:
    """DONE on the main goal, standing on the goal node."""
    if not trace.steps:
        return False
    last = trace.steps[-1]
    return last.action == IntentKind.DONE and last.stack_depth == 1 and trace.final_node == trace.goal


class TraceRecorder:
    """Listens to an IntentionEnv and rebuilds the EpisodeTrace of its current episode."""

    def __init__(self, env: IntentionEnv):
        self.env = env
        self.task: Optional[Task] = None
        self.steps: List[StepRecord] = []
        self.final_node = -1
        self.initial_potential = 0.0
        env.add_event_listener("episode_started", self.on_episode_started)
        env.add_event_listener("step", self.on_step)
        env.add_event_listener("episode_ended", self.on_episode_ended)

    def on_episode_started(self, data: Dict):
        self.task = data["task"]
        self.steps = []
        self.final_node = data["state"].exec_node
        self.initial_potential = self.env.potential(data["state"])

    def on_step(self, data: Dict):
        state, outcome = data["state"], data["outcome"]
        self.steps.append(
            StepRecord(
                t=state.t,
                action=data["action"],
                exec_node=outcome.next_state.exec_node,
                stack_depth=state.stack.depth,
                raw_cost=outcome.raw_cost,
                shaped_cost=outcome.shaped_cost,
                reply_kind=outcome.reply.kind if outcome.reply is not None else None,
                answered=outcome.answered,
                forced=data.get("forced", False),
            )
        )
        self.final_node = outcome.next_state.exec_node

    def on_episode_ended(self, data: Dict):
        self.final_node = data["state"].exec_node

    def trace(self, seed: int = 0) -> EpisodeTrace:
        trace = EpisodeTrace(
            task_id=self.task.task_id,
            world_id=self.task.world,
            seed=seed,
            start=self.task.start,
            goal=self.task.goal,
            steps=list(self.steps),
            final_node=self.final_node,
            total_raw=sum(s.raw_cost for s in self.steps),
            total_shaped=sum(s.shaped_cost for s in self.steps),
            initial_potential=self.initial_potential,
        )
        trace.success = recompute_success(trace)
        return trace


def write_trace(path: PathLike, trace: EpisodeTrace) -> None:
    header = trace.model_dump(mode="json", exclude={"steps"})
    write_jsonl(path, "trace", [step.model_dump(mode="json") for step in trace.steps], header)


def read_trace(path: PathLike) -> EpisodeTrace:
    header, records = read_jsonl(path, "trace")
    header = {key: value for key, value in header.items() if key not in ("kind", "schema_version")}
    try:
        return EpisodeTrace(steps=[StepRecord.model_validate(record) for record in records], **header)
    except (TypeError, ValueError) as e:
        raise SchemaError(f"Trace not read, {path} is malformed: {e}")
