import asyncio
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, TypeVar

import numpy as np

from src.backend.assistant import make_assistant
from src.backend.classes import EpisodeTrace, IntentKind, Task, WorldGraph
from src.backend.intention_env import Executor, IntentionEnv
from src.backend.world import FrequencyTable
from src.clients.agents import IntentionAgent, LearnedIntentionAgent
from src.config import EnvConfig
from src.harness.traces import TraceRecorder

logger = logging.getLogger("intention_nav")

T = TypeVar("T")


@dataclass
class Rollout:
    trace: EpisodeTrace
    # actor inputs, filled for learned agents only
    inputs: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    prev_actions: List[int] = field(default_factory=list)
    masks: np.ndarray = field(default_factory=lambda: np.zeros((0, 5), dtype=bool))
    actions: List[int] = field(default_factory=list)
    forced: List[bool] = field(default_factory=list)

    @property
    def shaped_costs(self) -> np.ndarray:
        return np.array([step.shaped_cost for step in self.trace.steps])

    @property
    def raw_costs(self) -> np.ndarray:
        return np.array([step.raw_cost for step in self.trace.steps])


def episode_rng(seed: int, iteration: int, index: int, stream: int = 0) -> np.random.Generator:
    """Per-episode generator; `stream` separates training, critic pre-training and validation draws."""
    return np.random.default_rng([seed, stream, iteration, index])


def budget_exhausted(env: IntentionEnv) -> bool:
    stack = env.state.stack
    if stack.depth < 2:
        return False
    budget = stack.top().budget
    return budget is not None and budget <= 0


def rollout_driver(
    env: IntentionEnv,
    agent: IntentionAgent,
    task: Task,
    rng: np.random.Generator,
    seed: int = 0,
    enforce_budget: bool = False,
) -> Rollout:
    """Runs one episode to termination. With `enforce_budget`, an exhausted subgoal gets a forced DONE."""
    recorder = TraceRecorder(env)
    env.reset(task, rng)
    agent.begin(env, rng)
    forced_steps = []
    while not env.state.terminated:
        forced = IntentKind.DONE if enforce_budget and budget_exhausted(env) else None
        action = agent.act(env.state, env, rng, forced)
        env.step(action, forced=forced is not None)
        forced_steps.append(forced is not None)

    rollout = Rollout(trace=recorder.trace(seed), forced=forced_steps)
    if isinstance(agent, LearnedIntentionAgent):
        rollout.inputs = np.array(agent.inputs)
        rollout.prev_actions = list(agent.prev_actions)
        rollout.masks = np.array(agent.masks)
        rollout.actions = list(agent.actions)
    return rollout


def run_episode(
    world: WorldGraph,
    task: Task,
    executor: Executor,
    agent: IntentionAgent,
    env_cfg: EnvConfig,
    freq: Optional[FrequencyTable],
    rng: np.random.Generator,
    seed: int = 0,
    enforce_budget: bool = False,
) -> Rollout:
    env = IntentionEnv(world, make_assistant(world, env_cfg.cooperative, env_cfg.l_max), executor, env_cfg, freq)
    return rollout_driver(env, agent, task, rng, seed, enforce_budget)


class RolloutPool:
    """Runs independent episode jobs on worker threads; results come back in job order."""

    def __init__(self, num_workers: int = 4):
        self.num_workers = num_workers

    async def run(self, jobs: Sequence[Callable[[], T]]) -> List[T]:
        semaphore = asyncio.Semaphore(self.num_workers)

        async def bounded(job):
            async with semaphore:
                return await asyncio.to_thread(job)

        return list(await asyncio.gather(*(bounded(job) for job in jobs)))

    def map(self, jobs: Sequence[Callable[[], T]]) -> List[T]:
        if self.num_workers <= 1:
            return [job() for job in jobs]
        return asyncio.run(self.run(jobs))
