import logging
from typing import Any, Callable, Dict, List, Optional, Protocol, Set, Tuple

import numpy as np

from src.config import CostConfig, EnvConfig

from .assistant import Assistant
from .classes import (
    INTENT_KINDS,
    REQUEST_KINDS,
    AssistantReply,
    Description,
    DescriptionRole,
    ExecAction,
    FeatureSet,
    GoalEntry,
    GoalStack,
    IntentionObservation,
    IntentionState,
    IntentKind,
    StepOutcome,
    Task,
    WorldGraph,
)
from .errors import EpisodeTerminatedError, StackError, UnavailableActionError
from .world import FrequencyTable, action_feature, distance, exec_step, legal_actions, perceive, task_error

logger = logging.getLogger("intention_nav")


class Executor(Protocol):
    """The execution-policy side of an agent, as the intention environment drives it."""

    def reset(self, world: WorldGraph, state: IntentionState) -> None: ...

    def observe(self, desc: Description, prev_action: Optional[FeatureSet] = None) -> None: ...

    def distribution(self, state: IntentionState, legal: List[ExecAction]) -> np.ndarray: ...


def update_stack(
    stack: GoalStack, action: IntentKind, payload: Optional[Tuple[int, Description]] = None, budget: Optional[int] = None
) -> GoalStack:
    """GOAL replaces the top description, SUB pushes, DONE pops. Nothing else touches the stack."""
    if action == IntentKind.GOAL:
        if payload is None:
            raise StackError("Stack not updated, GOAL needs a goal description")
        top = stack.top()
        entry = top.model_copy(update={"desc": payload[1]})
        return stack.model_copy(update={"entries": stack.entries[:-1] + (entry,)})
    if action == IntentKind.SUB:
        if payload is None:
            raise StackError("Stack not updated, SUB needs a subgoal and its description")
        if stack.is_full:
            raise StackError(f"Stack not updated, SUB on a full stack (capacity {stack.capacity})")
        entry = GoalEntry(goal=payload[0], desc=payload[1], budget=budget, initial_budget=budget)
        return stack.model_copy(update={"entries": stack.entries + (entry,)})
    if action == IntentKind.DONE:
        if payload is not None:
            raise StackError("Stack not updated, DONE takes no payload")
        stack.top()
        return stack.model_copy(update={"entries": stack.entries[:-1]})
    raise StackError(f"Stack not updated, {action.value} does not alter the stack")


def spend_budget(stack: GoalStack) -> GoalStack:
    top = stack.top()
    if top.budget is None:
        return stack
    entry = top.model_copy(update={"budget": top.budget - 1})
    return stack.model_copy(update={"entries": stack.entries[:-1] + (entry,)})


def potential(world: WorldGraph, st: IntentionState) -> float:
    if st.terminated or not st.stack.entries:
        return 0.0
    return task_error(world, st.exec_node, st.stack.top().goal)


def raw_cost(world: WorldGraph, st: IntentionState, action: IntentKind, costs: CostConfig) -> float:
    if action == IntentKind.DONE:
        return task_error(world, st.exec_node, st.stack.top().goal) if st.stack.depth == 1 else 0.0
    return costs.gamma[action]


def available_actions(st: IntentionState) -> Set[IntentKind]:
    if st.terminated:
        return set()
    actions = set(INTENT_KINDS)
    if st.stack.is_full:
        actions.discard(IntentKind.SUB)
    return actions


def observation(st: IntentionState) -> IntentionObservation:
    return IntentionObservation(cur_desc=st.cur_desc, goal_descs=st.stack.descriptions(), t=st.t)


class IntentionEnv:
    def __init__(
        self,
        world: WorldGraph,
        assistant: Assistant,
        executor: Executor,
        cfg: Optional[EnvConfig] = None,
        freq: Optional[FrequencyTable] = None,
    ):
        self.world = world
        self.assistant = assistant
        self.executor = executor
        self.cfg = cfg or EnvConfig()
        self.freq = freq
        self.task: Optional[Task] = None
        self.state: Optional[IntentionState] = None
        self.rng = np.random.default_rng(0)
        self.event_listeners: Dict[str, List[Callable]] = {}

    def add_event_listener(self, event: str, callback: Callable):
        if event not in self.event_listeners:
            self.event_listeners[event] = []
        self.event_listeners[event].append(callback)

    def emit_event(self, event: str, data: Any):
        for callback in self.event_listeners.get(event, []):
            callback(data)

    @property
    def costs(self) -> CostConfig:
        return self.cfg.costs

    def perceive(self, node: int) -> Description:
        return perceive(
            self.world, node, DescriptionRole.CURRENT_STATE, self.cfg.perception, self.freq, self.cfg.top_k
        )

    def reset(self, task: Task, rng: Optional[np.random.Generator] = None) -> IntentionState:
        if task.world != self.world.id:
            raise ValueError(f"Episode not started, task {task.task_id} belongs to world {task.world}")
        if rng is not None:
            self.rng = rng
        self.task = task
        self.state = IntentionState(
            world=self.world.id,
            exec_node=task.start,
            cur_desc=self.perceive(task.start),
            stack=GoalStack(entries=(GoalEntry(goal=task.goal, desc=task.goal_desc),), capacity=self.cfg.stack_size),
        )
        self.executor.reset(self.world, self.state)
        self.executor.observe(self.state.cur_desc, None)
        self.emit_event("episode_started", {"task": task, "state": self.state})
        return self.state

    def available_actions(self, st: Optional[IntentionState] = None) -> Set[IntentKind]:
        return available_actions(st or self.state)

    def observe(self, st: Optional[IntentionState] = None) -> IntentionObservation:
        return observation(st or self.state)

    def potential(self, st: Optional[IntentionState] = None) -> float:
        return potential(self.world, st or self.state)

    def exec_distribution(self, st: Optional[IntentionState] = None) -> Tuple[List[ExecAction], np.ndarray]:
        st = st or self.state
        legal = legal_actions(self.world, st.exec_node)
        return legal, self.executor.distribution(st, legal)

    def do_action(self, st: IntentionState) -> ExecAction:
        """Most probable move of the executor; a_done is not executable through DO."""
        legal, probs = self.exec_distribution(st)
        return legal[int(np.argmax(probs[:-1]))]

    def step(self, action: IntentKind, forced: bool = False) -> StepOutcome:
        st = self.state
        if st is None or st.terminated:
            raise EpisodeTerminatedError("Step not executed, the episode has terminated")
        available = available_actions(st)
        if action not in available:
            raise UnavailableActionError(
                f"Step not executed, {action.value} is unavailable at stack depth {st.stack.depth}"
            )

        raw = raw_cost(self.world, st, action, self.costs)
        stack = st.stack
        if action not in (IntentKind.SUB, IntentKind.DONE) and stack.depth > 1:
            stack = spend_budget(stack)

        node = st.exec_node
        cur_desc = st.cur_desc
        terminated = False
        reply: Optional[AssistantReply] = None
        exec_action: Optional[ExecAction] = None
        answered: Optional[IntentKind] = None

        if action in REQUEST_KINDS:
            allowed = [kind for kind in REQUEST_KINDS if kind in available]
            answered = self.assistant.route(action, self.rng, allowed)
            reply = self.assistant.reply(answered, node, stack.top().goal, cur_desc)
            if answered == IntentKind.CUR:
                cur_desc = reply.desc
                self.executor.observe(cur_desc, None)
            elif answered == IntentKind.GOAL:
                stack = update_stack(stack, IntentKind.GOAL, (stack.top().goal, reply.desc))
            else:
                budget = self.cfg.subgoal_budget_factor * distance(self.world, node, reply.subgoal)
                stack = update_stack(stack, IntentKind.SUB, (reply.subgoal, reply.desc), budget=budget)
        elif action == IntentKind.DO:
            exec_action = self.do_action(st)
            node = exec_step(self.world, node, exec_action)
            cur_desc = self.perceive(node)
            self.executor.observe(cur_desc, action_feature(self.world, st.exec_node, exec_action))
        else:
            stack = update_stack(stack, IntentKind.DONE)
            terminated = stack.depth == 0

        timed_out = False
        if not terminated and st.t >= self.costs.H:
            timed_out = True
            terminated = True
            raw += task_error(self.world, node, stack.main_goal().goal)

        next_state = IntentionState(
            world=st.world, exec_node=node, cur_desc=cur_desc, stack=stack, t=st.t + 1, terminated=terminated
        )
        shaped = raw
        if self.costs.shaping_enabled:
            shaped = raw + potential(self.world, next_state) - potential(self.world, st)

        outcome = StepOutcome(
            next_state=next_state,
            raw_cost=raw,
            shaped_cost=shaped,
            reply=reply,
            exec_action=exec_action,
            answered=answered,
            timed_out=timed_out,
        )
        logger.debug(
            f"t={st.t} {action.value}: node {st.exec_node}->{node}, depth {st.stack.depth}->{stack.depth}, "
            f"raw {raw:.4f}, shaped {shaped:.4f}"
        )
        self.state = next_state
        self.emit_event("step", {"state": st, "action": action, "outcome": outcome, "forced": forced})
        if terminated:
            self.emit_event("episode_ended", {"task": self.task, "state": next_state})
        return outcome
