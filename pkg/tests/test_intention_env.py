import random

import numpy as np
import pytest

from src.backend.assistant import Assistant, UncooperativeAssistant, make_assistant
from src.backend.classes import DescriptionOrigin, GoalStack, IntentKind, ReplyKind
from src.backend.datasets import TaskFilter, sample_task
from src.backend.errors import EpisodeTerminatedError, StackError, UnavailableActionError
from src.backend.intention_env import IntentionEnv, update_stack
from src.backend.world import distance, shortest_path
from src.clients.agents import NoAssistAgent
from src.clients.execution import OracleExecutor
from src.config import CostConfig, EnvConfig
from src.training.rollouts import run_episode


def make_env(world, task, **overrides):
    cfg = EnvConfig(perception="dense", **overrides)
    env = IntentionEnv(world, Assistant(world, cfg.l_max), OracleExecutor(8), cfg)
    env.reset(task, np.random.default_rng(0))
    return env


def test_reset(world, task):
    env = make_env(world, task)
    st = env.state
    assert st.t == 1
    assert st.exec_node == task.start
    assert st.stack.depth == 1
    assert env.observe().goal_descs == (task.goal_desc,)
    assert env.available_actions() == set(IntentKind)
    assert env.potential() == distance(world, task.start, task.goal)


def test_reset_rejects_foreign_task(world, task):
    env = make_env(world, task)
    with pytest.raises(ValueError):
        env.reset(task.model_copy(update={"world": "elsewhere"}))


def test_do_follows_executor(world, task):
    env = make_env(world, task)
    d = distance(world, task.start, task.goal)
    outcome = env.step(IntentKind.DO)
    assert outcome.next_state.exec_node == shortest_path(world, task.start, task.goal)[1]
    assert outcome.raw_cost == pytest.approx(0.01)
    assert outcome.shaped_cost == pytest.approx(0.01 + (d - 1) - d)
    assert outcome.next_state.t == 2


def test_done_on_main_goal_terminates(world, task):
    env = make_env(world, task)
    outcome = env.step(IntentKind.DONE)
    assert outcome.next_state.terminated
    assert outcome.raw_cost == distance(world, task.start, task.goal)
    assert outcome.shaped_cost == pytest.approx(0.0)
    with pytest.raises(EpisodeTerminatedError):
        env.step(IntentKind.DO)


def test_cur_and_goal_replies(world, task):
    env = make_env(world, task)
    cur = env.step(IntentKind.CUR)
    assert cur.reply.kind == ReplyKind.STATE_DESC
    assert env.state.cur_desc.origin == DescriptionOrigin.ASSISTANT_STATE
    goal = env.step(IntentKind.GOAL)
    assert goal.reply.kind == ReplyKind.GOAL_DESC
    assert env.state.stack.depth == 1
    assert env.state.stack.top().desc.origin == DescriptionOrigin.ASSISTANT_GOAL
    assert env.state.stack.top().goal == task.goal


def test_sub_push_budget_and_pop(world, task):
    env = make_env(world, task)
    outcome = env.step(IntentKind.SUB)
    stack = env.state.stack
    assert stack.depth == 2
    top = stack.top()
    assert top.goal == outcome.reply.subgoal
    assert top.budget == 3 * distance(world, task.start, top.goal)
    assert IntentKind.SUB not in env.available_actions()
    with pytest.raises(UnavailableActionError):
        env.step(IntentKind.SUB)

    env.step(IntentKind.DO)
    assert env.state.stack.top().budget == top.budget - 1

    popped = env.step(IntentKind.DONE)
    assert popped.raw_cost == 0.0
    assert not popped.next_state.terminated
    assert env.state.stack.depth == 1
    assert env.state.stack.top().budget is None


def test_time_limit(world, task):
    env = make_env(world, task, costs=CostConfig(H=3))
    outcomes = [env.step(IntentKind.CUR) for _ in range(3)]
    assert not outcomes[1].timed_out
    last = outcomes[-1]
    assert last.timed_out and last.next_state.terminated
    assert last.raw_cost == pytest.approx(0.01 + distance(world, task.start, task.goal))


def test_shaping_disabled(world, task):
    env = make_env(world, task, costs=CostConfig(shaping_enabled=False))
    outcome = env.step(IntentKind.DO)
    assert outcome.shaped_cost == outcome.raw_cost


def test_shaped_costs_telescope(world, task):
    rollout = run_episode(
        world, task, OracleExecutor(8), NoAssistAgent(), EnvConfig(perception="dense"), None, np.random.default_rng(0)
    )
    trace = rollout.trace
    assert trace.total_shaped == pytest.approx(trace.total_raw - trace.initial_potential)


def test_oracle_no_assist_succeeds(world, task):
    rollout = run_episode(
        world, task, OracleExecutor(8), NoAssistAgent(), EnvConfig(perception="dense"), None, np.random.default_rng(0)
    )
    trace = rollout.trace
    assert trace.success
    assert trace.final_node == task.goal
    assert [s.action for s in trace.steps] == [IntentKind.DO] * task.path_length + [IntentKind.DONE]
    assert trace.total_raw == pytest.approx(0.01 * task.path_length)


def test_uncooperative_never_answers_unavailable(world, task):
    cfg = EnvConfig(perception="dense", stack_size=1)
    env = IntentionEnv(world, UncooperativeAssistant(world), OracleExecutor(8), cfg)
    env.reset(task, np.random.default_rng(1))
    answered = {env.step(IntentKind.CUR).answered for _ in range(20)}
    assert answered <= {IntentKind.CUR, IntentKind.GOAL}
    assert env.state.stack.depth == 1


def test_update_stack_rules(world, task):
    stack = GoalStack(entries=make_env(world, task).state.stack.entries, capacity=1)
    with pytest.raises(StackError):
        update_stack(stack, IntentKind.SUB, (0, task.goal_desc))
    with pytest.raises(StackError):
        update_stack(stack, IntentKind.DONE, (0, task.goal_desc))
    with pytest.raises(StackError):
        update_stack(stack, IntentKind.DO)
    assert update_stack(stack, IntentKind.DONE).depth == 0


@pytest.fixture(scope="module")
def house_tasks(houses):
    return [
        (world, sample_task(world, TaskFilter(min_len=1, max_len=10), random.Random(i), "train", f"{world.id}-{i}"))
        for world in houses
        for i in range(10)
    ]


def random_env(world, stack_size, cooperative):
    cfg = EnvConfig(perception="dense", stack_size=stack_size, cooperative=cooperative)
    return IntentionEnv(world, make_assistant(world, cooperative, cfg.l_max), OracleExecutor(8), cfg)


def random_episode(env, task, rng):
    """Uniform over the available intention actions until the episode ends."""
    env.reset(task, rng)
    initial = env.potential()
    steps = []
    while not env.state.terminated:
        st = env.state
        available = sorted(env.available_actions(), key=lambda kind: kind.position)
        action = available[int(rng.integers(len(available)))]
        steps.append((st, action, env.step(action)))
    return initial, steps


def test_random_episodes_telescope(house_tasks):
    for episode in range(1000):
        world, task = house_tasks[episode % len(house_tasks)]
        env = random_env(world, stack_size=1 + episode % 3, cooperative=episode % 4 != 0)
        initial, steps = random_episode(env, task, np.random.default_rng(episode))
        shaped = sum(outcome.shaped_cost for _, _, outcome in steps)
        raw = sum(outcome.raw_cost for _, _, outcome in steps)
        assert abs(shaped - (raw - initial)) <= 1e-9


def test_random_stack_and_mask_invariants(house_tasks):
    total = 0
    episode = 0
    while total < 100_000:
        world, task = house_tasks[episode % len(house_tasks)]
        stack_size = 1 + episode % 3
        env = random_env(world, stack_size, cooperative=episode % 2 == 0)
        _, steps = random_episode(env, task, np.random.default_rng(10_000 + episode))
        for st, action, outcome in steps:
            if st.stack.is_full:
                assert IntentKind.SUB not in env.available_actions(st)
            nxt = outcome.next_state
            assert nxt.stack.depth <= stack_size
            if nxt.stack.depth:
                assert nxt.stack.entries[0].goal == task.goal
            if action != IntentKind.DO:
                assert nxt.exec_node == st.exec_node
        total += len(steps)
        episode += 1
