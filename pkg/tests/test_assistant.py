import numpy as np
import pytest

from src.backend.assistant import (
    Assistant,
    UncooperativeAssistant,
    describe_goal,
    describe_state,
    make_assistant,
    propose_subgoal,
    uncooperative,
)
from src.backend.classes import (
    REQUEST_KINDS,
    Constants,
    DescriptionOrigin,
    DescriptionRole,
    IntentKind,
    ReplyKind,
)
from src.backend.errors import UnavailableActionError
from src.backend.world import dense_description, distance, shortest_path
from tests.helpers import bfs_distances


def test_describe_state(world):
    reply = describe_state(world, 3)
    assert reply.kind == ReplyKind.STATE_DESC
    assert reply.subgoal is None
    assert reply.desc.origin == DescriptionOrigin.ASSISTANT_STATE
    assert reply.desc.features == dense_description(world, 3, DescriptionRole.CURRENT_STATE).features


def test_describe_goal(world, task):
    reply = describe_goal(world, task.goal)
    assert reply.kind == ReplyKind.GOAL_DESC
    assert reply.desc.origin == DescriptionOrigin.ASSISTANT_GOAL
    assert reply.desc.room().name == world.room_of(task.goal)


def test_subgoal_at_goal(world):
    reply = propose_subgoal(world, 2, 2)
    assert reply.subgoal == 2
    assert reply.desc.action().name == Constants.action_stop


def test_subgoal_next_to_start(world):
    v = world.neighbors(0)[0]
    reply = propose_subgoal(world, 0, v)
    assert reply.subgoal == v
    assert reply.desc.action().name == Constants.action_go


def test_subgoal_halfway(world, task):
    path = shortest_path(world, task.start, task.goal)
    reply = propose_subgoal(world, task.start, task.goal, l_max=3)
    assert reply.kind == ReplyKind.SUBGOAL_DESC
    assert reply.subgoal == path[min(len(path) // 2, 3)]
    assert 1 <= distance(world, task.start, reply.subgoal) <= 3


@pytest.mark.parametrize("l_max", [1, 2])
def test_subgoal_respects_l_max(world, task, l_max):
    reply = propose_subgoal(world, task.start, task.goal, l_max=l_max)
    assert distance(world, task.start, reply.subgoal) <= l_max


def test_subgoal_rejects_l_max_zero(world, task):
    with pytest.raises(ValueError):
        propose_subgoal(world, task.start, task.goal, l_max=0)


def test_uncooperative_draws_allowed_kinds():
    rng = np.random.default_rng(0)
    drawn = {uncooperative(IntentKind.SUB, rng) for _ in range(200)}
    assert drawn == set(REQUEST_KINDS)
    restricted = {uncooperative(IntentKind.CUR, rng, (IntentKind.CUR, IntentKind.GOAL)) for _ in range(200)}
    assert restricted == {IntentKind.CUR, IntentKind.GOAL}


def test_uncooperative_rejects_non_requests():
    with pytest.raises(UnavailableActionError):
        uncooperative(IntentKind.DO, np.random.default_rng(0))


def test_assistant_reply_kinds(world, task):
    assistant = Assistant(world)
    assert assistant.reply(IntentKind.CUR, task.start, task.goal).kind == ReplyKind.STATE_DESC
    assert assistant.reply(IntentKind.GOAL, task.start, task.goal).kind == ReplyKind.GOAL_DESC
    assert assistant.reply(IntentKind.SUB, task.start, task.goal).kind == ReplyKind.SUBGOAL_DESC
    with pytest.raises(UnavailableActionError):
        assistant.reply(IntentKind.DONE, task.start, task.goal)


def test_make_assistant(world):
    assert isinstance(make_assistant(world, cooperative=False), UncooperativeAssistant)
    helpful = make_assistant(world)
    assert helpful.cooperative
    assert helpful.route(IntentKind.SUB, np.random.default_rng(0)) == IntentKind.SUB


def bfs_path(world, hops_to_goal, s):
    path = [s]
    while hops_to_goal[path[-1]] > 0:
        u = path[-1]
        path.append(min(v for v in world.nodes[u].neighbors if hops_to_goal[v] == hops_to_goal[u] - 1))
    return path


@pytest.mark.parametrize("l_max", [1, 2, 3])
def test_subgoal_rule_on_every_pair(houses, l_max):
    for world in houses:
        for g in range(world.num_nodes):
            hops = bfs_distances(world, g)
            for s in range(world.num_nodes):
                path = bfs_path(world, hops, s)
                expected = path[min(len(path) // 2, l_max)]
                reply = propose_subgoal(world, s, g, l_max)
                assert reply.subgoal == expected
                action = reply.desc.action()
                adjacent = expected in world.nodes[s].neighbors
                assert (action is not None and action.name == Constants.action_go) == adjacent
                assert (action is not None and action.name == Constants.action_stop) == (expected == s)
                if not adjacent and expected != s:
                    assert reply.desc.room().name == world.room_of(expected)


def test_uncooperative_is_uniform_and_ignores_the_request():
    rng = np.random.default_rng(0)
    table = np.zeros((3, 3))
    for i in range(30_000):
        requested = REQUEST_KINDS[i % 3]
        table[i % 3, REQUEST_KINDS.index(uncooperative(requested, rng))] += 1
    assert np.allclose(table.sum(axis=0) / table.sum(), 1 / 3, atol=0.01)
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / table.sum()
    chi2 = ((table - expected) ** 2 / expected).sum()
    # 4 degrees of freedom, p = 0.01
    assert chi2 < 13.277
