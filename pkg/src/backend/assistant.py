import logging
from typing import Optional, Sequence

import numpy as np

from .classes import (
    REQUEST_KINDS,
    AssistantReply,
    Constants,
    Description,
    DescriptionOrigin,
    DescriptionRole,
    ExecAction,
    IntentKind,
    ReplyKind,
    WorldGraph,
)
from .errors import UnavailableActionError
from .world import action_description, dense_description, shortest_path

logger = logging.getLogger("intention_nav")


def describe_state(g: WorldGraph, s: int, current: Optional[Description] = None) -> AssistantReply:
    """Dense current-state description of `s`. The prior description is accepted and ignored."""
    desc = dense_description(g, s, DescriptionRole.CURRENT_STATE, DescriptionOrigin.ASSISTANT_STATE)
    return AssistantReply(kind=ReplyKind.STATE_DESC, desc=desc)


def describe_goal(g: WorldGraph, goal: int, current: Optional[Description] = None) -> AssistantReply:
    desc = dense_description(g, goal, DescriptionRole.GOAL, DescriptionOrigin.ASSISTANT_GOAL)
    return AssistantReply(kind=ReplyKind.GOAL_DESC, desc=desc)


def subgoal_index(path_len: int, l_max: int) -> int:
    return min(path_len // 2, l_max)


def propose_subgoal(g: WorldGraph, s: int, goal: int, l_max: int = Constants.l_max) -> AssistantReply:
    """Subgoal roughly halfway along the shortest path, at most `l_max` edges away.

    An adjacent subgoal is described by the move that reaches it; at the goal itself the reply is ActionStop.
    """
    if l_max < 1:
        raise ValueError(f"Subgoal not proposed, l_max must be >= 1, got {l_max}")
    path = shortest_path(g, s, goal)
    k = subgoal_index(len(path), l_max)
    subgoal = path[k]
    if k == 0:
        desc = action_description(g, s, ExecAction.done())
    elif k == 1:
        desc = action_description(g, s, ExecAction.move(subgoal))
    else:
        desc = dense_description(g, subgoal, DescriptionRole.GOAL, DescriptionOrigin.ASSISTANT_GOAL)
    logger.debug(f"Subgoal {subgoal} proposed for {s} -> {goal} (k={k}, |p|={len(path)})")
    return AssistantReply(kind=ReplyKind.SUBGOAL_DESC, desc=desc, subgoal=subgoal)


def uncooperative(
    reply_for: IntentKind, rng: np.random.Generator, allowed: Sequence[IntentKind] = REQUEST_KINDS
) -> IntentKind:
    """Request kind an uncooperative assistant answers instead of `reply_for`, uniform over `allowed`."""
    if reply_for not in REQUEST_KINDS:
        raise UnavailableActionError(f"Request not redirected, {reply_for.value} is not an assistance request")
    options = [kind for kind in REQUEST_KINDS if kind in allowed]
    return options[int(rng.integers(len(options)))]


class Assistant:
    """Answers CUR, GOAL and SUB requests about one world."""

    cooperative = True

    def __init__(self, world: WorldGraph, l_max: int = Constants.l_max):
        self.world = world
        self.l_max = l_max

    def route(
        self, requested: IntentKind, rng: np.random.Generator, allowed: Sequence[IntentKind] = REQUEST_KINDS
    ) -> IntentKind:
        return requested

    def reply(self, kind: IntentKind, s: int, goal: int, current: Optional[Description] = None) -> AssistantReply:
        if kind == IntentKind.CUR:
            return describe_state(self.world, s, current)
        if kind == IntentKind.GOAL:
            return describe_goal(self.world, goal, current)
        if kind == IntentKind.SUB:
            return propose_subgoal(self.world, s, goal, self.l_max)
        raise UnavailableActionError(f"Reply not given, {kind.value} is not an assistance request")


class UncooperativeAssistant(Assistant):
    """Ignores the request kind and answers a uniformly drawn one."""

    cooperative = False

    def route(
        self, requested: IntentKind, rng: np.random.Generator, allowed: Sequence[IntentKind] = REQUEST_KINDS
    ) -> IntentKind:
        answered = uncooperative(requested, rng, allowed)
        if answered != requested:
            logger.debug(f"Request {requested.value} answered as {answered.value}")
        return answered


def make_assistant(world: WorldGraph, cooperative: bool = True, l_max: int = Constants.l_max) -> Assistant:
    return Assistant(world, l_max) if cooperative else UncooperativeAssistant(world, l_max)
