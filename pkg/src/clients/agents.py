import logging
import math
from typing import Dict, List, Optional

import numpy as np

from src.backend.classes import INTENT_KINDS, IntentionState, IntentKind
from src.backend.intention_env import IntentionEnv

from .intention import START_TOKEN, IntentionActor, action_mask, intention_dist, intention_features

logger = logging.getLogger("intention_nav")


def sample_budget(x: float, rng: np.random.Generator) -> int:
    """floor(x) plus a Bernoulli draw on the fractional part."""
    base = math.floor(x)
    return base + int(rng.random() < x - base)


def executor_wants_done(env: IntentionEnv, st: IntentionState) -> bool:
    _, probs = env.exec_distribution(st)
    return int(np.argmax(probs)) == len(probs) - 1


class IntentionAgent:
    """Chooses one of CUR, GOAL, SUB, DO, DONE at every step of an intention episode."""

    name = "agent"

    def __init__(self):
        self.prev: Optional[IntentKind] = None

    def begin(self, env: IntentionEnv, rng: np.random.Generator) -> None:
        self.prev = None

    def act(
        self, st: IntentionState, env: IntentionEnv, rng: np.random.Generator, forced: Optional[IntentKind] = None
    ) -> IntentKind:
        action = forced or self.decide(st, env, rng)
        self.prev = action
        return action

    def decide(self, st: IntentionState, env: IntentionEnv, rng: np.random.Generator) -> IntentKind:
        raise NotImplementedError


class NoAssistAgent(IntentionAgent):
    """DO until the executor's most probable action is a_done, then DONE."""

    name = "no_assist"

    def decide(self, st, env, rng):
        return IntentKind.DONE if executor_wants_done(env, st) else IntentKind.DO


class DenseGoalAgent(NoAssistAgent):
    name = "dense_goal"

    def decide(self, st, env, rng):
        if st.t == 1:
            return IntentKind.GOAL
        return super().decide(st, env, rng)


class DenseCurAgent(IntentionAgent):
    """CUR before every DO."""

    name = "dense_cur"

    def decide(self, st, env, rng):
        if self.prev != IntentKind.CUR:
            return IntentKind.CUR
        return IntentKind.DONE if executor_wants_done(env, st) else IntentKind.DO


class DenseBothAgent(DenseCurAgent):
    name = "dense_both"

    def decide(self, st, env, rng):
        if st.t == 1:
            return IntentKind.GOAL
        return super().decide(st, env, rng)


class BudgetMatchedAgent(IntentionAgent):
    """Random intentions within per-episode budgets matched to another policy's mean action counts."""

    name = "budget_matched"

    def __init__(self, budgets: Dict[IntentKind, float]):
        super().__init__()
        self.budgets = {kind: float(budgets.get(kind, 0.0)) for kind in INTENT_KINDS}
        self.remaining: Dict[IntentKind, int] = {}
        self.sub_count = 0
        self.done_count = 0

    def begin(self, env, rng):
        super().begin(env, rng)
        self.remaining = {kind: sample_budget(x, rng) for kind, x in self.budgets.items()}
        self.sub_count = 0
        self.done_count = 0

    def decide(self, st, env, rng):
        available = env.available_actions(st)
        if st.t == 1 and IntentKind.GOAL in available:
            return IntentKind.GOAL
        done_allowed = self.done_count < self.sub_count or self.remaining[IntentKind.SUB] <= 0
        options = [
            kind
            for kind in INTENT_KINDS
            if kind in available and self.remaining[kind] > 0 and (kind != IntentKind.DONE or done_allowed)
        ]
        if not options:
            return IntentKind.DONE
        return options[int(rng.integers(len(options)))]

    def act(self, st, env, rng, forced=None):
        action = super().act(st, env, rng, forced)
        self.remaining[action] = max(self.remaining[action] - 1, 0)
        if action == IntentKind.SUB:
            self.sub_count += 1
        elif action == IntentKind.DONE:
            self.done_count += 1
        return action


class LearnedIntentionAgent(IntentionAgent):
    """Samples from the actor while training, takes its argmax in evaluation. Keeps the episode's inputs."""

    name = "learned"

    def __init__(self, actor: IntentionActor, horizon: int, greedy: bool = False, stack_features: bool = True):
        super().__init__()
        self.actor = actor
        self.horizon = horizon
        self.greedy = greedy
        self.stack_features = stack_features
        self.state = actor.initial_state()
        self.prev_index = START_TOKEN
        self.inputs: List[np.ndarray] = []
        self.prev_actions: List[int] = []
        self.masks: List[np.ndarray] = []
        self.actions: List[int] = []

    def begin(self, env, rng):
        super().begin(env, rng)
        self.state = self.actor.initial_state()
        self.prev_index = START_TOKEN
        self.inputs, self.prev_actions, self.masks, self.actions = [], [], [], []

    def act(self, st, env, rng, forced=None):
        _, probs = env.exec_distribution(st)
        x = intention_features(env.executor.belief, probs, st.stack, st.t, self.horizon, self.stack_features)
        mask = action_mask(env.available_actions(st))
        self.state, dist = intention_dist(self.actor, self.state, x, self.prev_index, mask)
        if forced is not None:
            action = forced
        elif self.greedy:
            action = INTENT_KINDS[int(np.argmax(dist))]
        else:
            action = INTENT_KINDS[int(rng.choice(len(dist), p=dist))]
        self.inputs.append(x)
        self.prev_actions.append(self.prev_index)
        self.masks.append(mask)
        self.actions.append(action.position)
        self.prev_index = action.position
        self.prev = action
        return action


BASELINES = {
    "no_assist": NoAssistAgent,
    "oracle": NoAssistAgent,
    "dense_goal": DenseGoalAgent,
    "dense_cur": DenseCurAgent,
    "dense_both": DenseBothAgent,
}


def make_baseline(kind: str, budgets: Optional[Dict[IntentKind, float]] = None) -> IntentionAgent:
    if kind == "budget_matched":
        if budgets is None:
            raise ValueError("Baseline budget_matched needs per-action budgets")
        return BudgetMatchedAgent(budgets)
    if kind not in BASELINES:
        raise ValueError(f"Unknown baseline {kind}")
    return BASELINES[kind]()
