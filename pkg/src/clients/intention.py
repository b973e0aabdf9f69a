import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.backend.classes import INTENT_KINDS, Constants, GoalStack, IntentKind

from .nn import (
    Adam,
    Params,
    load_checkpoint,
    masked_softmax,
    rnn_backward,
    rnn_forward,
    save_checkpoint,
    uniform_init,
    zeros_like,
)

logger = logging.getLogger("intention_nav")

NUM_INTENTS = len(INTENT_KINDS)
START_TOKEN = NUM_INTENTS
MOVE_SLOTS = 6
# move probabilities, P(a_done), depth one-hot, t/H, subgoal budget fraction
EXTRA_INPUTS = MOVE_SLOTS + 1 + Constants.max_stack_size + 1 + 1


def input_dim(exec_hidden: int) -> int:
    return exec_hidden + EXTRA_INPUTS


def action_mask(available: Iterable[IntentKind]) -> np.ndarray:
    available = set(available)
    return np.array([kind in available for kind in INTENT_KINDS], dtype=bool)


def intention_features(
    belief: np.ndarray, probs: np.ndarray, stack: GoalStack, t: int, horizon: int, stack_features: bool = True
) -> np.ndarray:
    """Input vector of the intention actor and critic at one step."""
    moves = np.zeros(MOVE_SLOTS)
    ranked = np.sort(np.asarray(probs[:-1]))[::-1][:MOVE_SLOTS]
    moves[: len(ranked)] = ranked
    depth = np.zeros(Constants.max_stack_size)
    step_fraction = np.zeros(1)
    budget = np.zeros(1)
    if stack_features:
        depth[min(stack.depth, Constants.max_stack_size) - 1] = 1.0
        step_fraction[0] = t / horizon
        top = stack.top()
        if stack.depth > 1 and top.initial_budget:
            budget[0] = min(max(top.budget / top.initial_budget, 0.0), 1.0)
    return np.concatenate([belief, moves, [probs[-1]], depth, step_fraction, budget])


class RecurrentHead:
    """Elman cell over (inputs, previous intention action) followed by a zero-initialised linear output."""

    role = "head"

    def __init__(
        self,
        inputs: int,
        hidden: int = 128,
        action_embedding: int = 16,
        outputs: int = 1,
        init_scale: float = 0.08,
        seed: int = 0,
    ):
        self.inputs = inputs
        self.hidden = hidden
        self.action_embedding = action_embedding
        self.outputs = outputs
        self.init_scale = init_scale
        rng = np.random.default_rng(seed)
        self.params: Params = {
            "act_emb": uniform_init(rng, (NUM_INTENTS + 1, action_embedding), init_scale),
            "cell_wx": uniform_init(rng, (hidden, inputs + action_embedding), init_scale),
            "cell_wh": uniform_init(rng, (hidden, hidden), init_scale),
            "cell_b": np.zeros(hidden),
            "out_w": np.zeros((outputs, hidden)),
            "out_b": np.zeros(outputs),
        }

    def initial_state(self) -> np.ndarray:
        return np.zeros(self.hidden)

    def step(self, h_prev: np.ndarray, x: np.ndarray, prev_action: int) -> Tuple[np.ndarray, np.ndarray]:
        xa = np.concatenate([x, self.params["act_emb"][prev_action]])
        h = rnn_forward(self.params, "cell", xa, h_prev)
        return h, self.params["out_w"] @ h + self.params["out_b"]

    def forward(self, inputs: np.ndarray, prev_actions: Sequence[int]) -> Tuple[np.ndarray, List[Dict]]:
        """Outputs (T x outputs) of one episode and the caches `backward` needs."""
        h = self.initial_state()
        caches, outs = [], []
        for x, prev in zip(inputs, prev_actions):
            xa = np.concatenate([x, self.params["act_emb"][prev]])
            h_new = rnn_forward(self.params, "cell", xa, h)
            outs.append(self.params["out_w"] @ h_new + self.params["out_b"])
            caches.append({"xa": xa, "h_prev": h, "h": h_new, "prev": prev})
            h = h_new
        return np.array(outs).reshape(len(caches), self.outputs), caches

    def backward(self, caches: List[Dict], douts: np.ndarray, grads: Optional[Params] = None) -> Params:
        grads = grads if grads is not None else zeros_like(self.params)
        dh_next = np.zeros(self.hidden)
        for c, dout in zip(reversed(caches), douts[::-1]):
            grads["out_w"] += np.outer(dout, c["h"])
            grads["out_b"] += dout
            dh = dh_next + self.params["out_w"].T @ dout
            dxa, dh_next = rnn_backward(self.params, grads, "cell", c["xa"], c["h_prev"], c["h"], dh)
            grads["act_emb"][c["prev"]] += dxa[self.inputs :]
        return grads

    def manifest(self) -> Dict:
        return {
            "model": self.role,
            "inputs": self.inputs,
            "hidden": self.hidden,
            "action_embedding": self.action_embedding,
            "outputs": self.outputs,
            "init_scale": self.init_scale,
        }

    def save(self, path: Union[str, Path], optimizer: Optional[Adam] = None, extra: Optional[Dict] = None) -> None:
        save_checkpoint(path, self.params, {**self.manifest(), **(extra or {})}, optimizer)

    @classmethod
    def load(cls, path: Union[str, Path]):
        params, manifest, optimizer_state = load_checkpoint(path)
        head = cls(
            manifest["inputs"],
            hidden=manifest["hidden"],
            action_embedding=manifest["action_embedding"],
            init_scale=manifest["init_scale"],
        )
        head.params = params
        return head, manifest, optimizer_state


class IntentionActor(RecurrentHead):
    role = "actor"

    def __init__(self, inputs: int, hidden: int = 128, action_embedding: int = 16, init_scale: float = 0.08, seed: int = 0, **_):
        super().__init__(inputs, hidden, action_embedding, NUM_INTENTS, init_scale, seed)

    @staticmethod
    def distribution(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
        return masked_softmax(logits, mask)


class IntentionCritic(RecurrentHead):
    role = "critic"

    def __init__(self, inputs: int, hidden: int = 128, action_embedding: int = 16, init_scale: float = 0.08, seed: int = 0, **_):
        super().__init__(inputs, hidden, action_embedding, 1, init_scale, seed)


def intention_dist(actor: IntentionActor, h_prev: np.ndarray, x: np.ndarray, prev_action: int, mask: np.ndarray):
    """(new actor state, masked distribution over the five intention actions)."""
    h, logits = actor.step(h_prev, x, prev_action)
    return h, actor.distribution(logits, mask)


def critic_value(critic: IntentionCritic, h_prev: np.ndarray, x: np.ndarray, prev_action: int):
    h, out = critic.step(h_prev, x, prev_action)
    return h, float(out[0])
