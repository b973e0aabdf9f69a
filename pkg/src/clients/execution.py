import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.backend.classes import (
    Constants,
    Description,
    ExecAction,
    FeatureKind,
    FeatureSet,
    IntentionState,
    WorldGraph,
)
from src.backend.world import action_feature, shortest_path

from .nn import (
    Adam,
    Params,
    Vocabulary,
    load_checkpoint,
    rnn_backward,
    rnn_forward,
    save_checkpoint,
    softmax,
    uniform_init,
    zeros_like,
)

logger = logging.getLogger("intention_nav")

EMBEDDINGS = ("emb_name", "emb_horz", "emb_vert", "emb_dist", "emb_kind")


@dataclass
class ExecStep:
    """One belief update, optionally followed by an action choice labelled by the oracle."""

    d_s: Description
    a_prev: Optional[FeatureSet]
    d_g: Description
    legal: List[FeatureSet] = field(default_factory=list)
    label: Optional[int] = None


def oracle_exec_action(g: WorldGraph, s: int, goal: int) -> ExecAction:
    if s == goal:
        return ExecAction.done()
    return ExecAction.move(shortest_path(g, s, goal)[1])


class ExecutionPolicy:
    """Order-invariant set encoder, Elman belief cell and a two-layer action scorer."""

    def __init__(self, vocab: Vocabulary, hidden: int = 128, init_scale: float = 0.08, seed: int = 0):
        self.vocab = vocab
        self.hidden = hidden
        self.init_scale = init_scale
        rng = np.random.default_rng(seed)
        h = hidden
        self.params: Params = {
            "emb_name": uniform_init(rng, (len(vocab), h), init_scale),
            "emb_horz": uniform_init(rng, (Constants.horz_buckets, h), init_scale),
            "emb_vert": uniform_init(rng, (Constants.vert_buckets, h), init_scale),
            "emb_dist": uniform_init(rng, (Constants.dist_buckets, h), init_scale),
            "emb_kind": uniform_init(rng, (len(FeatureKind), h), init_scale),
            "cell_wx": uniform_init(rng, (h, 2 * h), init_scale),
            "cell_wh": uniform_init(rng, (h, h), init_scale),
            "cell_b": np.zeros(h),
            "score_w1": uniform_init(rng, (h, 3 * h), init_scale),
            "score_b1": np.zeros(h),
            "score_w2": np.zeros(h),
        }

    def feature_indices(self, features: Sequence[FeatureSet]) -> np.ndarray:
        rows = [(self.vocab.index(f.name), f.horz, f.vert, f.dist, f.kind.position) for f in features]
        return np.array(rows, dtype=np.int64).reshape(len(rows), 5)

    def _encode(self, idx: np.ndarray) -> np.ndarray:
        if len(idx) == 0:
            return np.zeros(self.hidden)
        total = sum(self.params[name][idx[:, col]] for col, name in enumerate(EMBEDDINGS))
        return total.mean(axis=0)

    def _encode_backward(self, grads: Params, idx: np.ndarray, grad: np.ndarray) -> None:
        if len(idx) == 0:
            return
        share = grad / len(idx)
        for col, name in enumerate(EMBEDDINGS):
            np.add.at(grads[name], idx[:, col], share)

    def encode_description(self, d: Description) -> np.ndarray:
        return self._encode(self.feature_indices(d.features))

    def initial_belief(self) -> np.ndarray:
        return np.zeros(self.hidden)

    def belief_update(self, b_prev: np.ndarray, d_s: Description, a_prev: Optional[FeatureSet] = None) -> np.ndarray:
        prev = [a_prev] if a_prev is not None else []
        x = np.concatenate([self.encode_description(d_s), self._encode(self.feature_indices(prev))])
        return rnn_forward(self.params, "cell", x, b_prev)

    def _score(self, b: np.ndarray, enc_g: np.ndarray, actions: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        m = len(actions)
        u = np.concatenate([np.tile(b, (m, 1)), np.tile(enc_g, (m, 1)), actions], axis=1)
        z = np.tanh(u @ self.params["score_w1"].T + self.params["score_b1"])
        return u, z, z @ self.params["score_w2"]

    def action_dist(self, b: np.ndarray, d_g: Description, legal: Sequence[FeatureSet]) -> np.ndarray:
        """Distribution over `legal` (action feature sets), in the given order."""
        if not legal:
            raise ValueError("Distribution not computed, no legal action")
        actions = np.stack([self._encode(self.feature_indices([a])) for a in legal])
        _, _, logits = self._score(b, self.encode_description(d_g), actions)
        return softmax(logits)

    def _forward(self, episode: Sequence[ExecStep]) -> List[Dict]:
        caches = []
        b = self.initial_belief()
        for step in episode:
            idx_s = self.feature_indices(step.d_s.features)
            idx_a = self.feature_indices([step.a_prev] if step.a_prev is not None else [])
            x = np.concatenate([self._encode(idx_s), self._encode(idx_a)])
            b_new = rnn_forward(self.params, "cell", x, b)
            cache = {"idx_s": idx_s, "idx_a": idx_a, "x": x, "b_prev": b, "b": b_new}
            if step.label is not None:
                idx_g = self.feature_indices(step.d_g.features)
                idx_legal = [self.feature_indices([a]) for a in step.legal]
                actions = np.stack([self._encode(idx) for idx in idx_legal])
                u, z, logits = self._score(b_new, self._encode(idx_g), actions)
                cache.update(idx_g=idx_g, idx_legal=idx_legal, u=u, z=z, p=softmax(logits), label=step.label)
            caches.append(cache)
            b = b_new
        return caches

    def loss(self, episodes: Sequence[Sequence[ExecStep]]) -> float:
        return self.loss_and_grads(episodes, with_grads=False)[0]

    def loss_and_grads(
        self, episodes: Sequence[Sequence[ExecStep]], with_grads: bool = True
    ) -> Tuple[float, Optional[Params]]:
        """Mean per-step cross-entropy over every labelled step, with gradients by backpropagation through time."""
        forwards = [self._forward(episode) for episode in episodes]
        labelled = sum(1 for caches in forwards for c in caches if "label" in c)
        if labelled == 0:
            return 0.0, (zeros_like(self.params) if with_grads else None)
        loss = -sum(np.log(c["p"][c["label"]]) for caches in forwards for c in caches if "label" in c) / labelled
        if not with_grads:
            return float(loss), None

        h = self.hidden
        p = self.params
        grads = zeros_like(p)
        for caches in forwards:
            dh_next = np.zeros(h)
            for c in reversed(caches):
                dh = dh_next.copy()
                if "label" in c:
                    dlogits = c["p"].copy()
                    dlogits[c["label"]] -= 1.0
                    dlogits /= labelled
                    grads["score_w2"] += c["z"].T @ dlogits
                    da = np.outer(dlogits, p["score_w2"]) * (1.0 - c["z"] ** 2)
                    grads["score_w1"] += da.T @ c["u"]
                    grads["score_b1"] += da.sum(axis=0)
                    du = da @ p["score_w1"]
                    dh += du[:, :h].sum(axis=0)
                    self._encode_backward(grads, c["idx_g"], du[:, h : 2 * h].sum(axis=0))
                    for j, idx in enumerate(c["idx_legal"]):
                        self._encode_backward(grads, idx, du[j, 2 * h :])
                dx, dh_next = rnn_backward(p, grads, "cell", c["x"], c["b_prev"], c["b"], dh)
                self._encode_backward(grads, c["idx_s"], dx[:h])
                self._encode_backward(grads, c["idx_a"], dx[h:])
        return float(loss), grads

    def manifest(self) -> Dict:
        return {
            "model": "execution",
            "hidden": self.hidden,
            "init_scale": self.init_scale,
            "vocabulary": self.vocab.tokens,
        }

    def save(self, path: Union[str, Path], optimizer: Optional[Adam] = None, extra: Optional[Dict] = None) -> None:
        save_checkpoint(path, self.params, {**self.manifest(), **(extra or {})}, optimizer)

    @classmethod
    def load(cls, path: Union[str, Path]) -> Tuple["ExecutionPolicy", Dict, Optional[Tuple]]:
        params, manifest, optimizer_state = load_checkpoint(path)
        policy = cls(Vocabulary(manifest["vocabulary"]), manifest["hidden"], manifest["init_scale"])
        policy.params = params
        return policy, manifest, optimizer_state


class OracleExecutor:
    """Shortest-path executor: one-hot on the oracle action towards the top goal."""

    def __init__(self, hidden: int = 128):
        self.hidden = hidden
        self.world: Optional[WorldGraph] = None
        self.belief = np.zeros(hidden)

    def reset(self, world: WorldGraph, state: IntentionState) -> None:
        self.world = world
        self.belief = np.zeros(self.hidden)

    def observe(self, desc: Description, prev_action: Optional[FeatureSet] = None) -> None:
        pass

    def distribution(self, state: IntentionState, legal: List[ExecAction]) -> np.ndarray:
        probs = np.zeros(len(legal))
        probs[legal.index(oracle_exec_action(self.world, state.exec_node, state.stack.top().goal))] = 1.0
        return probs


class LearnedExecutor:
    """Runs an ExecutionPolicy, keeping the belief of one episode."""

    def __init__(self, policy: ExecutionPolicy):
        self.policy = policy
        self.hidden = policy.hidden
        self.world: Optional[WorldGraph] = None
        self.belief = policy.initial_belief()

    def reset(self, world: WorldGraph, state: IntentionState) -> None:
        self.world = world
        self.belief = self.policy.initial_belief()

    def observe(self, desc: Description, prev_action: Optional[FeatureSet] = None) -> None:
        self.belief = self.policy.belief_update(self.belief, desc, prev_action)

    def distribution(self, state: IntentionState, legal: List[ExecAction]) -> np.ndarray:
        feats = [action_feature(self.world, state.exec_node, a) for a in legal]
        return self.policy.action_dist(self.belief, state.stack.top().desc, feats)


class SkylineExecutor(LearnedExecutor):
    """Learned on the main goal, the shortest-path oracle while a subgoal is active."""

    def distribution(self, state: IntentionState, legal: List[ExecAction]) -> np.ndarray:
        if state.stack.depth > 1:
            probs = np.zeros(len(legal))
            probs[legal.index(oracle_exec_action(self.world, state.exec_node, state.stack.top().goal))] = 1.0
            return probs
        return super().distribution(state, legal)


def make_executor(kind: str, policy: Optional[ExecutionPolicy] = None, hidden: int = 128):
    if kind == "oracle":
        return OracleExecutor(policy.hidden if policy is not None else hidden)
    if policy is None:
        raise ValueError(f"Executor {kind} needs a trained execution policy")
    if kind == "learned":
        return LearnedExecutor(policy)
    if kind == "skyline":
        return SkylineExecutor(policy)
    raise ValueError(f"Unknown executor {kind}")
