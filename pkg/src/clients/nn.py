import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.backend.classes import Constants
from src.backend.errors import CheckpointError, NoAvailableActionError, TrainingDivergedError, UnknownTokenError

logger = logging.getLogger("intention_nav")

Params = Dict[str, np.ndarray]

CHECKPOINT_FORMAT = 1


def uniform_init(rng: np.random.Generator, shape: Tuple[int, ...], scale: float) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape)


def zeros_like(params: Params) -> Params:
    return {name: np.zeros_like(value) for name, value in params.items()}


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = np.exp(logits - np.max(logits, axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Softmax over the entries where `mask` is true; masked entries are exactly 0."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any(axis=-1).all():
        raise NoAvailableActionError("Distribution not computed, every action is masked")
    masked = np.where(mask, logits, -np.inf)
    shifted = np.exp(masked - np.max(masked, axis=-1, keepdims=True))
    shifted = np.where(mask, shifted, 0.0)
    return shifted / shifted.sum(axis=-1, keepdims=True)


def entropy(probs: np.ndarray) -> float:
    nonzero = probs[probs > 0]
    return float(-(nonzero * np.log(nonzero)).sum())


def check_finite(values: Dict[str, Union[float, np.ndarray]], iteration: int = -1) -> None:
    offending = [name for name, value in values.items() if not np.all(np.isfinite(value))]
    if offending:
        raise TrainingDivergedError(
            f"Training stopped at iteration {iteration}, non-finite values in {', '.join(sorted(offending))}",
            iteration=iteration,
            offending=sorted(offending),
        )


def rnn_forward(params: Params, prefix: str, x: np.ndarray, h_prev: np.ndarray) -> np.ndarray:
    """Elman cell: tanh(Wx x + Wh h + b)."""
    return np.tanh(params[f"{prefix}_wx"] @ x + params[f"{prefix}_wh"] @ h_prev + params[f"{prefix}_b"])


def rnn_backward(
    params: Params, grads: Params, prefix: str, x: np.ndarray, h_prev: np.ndarray, h: np.ndarray, dh: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Accumulates the cell's parameter gradients; returns (dx, dh_prev)."""
    da = dh * (1.0 - h * h)
    grads[f"{prefix}_wx"] += np.outer(da, x)
    grads[f"{prefix}_wh"] += np.outer(da, h_prev)
    grads[f"{prefix}_b"] += da
    return params[f"{prefix}_wx"].T @ da, params[f"{prefix}_wh"].T @ da


class Vocabulary:
    """Closed token set: room names, object names and the two action names."""

    def __init__(self, tokens: Sequence[str]):
        self.tokens = list(dict.fromkeys(tokens))
        self._index = {token: i for i, token in enumerate(self.tokens)}

    @classmethod
    def default(cls, room_names: Iterable[str] = None, object_names: Iterable[str] = None) -> "Vocabulary":
        rooms = list(room_names or Constants.room_names)
        objects = list(object_names or Constants.object_names)
        return cls(rooms + objects + list(Constants.action_names))

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def index(self, token: str) -> int:
        if token not in self._index:
            raise UnknownTokenError(f"Token {token!r} is not in the vocabulary")
        return self._index[token]


class Adam:
    def __init__(self, params: Params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = zeros_like(params)
        self.v = zeros_like(params)

    def step(self, params: Params, grads: Params) -> None:
        """Updates `params` in place."""
        self.t += 1
        for name, grad in grads.items():
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * grad**2
            m_hat = self.m[name] / (1 - self.beta1**self.t)
            v_hat = self.v[name] / (1 - self.beta2**self.t)
            params[name] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state(self) -> Tuple[int, Params, Params]:
        return self.t, self.m, self.v

    def load_state(self, t: int, m: Params, v: Params) -> None:
        self.t, self.m, self.v = t, m, v


def save_checkpoint(
    path: Union[str, Path], params: Params, manifest: Dict, optimizer: Optional[Adam] = None
) -> None:
    head = dict(manifest)
    head["format"] = CHECKPOINT_FORMAT
    head["shapes"] = {name: list(value.shape) for name, value in params.items()}
    arrays = {f"param.{name}": value for name, value in params.items()}
    if optimizer is not None:
        head["adam_t"] = optimizer.t
        arrays.update({f"adam_m.{name}": value for name, value in optimizer.m.items()})
        arrays.update({f"adam_v.{name}": value for name, value in optimizer.v.items()})
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as file:
        np.savez(file, manifest=np.array(json.dumps(head, sort_keys=True)), **arrays)
    logger.debug(f"Checkpoint written to {path}")


def load_checkpoint(path: Union[str, Path]) -> Tuple[Params, Dict, Optional[Tuple[int, Params, Params]]]:
    """Returns (params, manifest, optimizer state or None)."""
    if not Path(path).exists():
        raise CheckpointError(f"Checkpoint not loaded, {path} does not exist")
    try:
        with np.load(path, allow_pickle=False) as data:
            manifest = json.loads(str(data["manifest"]))
            arrays = {key: data[key] for key in data.files if key != "manifest"}
    except (OSError, ValueError, KeyError) as e:
        raise CheckpointError(f"Checkpoint not loaded, {path} is unreadable: {e}")
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"Checkpoint not loaded, {path} has format {manifest.get('format')}")

    params = {key[len("param."):]: value for key, value in arrays.items() if key.startswith("param.")}
    for name, shape in manifest["shapes"].items():
        if name not in params or list(params[name].shape) != shape:
            raise CheckpointError(f"Checkpoint not loaded, parameter {name} is missing or has the wrong shape")
    optimizer_state = None
    if "adam_t" in manifest:
        m = {key[len("adam_m."):]: value for key, value in arrays.items() if key.startswith("adam_m.")}
        v = {key[len("adam_v."):]: value for key, value in arrays.items() if key.startswith("adam_v.")}
        optimizer_state = (manifest["adam_t"], m, v)
    return params, manifest, optimizer_state
