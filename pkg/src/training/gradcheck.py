import logging
import random
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from src.backend.classes import Task, WorldGraph
from src.backend.datasets import TaskFilter, sample_task
from src.backend.world import generate_house
from src.clients.agents import LearnedIntentionAgent
from src.clients.execution import ExecutionPolicy, OracleExecutor
from src.clients.intention import IntentionActor, IntentionCritic, input_dim
from src.clients.nn import Params, Vocabulary
from src.config import EnvConfig, WorldGenConfig

from .a2c import a2c_loss_and_grads
from .dagger import collect_episode
from .rollouts import Rollout, run_episode

logger = logging.getLogger("intention_nav")

TOLERANCE = 1e-4


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1.0, abs(analytic) + abs(numeric))


def _sample_sites(analytic: Params, samples: int, rng: np.random.Generator) -> List[Tuple[str, int]]:
    """Half the samples on entries with a non-zero analytic gradient, the rest anywhere."""
    names = sorted(analytic)
    sizes = np.array([analytic[name].size for name in names])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    flat = np.concatenate([analytic[name].ravel() for name in names])
    active = np.flatnonzero(flat)
    picks = []
    if len(active):
        picks.extend(rng.choice(active, size=min(samples // 2, len(active)), replace=False))
    picks.extend(rng.integers(len(flat), size=samples - len(picks)))
    sites = []
    for pick in picks:
        index = int(np.searchsorted(offsets, pick, side="right")) - 1
        sites.append((names[index], int(pick - offsets[index])))
    return sites


def grad_check(
    params: Params,
    loss_fn: Callable[[], float],
    analytic: Params,
    eps: float = 1e-4,
    samples: int = 64,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Max relative error between `analytic` and central differences of `loss_fn` over sampled entries.

    `loss_fn` reads `params`, which are perturbed in place and restored.
    """
    if eps <= 0:
        raise ValueError(f"Gradient check not run, eps must be positive, got {eps}")
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for name, index in _sample_sites(analytic, samples, rng):
        values = params[name].reshape(-1)
        original = values[index]
        values[index] = original + eps
        plus = loss_fn()
        values[index] = original - eps
        minus = loss_fn()
        values[index] = original
        numeric = (plus - minus) / (2 * eps)
        error = relative_error(float(analytic[name].reshape(-1)[index]), numeric)
        if error > worst:
            logger.debug(f"{name}[{index}]: analytic {analytic[name].reshape(-1)[index]:.6e}, numeric {numeric:.6e}")
        worst = max(worst, error)
    return worst


def randomize(params: Params, rng: np.random.Generator, scale: float = 0.3) -> None:
    """Overwrites every parameter with uniform noise so zero-initialised layers pass gradient through."""
    for name, value in params.items():
        params[name] = rng.uniform(-scale, scale, size=value.shape)


def quadratic_check(seed: int = 0, eps: float = 1e-4, samples: int = 16) -> float:
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(6, 4))
    y = rng.normal(size=6)
    params = {"w": rng.normal(size=4)}

    def loss():
        r = a @ params["w"] - y
        return 0.5 * float(r @ r)

    analytic = {"w": a.T @ (a @ params["w"] - y)}
    return grad_check(params, loss, analytic, eps, samples, rng)


def small_world(seed: int) -> Tuple[WorldGraph, Task]:
    cfg = WorldGenConfig(num_nodes=12, nodes_per_room=3, min_objects_per_node=1, max_objects_per_node=3)
    world = generate_house(seed, cfg)
    task = sample_task(world, TaskFilter(min_len=1, max_len=6), random.Random(seed))
    return world, task


def execution_check(seed: int = 0, eps: float = 1e-4, samples: int = 64, hidden: int = 8) -> float:
    rng = np.random.default_rng(seed)
    world, task = small_world(seed)
    policy = ExecutionPolicy(Vocabulary.default(), hidden=hidden, seed=seed)
    randomize(policy.params, rng)
    episodes = [collect_episode(policy, world, task, rng, expert=True, horizon=6) for _ in range(2)]
    _, analytic = policy.loss_and_grads(episodes)
    return grad_check(policy.params, lambda: policy.loss(episodes), analytic, eps, samples, rng)


def a2c_rollout(seed: int = 0, hidden: int = 8, exec_hidden: int = 8) -> Tuple[IntentionActor, IntentionCritic, Rollout]:
    """One sampled episode of a randomised actor over the oracle executor."""
    rng = np.random.default_rng(seed)
    world, task = small_world(seed)
    actor = IntentionActor(input_dim(exec_hidden), hidden=hidden, action_embedding=4, seed=seed)
    critic = IntentionCritic(input_dim(exec_hidden), hidden=hidden, action_embedding=4, seed=seed + 1)
    randomize(actor.params, rng)
    randomize(critic.params, rng)
    env_cfg = EnvConfig(perception="dense")
    agent = LearnedIntentionAgent(actor, env_cfg.costs.H)
    rollout = run_episode(world, task, OracleExecutor(exec_hidden), agent, env_cfg, None, rng, seed, enforce_budget=True)
    return actor, critic, rollout


def a2c_check(seed: int = 0, eps: float = 1e-4, samples: int = 64, entropy_weight: float = 0.01) -> Dict[str, float]:
    """Actor gradient against the actor loss, critic gradient against the critic loss."""
    actor, critic, rollout = a2c_rollout(seed)
    rng = np.random.default_rng(seed)
    _, actor_grads, critic_grads = a2c_loss_and_grads(actor, critic, [rollout], entropy_weight)

    def loss(key: str) -> Callable[[], float]:
        return lambda: a2c_loss_and_grads(actor, critic, [rollout], entropy_weight, with_grads=False)[0][key]

    return {
        "actor": grad_check(actor.params, loss("loss_actor"), actor_grads, eps, samples, rng),
        "critic": grad_check(critic.params, loss("loss_critic"), critic_grads, eps, samples, rng),
    }


def grad_check_suite(seed: int = 0, eps: float = 1e-4, samples: int = 64) -> Dict[str, float]:
    errors = {"quadratic": quadratic_check(seed, eps), "execution": execution_check(seed, eps, samples)}
    errors.update(a2c_check(seed, eps, samples))
    for name, error in errors.items():
        logger.info(f"Gradient check {name}: max relative error {error:.2e}")
    return errors
