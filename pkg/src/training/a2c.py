import logging
import sys
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from src.backend.classes import Task, WorldGraph
from src.backend.records import append_record
from src.backend.world import FrequencyTable
from src.clients.agents import LearnedIntentionAgent
from src.clients.execution import ExecutionPolicy, make_executor
from src.clients.intention import IntentionActor, IntentionCritic, input_dim
from src.clients.nn import Adam, Params, check_finite, masked_softmax, zeros_like
from src.config import A2CConfig, EnvConfig, ModelConfig

from .rollouts import Rollout, RolloutPool, episode_rng, run_episode

logger = logging.getLogger("intention_nav")

TRAIN_STREAM, CRITIC_STREAM, VALIDATION_STREAM = 0, 1, 2


def costs_to_go(costs: np.ndarray) -> np.ndarray:
    """C_t = sum of costs from step t to the end."""
    return np.cumsum(costs[::-1])[::-1]


def a2c_loss_and_grads(
    actor: IntentionActor,
    critic: IntentionCritic,
    rollouts: Sequence[Rollout],
    entropy_weight: float,
    with_grads: bool = True,
) -> Tuple[Dict[str, float], Optional[Params], Optional[Params]]:
    """Actor loss sum_t (C_t - V_t) log psi(a_t) - beta H_t and critic loss 1/2 sum_t (V_t - C_t)^2, per episode mean.

    V_t - C_t is a constant for the actor. Forced steps only train the critic.
    """
    actor_grads = zeros_like(actor.params) if with_grads else None
    critic_grads = zeros_like(critic.params) if with_grads else None
    n = len(rollouts)
    loss_actor = loss_critic = total_entropy = advantage = 0.0
    steps = 0
    for r in rollouts:
        if not len(r.actions):
            continue
        logits, actor_caches = actor.forward(r.inputs, r.prev_actions)
        values, critic_caches = critic.forward(r.inputs, r.prev_actions)
        probs = masked_softmax(logits, r.masks)
        v = values[:, 0]
        c = costs_to_go(r.shaped_costs)
        w = v - c
        free = ~np.array(r.forced, dtype=bool)
        logp = np.where(probs > 0, np.log(np.where(probs > 0, probs, 1.0)), 0.0)
        ent = -(probs * logp).sum(axis=1)
        chosen = logp[np.arange(len(r.actions)), r.actions]

        loss_actor += float(np.sum(free * (-w * chosen - entropy_weight * ent))) / n
        loss_critic += 0.5 * float(np.sum(w**2)) / n
        total_entropy += float(ent.sum())
        advantage += float(w.sum())
        steps += len(r.actions)

        if with_grads:
            onehot = np.zeros_like(probs)
            onehot[np.arange(len(r.actions)), r.actions] = 1.0
            dlogits = -w[:, None] * (onehot - probs) + entropy_weight * probs * (logp + ent[:, None])
            dlogits = np.where(r.masks, dlogits, 0.0) * free[:, None] / n
            actor.backward(actor_caches, dlogits, actor_grads)
            critic.backward(critic_caches, (w / n)[:, None], critic_grads)

    stats = {
        "loss_actor": loss_actor,
        "loss_critic": loss_critic,
        "entropy": total_entropy / max(steps, 1),
        "mean_advantage": advantage / max(steps, 1),
        "mean_return": float(np.mean([r.trace.total_raw for r in rollouts])) if rollouts else 0.0,
    }
    return stats, actor_grads, critic_grads


def a2c_update(
    actor: IntentionActor,
    critic: IntentionCritic,
    rollouts: Sequence[Rollout],
    cfg: A2CConfig,
    actor_opt: Optional[Adam],
    critic_opt: Adam,
    iteration: int = -1,
) -> Dict[str, float]:
    """One update; the actor stays frozen when `actor_opt` is None."""
    stats, actor_grads, critic_grads = a2c_loss_and_grads(actor, critic, rollouts, cfg.entropy_weight)
    named = {f"actor.{k}": g for k, g in actor_grads.items()}
    named.update({f"critic.{k}": g for k, g in critic_grads.items()})
    check_finite(named, iteration)
    check_finite({"loss_actor": stats["loss_actor"], "loss_critic": stats["loss_critic"]}, iteration)
    if actor_opt is not None:
        actor_opt.step(actor.params, actor_grads)
    critic_opt.step(critic.params, critic_grads)
    return stats


class IntentionTrainer:
    """Critic pre-training then joint actor-critic training of the intention policy."""

    def __init__(
        self,
        exec_policy: ExecutionPolicy,
        worlds: Mapping[str, WorldGraph],
        tasks: Sequence[Task],
        val_tasks: Sequence[Task],
        env_cfg: EnvConfig,
        model_cfg: ModelConfig,
        cfg: A2CConfig,
        freq: Optional[FrequencyTable] = None,
        executor_kind: str = "learned",
        seed: int = 0,
        actor: Optional[IntentionActor] = None,
        critic: Optional[IntentionCritic] = None,
    ):
        if not tasks:
            raise ValueError("Intention training not started, the train split is empty")
        self.exec_policy = exec_policy
        self.worlds = worlds
        self.tasks = list(tasks)
        self.val_tasks = list(val_tasks)
        self.env_cfg = env_cfg
        self.cfg = cfg
        self.freq = freq
        self.executor_kind = executor_kind
        self.seed = seed
        inputs = input_dim(exec_policy.hidden)
        head = dict(hidden=model_cfg.intent_hidden, action_embedding=model_cfg.action_embedding, init_scale=model_cfg.init_scale)
        self.actor = actor or IntentionActor(inputs, seed=seed, **head)
        self.critic = critic or IntentionCritic(inputs, seed=seed + 1, **head)
        self.actor_opt = Adam(self.actor.params, lr=cfg.lr)
        self.critic_opt = Adam(self.critic.params, lr=cfg.lr)
        self.pool = RolloutPool(cfg.num_workers)

    def _episode(self, task: Task, rng: np.random.Generator, greedy: bool, seed: int) -> Rollout:
        agent = LearnedIntentionAgent(self.actor, self.env_cfg.costs.H, greedy, self.env_cfg.stack_features)
        executor = make_executor(self.executor_kind, self.exec_policy)
        return run_episode(
            self.worlds[task.world], task, executor, agent, self.env_cfg, self.freq, rng, seed, enforce_budget=not greedy
        )

    def collect(self, iteration: int, stream: int = TRAIN_STREAM) -> List[Rollout]:
        picker = np.random.default_rng([self.seed, stream, iteration])
        picked = picker.integers(len(self.tasks), size=self.cfg.batch_size)
        jobs = [
            (lambda task=self.tasks[i], index=j: self._episode(task, episode_rng(self.seed, iteration, index, stream), False, self.seed))
            for j, i in enumerate(picked)
        ]
        return self.pool.map(jobs)

    def validate(self, tasks: Optional[Sequence[Task]] = None) -> float:
        tasks = self.val_tasks if tasks is None else tasks
        if not tasks:
            return 0.0
        jobs = [
            (lambda task=task, index=j: self._episode(task, episode_rng(self.seed, 0, index, VALIDATION_STREAM), True, self.seed))
            for j, task in enumerate(tasks)
        ]
        return float(np.mean([r.trace.success for r in self.pool.map(jobs)]))

    def pretrain_critic(self, metrics_path: Optional[Path] = None) -> List[Dict]:
        """Regresses the critic on costs-to-go of the frozen initial actor."""
        history = []
        bar = tqdm(range(self.cfg.critic_pretrain_iterations), desc="critic", disable=not sys.stderr.isatty())
        for iteration in bar:
            rollouts = self.collect(iteration, CRITIC_STREAM)
            stats = a2c_update(self.actor, self.critic, rollouts, self.cfg, None, self.critic_opt, iteration)
            record = {"phase": "critic", "iter": iteration + 1, **stats}
            if metrics_path is not None:
                append_record(metrics_path, record)
            history.append(record)
            bar.set_postfix(critic=f"{stats['loss_critic']:.4f}")
        return history

    def train(
        self,
        metrics_path: Optional[Path] = None,
        actor_path: Optional[Path] = None,
        critic_path: Optional[Path] = None,
        resume: bool = False,
        critic_pretrained: bool = False,
    ) -> List[Dict]:
        """Joint training; critic pre-training runs first unless resuming or `critic_pretrained` is set."""
        start = 0
        best = -1.0
        if resume and actor_path is not None and Path(f"{actor_path}.latest.npz").exists():
            start = self._restore(actor_path, critic_path)
            if Path(actor_path).exists():
                best = IntentionActor.load(Path(actor_path))[1].get("val_success", -1.0)
                logger.info(f"Best validation success so far {best:.3f}")
        elif not critic_pretrained:
            self.pretrain_critic(metrics_path)

        history = []
        bar = tqdm(range(start, self.cfg.iterations), desc="a2c", disable=not sys.stderr.isatty())
        for iteration in bar:
            rollouts = self.collect(iteration)
            stats = a2c_update(self.actor, self.critic, rollouts, self.cfg, self.actor_opt, self.critic_opt, iteration)
            record = {"iter": iteration + 1, **stats, "val_success": None}
            if (iteration + 1) % self.cfg.eval_every == 0 or iteration + 1 == self.cfg.iterations:
                record["val_success"] = self.validate()
                logger.info(
                    f"A2C iteration {iteration + 1}: actor {stats['loss_actor']:.4f}, critic {stats['loss_critic']:.4f}, "
                    f"validation success {record['val_success']:.3f}"
                )
                if record["val_success"] > best and actor_path is not None:
                    best = record["val_success"]
                    self.save(actor_path, critic_path, iteration + 1, val_success=best)
            if actor_path is not None and (iteration + 1) % self.cfg.checkpoint_every == 0:
                self.save(Path(f"{actor_path}.latest.npz"), Path(f"{critic_path}.latest.npz"), iteration + 1, True)
            if metrics_path is not None:
                append_record(metrics_path, record)
            history.append(record)
            bar.set_postfix(ret=f"{stats['mean_return']:.3f}")
        if actor_path is not None and best < 0:
            self.save(actor_path, critic_path, self.cfg.iterations)
        return history

    def save(
        self,
        actor_path: Path,
        critic_path: Path,
        iteration: int,
        with_optimizer: bool = False,
        val_success: Optional[float] = None,
    ) -> None:
        extra = {"iteration": iteration, "stack_features": self.env_cfg.stack_features}
        if val_success is not None:
            extra["val_success"] = val_success
        self.actor.save(actor_path, self.actor_opt if with_optimizer else None, extra)
        self.critic.save(critic_path, self.critic_opt if with_optimizer else None, extra)

    def _restore(self, actor_path: Path, critic_path: Path) -> int:
        actor, manifest, actor_state = IntentionActor.load(Path(f"{actor_path}.latest.npz"))
        critic, _, critic_state = IntentionCritic.load(Path(f"{critic_path}.latest.npz"))
        self.actor.params, self.critic.params = actor.params, critic.params
        if actor_state is not None:
            self.actor_opt.load_state(*actor_state)
        if critic_state is not None:
            self.critic_opt.load_state(*critic_state)
        logger.info(f"Resuming intention training at iteration {manifest.get('iteration', 0)}")
        return manifest.get("iteration", 0)
