import logging
import sys
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from src.backend.classes import DescriptionRole, FeatureSet, Task, WorldGraph
from src.backend.records import append_record
from src.backend.world import action_feature, dense_description, legal_actions
from src.clients.execution import ExecStep, ExecutionPolicy, oracle_exec_action
from src.clients.nn import Adam, check_finite
from src.config import PretrainConfig

from .samplers import drop_features, sample_goal_desc

logger = logging.getLogger("intention_nav")


def collect_episode(
    policy: ExecutionPolicy,
    world: WorldGraph,
    task: Task,
    rng: np.random.Generator,
    expert: bool,
    horizon: int,
) -> List[ExecStep]:
    """One pre-training episode, every visited node labelled with the oracle action.

    The expert drives when `expert` is set, otherwise the learner's most probable action does.
    """
    goal_desc = sample_goal_desc(task, world, rng)
    node = task.start
    prev: Optional[FeatureSet] = None
    belief = policy.initial_belief()
    steps = []
    for _ in range(horizon):
        d_s = drop_features(dense_description(world, node, DescriptionRole.CURRENT_STATE), rng)
        legal = legal_actions(world, node)
        feats = [action_feature(world, node, a) for a in legal]
        label = oracle_exec_action(world, node, task.goal)
        steps.append(ExecStep(d_s=d_s, a_prev=prev, d_g=goal_desc, legal=feats, label=legal.index(label)))
        if expert:
            chosen = label
        else:
            belief = policy.belief_update(belief, d_s, prev)
            chosen = legal[int(np.argmax(policy.action_dist(belief, goal_desc, feats)))]
        if chosen.is_done:
            break
        prev = action_feature(world, node, chosen)
        node = chosen.target
    return steps


def run_greedy(policy: ExecutionPolicy, world: WorldGraph, task: Task, horizon: int) -> Tuple[bool, int]:
    """(success, final node) of the learner alone on dense descriptions with the task's goal description."""
    node = task.start
    prev: Optional[FeatureSet] = None
    belief = policy.initial_belief()
    for _ in range(horizon):
        belief = policy.belief_update(belief, dense_description(world, node, DescriptionRole.CURRENT_STATE), prev)
        legal = legal_actions(world, node)
        feats = [action_feature(world, node, a) for a in legal]
        chosen = legal[int(np.argmax(policy.action_dist(belief, task.goal_desc, feats)))]
        if chosen.is_done:
            return node == task.goal, node
        prev = feats[legal.index(chosen)]
        node = chosen.target
    return False, node


def pretrain_validation(
    policy: ExecutionPolicy, worlds: Mapping[str, WorldGraph], tasks: Sequence[Task], horizon: int
) -> float:
    if not tasks:
        return 0.0
    return float(np.mean([run_greedy(policy, worlds[task.world], task, horizon)[0] for task in tasks]))


def dagger_pretrain(
    policy: ExecutionPolicy,
    worlds: Mapping[str, WorldGraph],
    tasks: Sequence[Task],
    val_tasks: Sequence[Task],
    cfg: PretrainConfig,
    seed: int = 0,
    checkpoint_path: Optional[Path] = None,
    metrics_path: Optional[Path] = None,
    resume: bool = False,
) -> Tuple[ExecutionPolicy, List[Dict]]:
    """Online DAgger: the expert drives for the first `expert_epochs` passes, the learner afterwards.

    Returns the policy restored to its best validation checkpoint and the metrics history.
    """
    if not tasks:
        raise ValueError("Pre-training not started, the pretrain split is empty")
    optimizer = Adam(policy.params, lr=cfg.lr)
    start = 0
    best_success = -1.0
    best_params = None
    latest = Path(f"{checkpoint_path}.latest.npz") if checkpoint_path is not None else None
    if resume and latest is not None and latest.exists():
        loaded, manifest, optimizer_state = ExecutionPolicy.load(latest)
        policy.params = loaded.params
        if optimizer_state is not None:
            optimizer.load_state(*optimizer_state)
        start = manifest.get("iteration", 0)
        if Path(checkpoint_path).exists():
            best, best_manifest, _ = ExecutionPolicy.load(checkpoint_path)
            best_success = best_manifest.get("val_success", -1.0)
            best_params = best.params
        logger.info(f"Resuming pre-training at iteration {start}, best validation success {best_success:.3f}")

    expert_episodes = cfg.expert_epochs * len(tasks)
    history = []
    bar = tqdm(range(start, cfg.iterations), desc="pretrain", disable=not sys.stderr.isatty())
    for iteration in bar:
        rng = np.random.default_rng([seed, iteration])
        expert = iteration * cfg.batch_size < expert_episodes
        picked = rng.integers(len(tasks), size=cfg.batch_size)
        batch = [
            collect_episode(policy, worlds[tasks[i].world], tasks[i], rng, expert, cfg.horizon) for i in picked
        ]
        loss, grads = policy.loss_and_grads(batch)
        check_finite({"loss": loss, **grads}, iteration)
        optimizer.step(policy.params, grads)

        record = {"iter": iteration + 1, "loss": loss, "expert": expert}
        if (iteration + 1) % cfg.eval_every == 0 or iteration + 1 == cfg.iterations:
            success = pretrain_validation(policy, worlds, val_tasks, cfg.horizon)
            record["val_success"] = success
            if success > best_success:
                best_success = success
                best_params = {name: value.copy() for name, value in policy.params.items()}
                if checkpoint_path is not None:
                    policy.save(checkpoint_path, extra={"iteration": iteration + 1, "val_success": success})
            logger.info(f"Pre-training iteration {iteration + 1}: loss {loss:.4f}, validation success {success:.3f}")
        if latest is not None and (iteration + 1) % cfg.checkpoint_every == 0:
            policy.save(latest, optimizer, extra={"iteration": iteration + 1})
        if metrics_path is not None:
            append_record(metrics_path, record)
        history.append(record)
        bar.set_postfix(loss=f"{loss:.4f}")

    if best_params is not None:
        policy.params = best_params
    return policy, history
