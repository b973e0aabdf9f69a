import numpy as np

from src.backend.classes import Description, DescriptionOrigin, DescriptionRole, Task, WorldGraph
from src.backend.world import action_description, dense_description, distance
from src.clients.execution import oracle_exec_action

MIN_KEPT_FEATURES = 5


def drop_features(d: Description, rng: np.random.Generator) -> Description:
    """Keeps m of the n feature sets, m ~ U[min(5, n), n], chosen uniformly; the rest are dropped."""
    n = d.size
    if n <= MIN_KEPT_FEATURES:
        return d
    m = int(rng.integers(MIN_KEPT_FEATURES, n + 1))
    kept = np.sort(rng.choice(n, size=m, replace=False))
    return Description(features=tuple(d.features[i] for i in kept), origin=d.origin)


def sample_goal_desc(task: Task, world: WorldGraph, rng: np.random.Generator) -> Description:
    """Goal description for a pre-training episode.

    Far goals get the dense goal description or the task request with equal chance. A goal that is the
    start or one of its neighbors may also be described by the next oracle action.
    """
    dense = dense_description(world, task.goal, DescriptionRole.GOAL, DescriptionOrigin.TASK_REQUEST)
    if distance(world, task.start, task.goal) > 1:
        return dense if rng.random() < 0.5 else task.goal_desc
    branch = int(rng.integers(3))
    if branch == 0:
        return dense
    if branch == 1:
        return task.goal_desc
    next_action = oracle_exec_action(world, task.start, task.goal)
    return action_description(world, task.start, next_action, DescriptionOrigin.TASK_REQUEST)
