import logging
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.backend.classes import INTENT_KINDS, IntentKind, Task, WorldGraph
from src.backend.world import FrequencyTable
from src.clients.agents import BudgetMatchedAgent
from src.clients.execution import ExecutionPolicy, make_executor
from src.config import EnvConfig

from .rollouts import RolloutPool, episode_rng, run_episode

logger = logging.getLogger("intention_nav")

TUNING_STREAM = 4
# offsets tried around the current value of one budget, coarse to fine
GRID = (-2.0, -1.0, -0.5, -0.25, -0.1, -0.05, 0.0, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0)

Budgets = Dict[IntentKind, float]
Measure = Callable[[Budgets], Budgets]


def mean_counts(rollouts) -> Budgets:
    totals = {kind: 0.0 for kind in INTENT_KINDS}
    for r in rollouts:
        for kind, count in r.trace.action_counts().items():
            totals[kind] += count
    return {kind: total / max(len(rollouts), 1) for kind, total in totals.items()}


def budget_counts(
    budgets: Budgets,
    worlds: Mapping[str, WorldGraph],
    tasks: Sequence[Task],
    exec_policy: Optional[ExecutionPolicy],
    env_cfg: EnvConfig,
    freq: Optional[FrequencyTable] = None,
    executor_kind: str = "learned",
    seed: int = 0,
    pool: Optional[RolloutPool] = None,
) -> Budgets:
    """Realized mean action counts of the budget-matched baseline on `tasks`, with fixed episode seeds."""
    pool = pool or RolloutPool(1)
    jobs = [
        (
            lambda task=task, index=j: run_episode(
                worlds[task.world],
                task,
                make_executor(executor_kind, exec_policy),
                BudgetMatchedAgent(budgets),
                env_cfg,
                freq,
                episode_rng(seed, 0, index, TUNING_STREAM),
                seed,
            )
        )
        for j, task in enumerate(tasks)
    ]
    return mean_counts(pool.map(jobs))


def within(realized: Budgets, targets: Budgets, tolerance: float) -> bool:
    return all(abs(realized[kind] - targets[kind]) <= tolerance for kind in targets)


def tune_budget_baseline(
    targets: Budgets, measure: Measure, tolerance: float = 0.05, max_rounds: int = 5
) -> Tuple[Budgets, Budgets]:
    """Coordinate-wise grid search of the budgets X_a until every realized mean count is within `tolerance`.

    Starts from the targets themselves. Returns (budgets, realized counts); the best budgets found are
    returned even when the tolerance is not met.
    """
    targets = {kind: float(targets.get(kind, 0.0)) for kind in INTENT_KINDS}
    budgets = dict(targets)
    realized = measure(budgets)
    for round_index in range(max_rounds):
        if within(realized, targets, tolerance):
            break
        for kind in INTENT_KINDS:
            best_gap, best_value, best_realized = abs(realized[kind] - targets[kind]), budgets[kind], realized
            for offset in GRID:
                value = max(budgets[kind] + offset, 0.0)
                if offset == 0.0 or np.isclose(value, budgets[kind]):
                    continue
                candidate = measure({**budgets, kind: value})
                gap = abs(candidate[kind] - targets[kind])
                if gap < best_gap:
                    best_gap, best_value, best_realized = gap, value, candidate
            budgets[kind], realized = best_value, best_realized
        logger.info(
            f"Budget tuning round {round_index + 1}: "
            + ", ".join(f"{k.value} {budgets[k]:.2f}->{realized[k]:.2f}" for k in INTENT_KINDS)
        )
    if not within(realized, targets, tolerance):
        logger.warning(f"Budget tuning stopped after {max_rounds} rounds outside the tolerance {tolerance}")
    return budgets, realized
