import csv
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from src.backend.classes import INTENT_KINDS, EpisodeTrace, IntentKind

logger = logging.getLogger("intention_nav")

METRICS_COLUMNS: Tuple[str, ...] = (
    "policy",
    "condition",
    "episodes",
    "success_rate",
    "success_min",
    "success_max",
    "mean_CUR",
    "mean_GOAL",
    "mean_SUB",
    "mean_DO",
    "mean_DONE",
    "mean_raw_cost",
    "mean_shaped_cost",
    "mean_steps",
)


def time_bin(t: int, length: int, bins: int) -> int:
    """Bin of step `t` (1-based) in an episode of `length` steps."""
    return min(int((t - 1) * bins / max(length, 1)), bins - 1)


def action_over_time(traces: Iterable[EpisodeTrace], bins: int = 10) -> Dict[IntentKind, List[int]]:
    """Per-kind action counts over `bins` equal slices of episode progress."""
    if bins < 1:
        raise ValueError(f"Histogram not built, bins must be positive, got {bins}")
    table = {kind: [0] * bins for kind in INTENT_KINDS}
    for trace in traces:
        for step in trace.steps:
            table[step.action][time_bin(step.t, len(trace.steps), bins)] += 1
    return table


def normalize_bins(table: Dict[IntentKind, List[int]]) -> Dict[IntentKind, List[float]]:
    return {kind: [c / max(sum(counts), 1) for c in counts] for kind, counts in table.items()}


class ConditionStats(BaseModel):
    """Sums over the episodes of one condition; every derived figure is computed from them."""

    episodes: int = 0
    successes: int = 0
    steps: int = 0
    actions: Dict[IntentKind, int] = Field(default_factory=lambda: {kind: 0 for kind in INTENT_KINDS})
    raw_cost: float = 0.0
    shaped_cost: float = 0.0
    time_bins: Dict[IntentKind, List[int]] = {}
    # per-episode success in evaluation order, for bootstrap intervals
    outcomes: List[int] = []
    seed_episodes: Dict[int, int] = {}
    seed_successes: Dict[int, int] = {}

    def add(self, trace: EpisodeTrace, bins: int) -> None:
        self.episodes += 1
        self.successes += int(trace.success)
        self.steps += len(trace.steps)
        for kind, count in trace.action_counts().items():
            self.actions[kind] += count
        self.raw_cost += trace.total_raw
        self.shaped_cost += trace.total_shaped
        if not self.time_bins:
            self.time_bins = {kind: [0] * bins for kind in INTENT_KINDS}
        for kind, counts in action_over_time([trace], bins).items():
            self.time_bins[kind] = [a + b for a, b in zip(self.time_bins[kind], counts)]
        self.outcomes.append(int(trace.success))
        self.seed_episodes[trace.seed] = self.seed_episodes.get(trace.seed, 0) + 1
        self.seed_successes[trace.seed] = self.seed_successes.get(trace.seed, 0) + int(trace.success)

    def merge(self, other: "ConditionStats") -> "ConditionStats":
        def add_dicts(a: Dict, b: Dict) -> Dict:
            return {key: a.get(key, 0) + b.get(key, 0) for key in sorted(set(a) | set(b))}

        kinds = set(self.time_bins) | set(other.time_bins)
        time_bins = {}
        for kind in INTENT_KINDS:
            if kind in kinds:
                a, b = self.time_bins.get(kind), other.time_bins.get(kind)
                time_bins[kind] = [x + y for x, y in zip(a, b)] if a and b else list(a or b)
        return ConditionStats(
            episodes=self.episodes + other.episodes,
            successes=self.successes + other.successes,
            steps=self.steps + other.steps,
            actions={kind: self.actions[kind] + other.actions[kind] for kind in INTENT_KINDS},
            raw_cost=self.raw_cost + other.raw_cost,
            shaped_cost=self.shaped_cost + other.shaped_cost,
            time_bins=time_bins,
            outcomes=self.outcomes + other.outcomes,
            seed_episodes=add_dicts(self.seed_episodes, other.seed_episodes),
            seed_successes=add_dicts(self.seed_successes, other.seed_successes),
        )

    @property
    def success_rate(self) -> float:
        return self.successes / self.episodes if self.episodes else 0.0

    def seed_rates(self) -> List[float]:
        return [self.seed_successes.get(seed, 0) / n for seed, n in sorted(self.seed_episodes.items()) if n]

    def mean_actions(self) -> Dict[IntentKind, float]:
        return {kind: count / self.episodes if self.episodes else 0.0 for kind, count in self.actions.items()}

    def row(self, policy: str, condition: str) -> Dict:
        rates = self.seed_rates() or [0.0]
        means = self.mean_actions()
        n = max(self.episodes, 1)
        return {
            "policy": policy,
            "condition": condition,
            "episodes": self.episodes,
            "success_rate": round(self.success_rate, 6),
            "success_min": round(min(rates), 6),
            "success_max": round(max(rates), 6),
            **{f"mean_{kind.value}": round(means[kind], 6) for kind in INTENT_KINDS},
            "mean_raw_cost": round(self.raw_cost / n, 6),
            "mean_shaped_cost": round(self.shaped_cost / n, 6),
            "mean_steps": round(self.steps / n, 6),
        }


class MetricsReport(BaseModel):
    """Per-condition sums; `merge` is associative so sharded evaluations combine exactly."""

    policy: str = ""
    bins: int = 10
    conditions: Dict[str, ConditionStats] = {}

    def add(self, condition: str, trace: EpisodeTrace) -> None:
        self.conditions.setdefault(condition, ConditionStats()).add(trace, self.bins)

    def merge(self, other: "MetricsReport") -> "MetricsReport":
        if self.bins != other.bins:
            raise ValueError(f"Reports not merged, bin counts differ ({self.bins} vs {other.bins})")
        conditions = {name: stats.model_copy(deep=True) for name, stats in self.conditions.items()}
        for name, stats in other.conditions.items():
            conditions[name] = conditions[name].merge(stats) if name in conditions else stats.model_copy(deep=True)
        return MetricsReport(policy=self.policy or other.policy, bins=self.bins, conditions=conditions)

    def success_rate(self, condition: str) -> float:
        return self.conditions[condition].success_rate if condition in self.conditions else 0.0

    def rows(self) -> List[Dict]:
        return [stats.row(self.policy, name) for name, stats in self.conditions.items()]

    def write_csv(self, path: Union[str, Path], append: bool = False) -> None:
        write_rows(path, METRICS_COLUMNS, self.rows(), append)


def write_rows(path: Union[str, Path], columns: Sequence[str], rows: Iterable[Dict], append: bool = False) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = not (append and path.exists())
    with path.open("a" if append else "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(columns), extrasaction="ignore")
        if header:
            writer.writeheader()
        for row in rows:
            writer.writerow({name: row.get(name, "") for name in columns})
    logger.debug(f"Wrote {path}")


def bootstrap_ci(
    values: Sequence[float], resamples: int = 1000, seed: int = 0, level: float = 0.95
) -> Tuple[float, float, float]:
    """(mean, low, high) of a percentile bootstrap interval of the mean."""
    if not len(values):
        return 0.0, 0.0, 0.0
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    if arr.size == 1:
        return mean, mean, mean
    rng = np.random.default_rng(seed)
    samples = arr[rng.integers(0, arr.size, size=(resamples, arr.size))].mean(axis=1)
    tail = (1.0 - level) / 2
    return mean, float(np.quantile(samples, tail)), float(np.quantile(samples, 1.0 - tail))


class DirectionalCheck(BaseModel):
    name: str
    a: float
    b: float
    factor: float = 1.0
    # bootstrap interval of mean(a) - factor * mean(b)
    low: float
    high: float
    passed: bool


CHECK_COLUMNS: Tuple[str, ...] = ("name", "a", "b", "factor", "low", "high", "passed")


def directional_check(
    name: str,
    a: Sequence[float],
    b: Sequence[float],
    factor: float = 1.0,
    resamples: int = 1000,
    seed: int = 0,
    level: float = 0.95,
) -> DirectionalCheck:
    """Whether mean(a) >= factor * mean(b), with a bootstrap interval of the gap from independent resamples."""
    a_arr, b_arr = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    mean_a = float(a_arr.mean()) if a_arr.size else 0.0
    mean_b = float(b_arr.mean()) if b_arr.size else 0.0
    low = high = mean_a - factor * mean_b
    if a_arr.size and b_arr.size:
        rng = np.random.default_rng(seed)
        resampled_a = a_arr[rng.integers(0, a_arr.size, size=(resamples, a_arr.size))].mean(axis=1)
        resampled_b = b_arr[rng.integers(0, b_arr.size, size=(resamples, b_arr.size))].mean(axis=1)
        gaps = resampled_a - factor * resampled_b
        tail = (1.0 - level) / 2
        low, high = float(np.quantile(gaps, tail)), float(np.quantile(gaps, 1.0 - tail))
    check = DirectionalCheck(
        name=name, a=mean_a, b=mean_b, factor=factor, low=low, high=high, passed=mean_a >= factor * mean_b
    )
    logger.info(
        f"Check {name}: {mean_a:.3f} vs {factor:g} x {mean_b:.3f}, gap interval [{low:.3f}, {high:.3f}], "
        f"{'pass' if check.passed else 'fail'}"
    )
    return check


def merge_reports(reports: Sequence[MetricsReport]) -> MetricsReport:
    if not reports:
        return MetricsReport()
    merged = reports[0]
    for report in reports[1:]:
        merged = merged.merge(report)
    return merged


def report_summary(report: MetricsReport, conditions: Optional[Sequence[str]] = None) -> str:
    names = conditions or list(report.conditions)
    parts = []
    for name in names:
        stats = report.conditions.get(name)
        if stats is None:
            continue
        rates = stats.seed_rates() or [0.0]
        parts.append(f"{name} {stats.success_rate:.3f} [{min(rates):.3f}, {max(rates):.3f}]")
    return "; ".join(parts)
