import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from src.backend.classes import INTENT_KINDS, DatasetSplits, WorldGraph
from src.backend.world import FrequencyTable
from src.clients.execution import ExecutionPolicy
from src.clients.intention import IntentionActor, IntentionCritic
from src.config import CostConfig, EnvConfig, RunConfig
from src.training.a2c import IntentionTrainer

from .evaluation import TEST_CONDITIONS, VAL_CONDITIONS, PolicySpec, run_eval
from .metrics import CHECK_COLUMNS, METRICS_COLUMNS, DirectionalCheck, MetricsReport, directional_check, write_rows
from .workspace import Workspace

logger = logging.getLogger("intention_nav")

BASELINE_KINDS = ("no_assist", "dense_goal", "dense_cur", "dense_both")


@dataclass
class RunContext:
    """Everything a training or evaluation command reads from a workspace."""

    cfg: RunConfig
    ws: Workspace
    worlds: Dict[str, WorldGraph]
    splits: DatasetSplits
    freq: FrequencyTable
    exec_policy: Optional[ExecutionPolicy] = None

    @classmethod
    def load(cls, cfg: RunConfig, ws: Workspace, with_exec_policy: bool = True) -> "RunContext":
        worlds = ws.load_worlds()
        return cls(
            cfg=cfg,
            ws=ws,
            worlds={w.id: w for w in worlds},
            splits=ws.load_splits(worlds),
            freq=ws.load_frequencies(),
            exec_policy=ws.load_exec_policy() if with_exec_policy else None,
        )

    def validation_tasks(self):
        return [task for name in VAL_CONDITIONS for task in self.splits.tasks(name)]


def make_trainer(
    ctx: RunContext,
    env_cfg: EnvConfig,
    executor_kind: str = "learned",
    actor: Optional[IntentionActor] = None,
    critic: Optional[IntentionCritic] = None,
) -> IntentionTrainer:
    return IntentionTrainer(
        ctx.exec_policy,
        ctx.worlds,
        ctx.splits.train,
        ctx.validation_tasks(),
        env_cfg,
        ctx.cfg.model,
        ctx.cfg.a2c,
        ctx.freq,
        executor_kind=executor_kind,
        seed=ctx.cfg.seed,
        actor=actor,
        critic=critic,
    )


def train_variant(
    ctx: RunContext, tag: str = "", env_cfg: Optional[EnvConfig] = None, executor_kind: str = "learned", resume: bool = False
) -> Path:
    """Critic pre-training and A2C for one environment setting; returns the actor checkpoint path."""
    trainer = make_trainer(ctx, env_cfg or ctx.cfg.env, executor_kind)
    name = f"a2c_{tag}" if tag else "a2c"
    trainer.train(ctx.ws.metrics(name), ctx.ws.actor(tag), ctx.ws.critic(tag), resume=resume)
    return ctx.ws.actor(tag)


def ensure_variant(ctx: RunContext, tag: str, env_cfg: EnvConfig, executor_kind: str = "learned") -> Path:
    path = ctx.ws.actor(tag)
    if path.exists():
        logger.info(f"Reusing intention policy {path}")
        return path
    return train_variant(ctx, tag, env_cfg, executor_kind)


def evaluate_variant(
    ctx: RunContext,
    actor_path: Path,
    env_cfg: EnvConfig,
    name: str,
    executor: str = "learned",
    conditions: Sequence[str] = TEST_CONDITIONS,
) -> MetricsReport:
    spec = PolicySpec(
        name=name,
        executor=executor,
        intention="learned",
        actor_checkpoint=actor_path,
        cooperative=env_cfg.cooperative,
        stack_size=env_cfg.stack_size,
    )
    report, _ = run_eval(
        spec, ctx.splits, ctx.worlds, env_cfg, ctx.cfg.eval, conditions, ctx.freq, exec_policy=ctx.exec_policy
    )
    return report


def study_row(key: str, value, report: MetricsReport, conditions: Sequence[str]) -> Dict:
    row = {key: value}
    for condition in conditions:
        row[f"success_{condition}"] = round(report.success_rate(condition), 6)
    totals = [report.conditions[c] for c in conditions]
    episodes = sum(stats.episodes for stats in totals)
    for kind in INTENT_KINDS:
        count = sum(stats.actions[kind] for stats in totals)
        row[f"mean_{kind.value}"] = round(count / max(episodes, 1), 6)
    return row


def study_columns(key: str, conditions: Sequence[str]) -> List[str]:
    return [key] + [f"success_{c}" for c in conditions] + [f"mean_{kind.value}" for kind in INTENT_KINDS]


def cost_sweep(ctx: RunContext, costs: Sequence[float], conditions: Sequence[str] = TEST_CONDITIONS) -> List[Dict]:
    """One intention policy per uniform CUR/GOAL/SUB/DO cost."""
    rows = []
    for cost in costs:
        cost_cfg = CostConfig.uniform(cost, shaping_enabled=ctx.cfg.env.costs.shaping_enabled, H=ctx.cfg.env.costs.H)
        env_cfg = ctx.cfg.env.model_copy(update={"costs": cost_cfg})
        tag = f"cost{cost:g}"
        actor = ensure_variant(ctx, tag, env_cfg)
        report = evaluate_variant(ctx, actor, env_cfg, tag, conditions=conditions)
        rows.append(study_row("cost", cost, report, conditions))
    write_rows(ctx.ws.csv("cost_sweep"), study_columns("cost", conditions), rows)
    return rows


def stack_depth_study(
    ctx: RunContext, depths: Sequence[int] = (1, 2, 3), conditions: Sequence[str] = TEST_CONDITIONS
) -> List[Dict]:
    """One intention policy per goal-stack capacity; capacity 1 leaves no room for subgoals."""
    rows = []
    for depth in depths:
        env_cfg = ctx.cfg.env.model_copy(update={"stack_size": depth})
        tag = f"stack{depth}"
        actor = ensure_variant(ctx, tag, env_cfg)
        rows.append(
            study_row("stack_size", depth, evaluate_variant(ctx, actor, env_cfg, tag, conditions=conditions), conditions)
        )
    write_rows(ctx.ws.csv("stack_study"), study_columns("stack_size", conditions), rows)
    return rows


def _outcomes(report: MetricsReport, condition: str) -> List[int]:
    return report.conditions[condition].outcomes


def run_trend_suite(ctx: RunContext) -> List[DirectionalCheck]:
    """Trains the missing variants, evaluates them on the test conditions and checks the expected orderings."""
    cfg = ctx.cfg
    str_, obj, env = TEST_CONDITIONS
    resamples = cfg.eval.bootstrap_resamples

    learned = evaluate_variant(ctx, ensure_variant(ctx, "", cfg.env), cfg.env, "learned")
    skyline = evaluate_variant(ctx, ensure_variant(ctx, "skyline", cfg.env, "skyline"), cfg.env, "skyline", "skyline")
    uncooperative_env = cfg.env.model_copy(update={"cooperative": False})
    uncooperative = evaluate_variant(
        ctx, ensure_variant(ctx, "uncooperative", uncooperative_env), uncooperative_env, "uncooperative"
    )
    baselines = {}
    for kind in BASELINE_KINDS:
        baselines[kind], _ = run_eval(
            PolicySpec(name=kind, intention=kind), ctx.splits, ctx.worlds, cfg.env, cfg.eval, TEST_CONDITIONS,
            ctx.freq, exec_policy=ctx.exec_policy,
        )
    depth_reports = {}
    for depth in (1, 2, 3):
        depth_env = cfg.env.model_copy(update={"stack_size": depth})
        depth_reports[depth] = evaluate_variant(
            ctx, ensure_variant(ctx, f"stack{depth}", depth_env), depth_env, f"stack{depth}", conditions=(env,)
        )

    def check(name, a, b, condition, factor=1.0):
        return directional_check(name, _outcomes(a, condition), _outcomes(b, condition), factor, resamples, cfg.seed)

    checks = [
        check("learned_vs_no_assist_unseen_env", learned, baselines["no_assist"], env, factor=2.0),
        check("dense_both_vs_dense_goal_unseen_str", baselines["dense_both"], baselines["dense_goal"], str_),
        check("dense_both_vs_dense_cur_unseen_str", baselines["dense_both"], baselines["dense_cur"], str_),
        check("skyline_vs_learned_unseen_env", skyline, learned, env),
    ]
    checks += [check(f"cooperative_vs_uncooperative_{c[5:]}", learned, uncooperative, c) for c in (str_, obj, env)]
    checks += [
        check("stack2_vs_stack1_unseen_env", depth_reports[2], depth_reports[1], env),
        check("stack3_vs_stack2_unseen_env", depth_reports[3], depth_reports[2], env),
    ]
    write_rows(ctx.ws.csv("trend_checks"), CHECK_COLUMNS, [c.model_dump() for c in checks])
    reports = [learned, skyline, uncooperative, *baselines.values(), *depth_reports.values()]
    write_rows(ctx.ws.csv("trend_metrics"), METRICS_COLUMNS, [row for r in reports for row in r.rows()])
    logger.info(f"Trend suite: {sum(c.passed for c in checks)}/{len(checks)} checks pass")
    return checks
