import functools
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import click
import typer
from dotenv import load_dotenv
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table
from typing_extensions import Annotated

from src.backend.classes import SPLIT_NAMES, IntentKind
from src.backend.datasets import check_splits, generate_corpus, make_splits, write_splits, write_worlds
from src.backend.errors import IntentionNavError
from src.backend.records import dumps
from src.backend.world import FrequencyTable
from src.clients.execution import ExecutionPolicy
from src.clients.intention import IntentionActor, IntentionCritic
from src.clients.nn import Vocabulary
from src.config import CostConfig, EnvConfig, RunConfig, default_out_dir, dump_config, load_config
from src.harness.evaluation import TEST_CONDITIONS, VAL_CONDITIONS, PolicySpec, run_eval, run_skyline
from src.harness.experiments import (
    RunContext,
    cost_sweep,
    make_trainer,
    run_trend_suite,
    stack_depth_study,
    train_variant,
)
from src.harness.metrics import report_summary
from src.harness.traces import STEP_FIELDS, read_trace, recompute_success
from src.harness.workspace import Workspace
from src.training.dagger import dagger_pretrain
from src.training.gradcheck import TOLERANCE, grad_check_suite
from src.training.tuning import budget_counts, tune_budget_baseline

logger = logging.getLogger("intention_nav")
console = Console()

app = typer.Typer(add_completion=False, no_args_is_help=True, help="Intention-aware navigation: worlds, training, evaluation.")

ConfigOpt = Annotated[Optional[Path], typer.Option("--config", help="YAML run config")]
SeedOpt = Annotated[Optional[int], typer.Option("--seed", help="Overrides the config seed")]
OutOpt = Annotated[Optional[Path], typer.Option("--out", help="Output root (default $INTENTION_NAV_OUT or runs)")]
VerboseOpt = Annotated[bool, typer.Option("--verbose", "-v", help="Debug logging")]
TagOpt = Annotated[str, typer.Option("--tag", help="Name of the intention-policy variant")]


def setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def setup(config: Optional[Path], seed: Optional[int], out: Optional[Path], verbose: bool):
    setup_logging(verbose)
    cfg = load_config(config, {"seed": seed} if seed is not None else None)
    ws = Workspace(out or default_out_dir())
    return cfg, ws


def reports_errors(command):
    """One-line diagnostic and exit code 1 for the errors a user can cause."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except ValidationError as e:
            first = e.errors()[0]
            location = ".".join(str(part) for part in first["loc"])
            typer.echo(f"error: invalid configuration at {location}: {first['msg']}", err=True)
        except IntentionNavError as e:
            typer.echo(f"error: {e}", err=True)
        raise typer.Exit(code=1)

    return wrapper


def conditions_for(split: str) -> List[str]:
    if split == "val":
        return list(VAL_CONDITIONS)
    if split == "test":
        return list(TEST_CONDITIONS)
    if split not in SPLIT_NAMES:
        raise typer.BadParameter(f"unknown split {split}, expected val, test or one of {', '.join(SPLIT_NAMES)}")
    return [split]


def env_variant(cfg: RunConfig, uncooperative: bool, stack_size: Optional[int], cost: Optional[float]):
    env = cfg.env
    update = {}
    if uncooperative:
        update["cooperative"] = False
    if stack_size is not None:
        update["stack_size"] = stack_size
    if cost is not None:
        update["costs"] = CostConfig.uniform(cost, shaping_enabled=env.costs.shaping_enabled, H=env.costs.H)
    return EnvConfig.model_validate({**env.model_dump(), **update}) if update else env


def show_report(report, conditions) -> None:
    table = Table(title=report.policy)
    rows = [row for row in report.rows() if row["condition"] in conditions]
    columns = ["condition", "success_rate", "success_min", "success_max"] + [f"mean_{k.value}" for k in IntentKind]
    for column in columns:
        table.add_column(column)
    for row in rows:
        table.add_row(*(str(row[c]) for c in columns))
    console.print(table)


@app.callback()
def cli():
    load_dotenv()


@app.command("gen-world")
@reports_errors
def gen_world(config: ConfigOpt = None, seed: SeedOpt = None, out: OutOpt = None, verbose: VerboseOpt = False):
    """Generate the seeded house corpus and its object frequency table."""
    cfg, ws = setup(config, seed, out, verbose)
    worlds = generate_corpus(cfg.seed, cfg.corpus, cfg.world)
    write_worlds(ws.worlds, worlds)
    FrequencyTable.from_worlds(worlds).write(ws.frequencies)
    ws.config.write_text(dump_config(cfg))
    logger.info(f"Wrote {len(worlds)} worlds to {ws.worlds}")


@app.command("make-splits")
@reports_errors
def make_splits_command(config: ConfigOpt = None, seed: SeedOpt = None, out: OutOpt = None, verbose: VerboseOpt = False):
    """Sample the pretrain, train, validation and test task splits."""
    cfg, ws = setup(config, seed, out, verbose)
    worlds = ws.load_worlds()
    splits = make_splits(worlds, cfg.splits, cfg.seed, ws.load_frequencies())
    check_splits(splits, worlds)
    write_splits(ws.splits, splits)
    logger.info(f"Wrote splits to {ws.splits}")


@app.command()
@reports_errors
def pretrain(
    config: ConfigOpt = None,
    seed: SeedOpt = None,
    out: OutOpt = None,
    verbose: VerboseOpt = False,
    resume: Annotated[bool, typer.Option(help="Continue from the latest checkpoint")] = False,
):
    """Pre-train the execution policy by DAgger on dense descriptions."""
    cfg, ws = setup(config, seed, out, verbose)
    ctx = RunContext.load(cfg, ws, with_exec_policy=False)
    vocab = Vocabulary.default(cfg.world.room_names, cfg.world.object_names)
    policy = ExecutionPolicy(vocab, cfg.model.exec_hidden, cfg.model.init_scale, seed=cfg.seed)
    _, history = dagger_pretrain(
        policy,
        ctx.worlds,
        ctx.splits.pretrain,
        ctx.splits.pretrain_val,
        cfg.pretrain,
        cfg.seed,
        ws.exec_policy,
        ws.metrics("pretrain"),
        resume,
    )
    best = max((r["val_success"] for r in history if "val_success" in r), default=0.0)
    typer.echo(f"best pretrain-val success {best:.3f}")


@app.command("pretrain-critic")
@reports_errors
def pretrain_critic(
    config: ConfigOpt = None,
    seed: SeedOpt = None,
    out: OutOpt = None,
    verbose: VerboseOpt = False,
    tag: TagOpt = "",
    executor: Annotated[str, typer.Option(help="learned or skyline")] = "learned",
    uncooperative: bool = False,
    stack_size: Optional[int] = None,
    cost: Optional[float] = None,
):
    """Regress the critic on rollouts of the initial, frozen actor."""
    cfg, ws = setup(config, seed, out, verbose)
    ctx = RunContext.load(cfg, ws)
    trainer = make_trainer(ctx, env_variant(cfg, uncooperative, stack_size, cost), executor)
    history = trainer.pretrain_critic(ws.metrics(f"critic_{tag}" if tag else "critic"))
    trainer.save(ws.actor(tag), ws.critic(tag), 0)
    if history:
        typer.echo(f"critic loss {history[0]['loss_critic']:.4f} -> {history[-1]['loss_critic']:.4f}")


@app.command()
@reports_errors
def train(
    config: ConfigOpt = None,
    seed: SeedOpt = None,
    out: OutOpt = None,
    verbose: VerboseOpt = False,
    tag: TagOpt = "",
    executor: Annotated[str, typer.Option(help="learned or skyline")] = "learned",
    uncooperative: bool = False,
    stack_size: Optional[int] = None,
    cost: Annotated[Optional[float], typer.Option(help="Uniform CUR/GOAL/SUB/DO cost")] = None,
    resume: bool = False,
    pretrained_critic: Annotated[bool, typer.Option(help="Start from pretrain-critic's checkpoints")] = False,
):
    """Train the intention policy by advantage actor-critic."""
    cfg, ws = setup(config, seed, out, verbose)
    ctx = RunContext.load(cfg, ws)
    env_cfg = env_variant(cfg, uncooperative, stack_size, cost)
    if not pretrained_critic:
        train_variant(ctx, tag, env_cfg, executor, resume)
        return
    actor, _, _ = IntentionActor.load(ws.actor(tag))
    critic, _, _ = IntentionCritic.load(ws.critic(tag))
    trainer = make_trainer(ctx, env_cfg, executor, actor, critic)
    trainer.train(ws.metrics(f"a2c_{tag}" if tag else "a2c"), ws.actor(tag), ws.critic(tag), resume, critic_pretrained=True)


@app.command("eval")
@reports_errors
def eval_command(
    config: ConfigOpt = None,
    seed: SeedOpt = None,
    out: OutOpt = None,
    verbose: VerboseOpt = False,
    policy: Annotated[str, typer.Option(help="learned, or oracle for the oracle executor with the no-assistance rule")] = "learned",
    split: Annotated[str, typer.Option(help="val, test or a split name")] = "test",
    tag: TagOpt = "",
    executor: Annotated[str, typer.Option(help="learned, oracle or skyline")] = "learned",
    uncooperative: bool = False,
    stack_size: Optional[int] = None,
):
    """Evaluate an intention policy on the held-out conditions."""
    cfg, ws = setup(config, seed, out, verbose)
    conditions = conditions_for(split)
    if policy == "oracle":
        spec = PolicySpec(name="oracle", executor="oracle", intention="oracle")
    elif policy == "learned":
        spec = PolicySpec(
            name=f"learned_{tag}" if tag else "learned",
            executor=executor,
            actor_checkpoint=ws.actor(tag),
            cooperative=not uncooperative,
            stack_size=stack_size,
        )
    else:
        raise typer.BadParameter(f"unknown policy {policy}, expected learned or oracle")
    ctx = RunContext.load(cfg, ws, with_exec_policy=spec.executor != "oracle")
    report, _ = run_eval(
        spec, ctx.splits, ctx.worlds, cfg.env, cfg.eval, conditions, ctx.freq, ws.root / "traces" / spec.label,
        exec_policy=ctx.exec_policy,
    )
    report.write_csv(ws.csv(f"eval_{spec.label}"))
    show_report(report, conditions)
    typer.echo(report_summary(report, conditions))


@app.command()
@reports_errors
def baseline(
    config: ConfigOpt = None,
    seed: SeedOpt = None,
    out: OutOpt = None,
    verbose: VerboseOpt = False,
    kind: Annotated[str, typer.Option(help="no_assist, dense_goal, dense_cur, dense_both or budget_matched")] = "no_assist",
    split: Annotated[str, typer.Option(help="val, test or a split name")] = "test",
    tag: TagOpt = "",
):
    """Evaluate a rule-based intention baseline over the learned executor."""
    cfg, ws = setup(config, seed, out, verbose)
    conditions = conditions_for(split)
    ctx = RunContext.load(cfg, ws)
    budgets = None
    if kind == "budget_matched":
        learned, _ = run_eval(
            PolicySpec(name="learned", actor_checkpoint=ws.actor(tag)), ctx.splits, ctx.worlds, cfg.env, cfg.eval,
            VAL_CONDITIONS, ctx.freq, exec_policy=ctx.exec_policy,
        )
        totals = [learned.conditions[c] for c in VAL_CONDITIONS]
        episodes = max(sum(s.episodes for s in totals), 1)
        targets = {k: sum(s.actions[k] for s in totals) / episodes for k in IntentKind}
        tasks = ctx.validation_tasks()
        budgets, realized = tune_budget_baseline(
            targets,
            lambda b: budget_counts(b, ctx.worlds, tasks, ctx.exec_policy, cfg.env, ctx.freq, seed=cfg.seed),
        )
        (ws.root / "budgets.json").write_text(dumps({k.value: v for k, v in budgets.items()}))
    spec = PolicySpec(name=kind, intention=kind, budgets=budgets)
    report, _ = run_eval(
        spec, ctx.splits, ctx.worlds, cfg.env, cfg.eval, conditions, ctx.freq, ws.root / "traces" / kind,
        exec_policy=ctx.exec_policy,
    )
    report.write_csv(ws.csv(f"baseline_{kind}"))
    show_report(report, conditions)
    typer.echo(report_summary(report, conditions))


@app.command()
@reports_errors
def skyline(
    config: ConfigOpt = None,
    seed: SeedOpt = None,
    out: OutOpt = None,
    verbose: VerboseOpt = False,
    split: Annotated[str, typer.Option(help="val, test or a split name")] = "test",
    tag: TagOpt = "skyline",
):
    """Evaluate with subgoals fulfilled by the shortest-path oracle (train with --executor skyline first)."""
    cfg, ws = setup(config, seed, out, verbose)
    conditions = conditions_for(split)
    ctx = RunContext.load(cfg, ws)
    spec = PolicySpec(name="skyline", actor_checkpoint=ws.actor(tag), exec_checkpoint=ws.exec_policy)
    report, _ = run_skyline(spec, ctx.splits, ctx.worlds, cfg.env, cfg.eval, conditions, ctx.freq, ws.root / "traces" / "skyline")
    report.write_csv(ws.csv("skyline"))
    show_report(report, conditions)
    typer.echo(report_summary(report, conditions))


def parse_list(text: str, cast):
    try:
        return [cast(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise typer.BadParameter(f"cannot parse {text!r} as a comma-separated list")


@app.command()
@reports_errors
def sweep(
    config: ConfigOpt = None,
    seed: SeedOpt = None,
    out: OutOpt = None,
    verbose: VerboseOpt = False,
    costs: Annotated[str, typer.Option(help="Comma-separated uniform action costs")] = "0.5,0.2,0.1,0.05,0.01",
):
    """Train and evaluate one intention policy per action cost."""
    cfg, ws = setup(config, seed, out, verbose)
    rows = cost_sweep(RunContext.load(cfg, ws), parse_list(costs, float))
    for row in rows:
        typer.echo(json.dumps(row))


@app.command("stack-study")
@reports_errors
def stack_study(
    config: ConfigOpt = None,
    seed: SeedOpt = None,
    out: OutOpt = None,
    verbose: VerboseOpt = False,
    depths: Annotated[str, typer.Option(help="Comma-separated stack capacities")] = "1,2,3",
):
    """Train and evaluate one intention policy per goal-stack capacity."""
    cfg, ws = setup(config, seed, out, verbose)
    rows = stack_depth_study(RunContext.load(cfg, ws), parse_list(depths, int))
    for row in rows:
        typer.echo(json.dumps(row))


@app.command("trend-suite")
@reports_errors
def trend_suite(config: ConfigOpt = None, seed: SeedOpt = None, out: OutOpt = None, verbose: VerboseOpt = False):
    """Train missing variants and check the expected orderings between policies."""
    cfg, ws = setup(config, seed, out, verbose)
    checks = run_trend_suite(RunContext.load(cfg, ws))
    for check in checks:
        typer.echo(f"{'PASS' if check.passed else 'FAIL'} {check.name} [{check.low:.3f}, {check.high:.3f}]")


@app.command("trace-dump")
@reports_errors
def trace_dump(
    path: Annotated[Path, typer.Argument(help="Trace file (.jsonl or .jsonl.gz)")],
    config: ConfigOpt = None,
    seed: SeedOpt = None,
    out: OutOpt = None,
    verbose: VerboseOpt = False,
):
    """Print the steps of an episode trace."""
    setup(config, seed, out, verbose)
    trace = read_trace(path)
    table = Table(title=f"{trace.task_id} seed {trace.seed} in {trace.world_id}: {trace.start} -> {trace.goal}")
    for field in STEP_FIELDS:
        table.add_column(field)
    for step in trace.steps:
        values = step.model_dump(mode="json")
        table.add_row(*(str(values[field]) for field in STEP_FIELDS))
    console.print(table)
    typer.echo(
        f"success {trace.success} (recomputed {recompute_success(trace)}), final node {trace.final_node}, "
        f"raw {trace.total_raw:.4f}, shaped {trace.total_shaped:.4f}"
    )


@app.command("grad-check")
@reports_errors
def grad_check(
    config: ConfigOpt = None,
    seed: SeedOpt = None,
    out: OutOpt = None,
    verbose: VerboseOpt = False,
    samples: int = 64,
    eps: float = 1e-4,
):
    """Compare analytic gradients with central finite differences."""
    cfg, _ = setup(config, seed, out, verbose)
    errors = grad_check_suite(cfg.seed, eps, samples)
    worst = max(errors.values())
    for name, error in errors.items():
        typer.echo(f"{name}: {error:.3e}")
    typer.echo(f"max relative error {worst:.3e}")
    if worst > TOLERANCE:
        raise typer.Exit(code=1)


def main(argv: Optional[List[str]] = None) -> int:
    try:
        code = app(args=argv, prog_name="intention-nav", standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return 2
    except click.Abort:
        return 1
    return code if isinstance(code, int) else 0


if __name__ == "__main__":
    sys.exit(main())
