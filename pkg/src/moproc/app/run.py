"""Run command: optimize a task and write its artifacts."""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional

import typer
from pydantic import ValidationError

import moproc
from moproc.app.utils import (
    LOG_LEVEL_HELP,
    configure_log_level,
    exit_on_error,
    parse_params,
    parse_seeds,
    resolve_task,
)
from moproc.configuration.defaults import DEFAULT_FPS, DEFAULT_IK_REG_WEIGHT
from moproc.configuration.models import MetricsReport, OptimConfig, RunManifest, RunRequest
from moproc.configuration.resolver import ConfigResolver
from moproc.console import format_elapsed, metrics_table, optimization_progress, stdout_console
from moproc.errors import UserError
from moproc.kinematics import forward_kinematics, rest_motion
from moproc.metrics import constraint_error, evaluate_motion, write_report_csv, write_report_json
from moproc.optimizer import OptimResult, Progress, ik_baseline, restart_search
from moproc.plotting import plot_error_trace, plot_joint_heights, plot_root_path
from moproc.priors import build_prior
from moproc.relaxation import Relaxation, relax_and_minimize, resolve_relax
from moproc.serialization import (
    MANIFEST_FILE,
    MOTION_FILE,
    params_to_json,
    save_motion,
    write_bvh,
    write_manifest,
    write_positions_csv,
)
from moproc.tasks import TaskSpec

logger = logging.getLogger(__name__)

Baseline = Literal["none", "ik", "ik-reg"]


@dataclass
class RunOutcome:
    seed: int
    directory: Path
    manifest: RunManifest


def sample_name(task_id: str, seed: int) -> str:
    return f"{task_id}:seed{seed}"


def _load_task(request: RunRequest) -> TaskSpec:
    return resolve_task(request.task, request.program)


def _optimize_seed(
    task: TaskSpec,
    request: RunRequest,
    config: OptimConfig,
    frames: int,
    fps: float,
    baseline: Baseline,
    progress: Progress | None,
) -> OptimResult:
    program = task.program
    params = program.bind({**task.default_params, **request.params})
    relax = resolve_relax(request.relax, task.relax)

    def scorer(motion):
        return constraint_error(task, motion, params)

    if baseline != "none":
        w_reg = DEFAULT_IK_REG_WEIGHT if baseline == "ik-reg" else 0.0
        relaxation = Relaxation(relax, program, params) if relax.enabled else None
        initial = rest_motion(program.skeleton, frames, fps)
        return ik_baseline(
            program, initial, w_reg, params, config, relaxation=relaxation, scorer=scorer, progress=progress
        )
    prior = build_prior(request.prior, frames, program.skeleton, fps)
    if relax.enabled:
        return relax_and_minimize(prior, program, relax, params, config, scorer=scorer, progress=progress)
    return restart_search(prior, program, params, config, scorer=scorer, progress=progress)


def _write_artifacts(
    directory: Path,
    task: TaskSpec,
    request: RunRequest,
    config: OptimConfig,
    result: OptimResult,
    prior_label: str,
    frames: int,
    fps: float,
) -> RunManifest:
    directory.mkdir(parents=True, exist_ok=True)
    skeleton = task.program.skeleton
    params = task.program.bind({**task.default_params, **request.params})
    relax = resolve_relax(request.relax, task.relax)
    report = evaluate_motion(task, result.motion, params, sample=sample_name(task.id, config.seed))
    pos = forward_kinematics(skeleton, result.motion)

    manifest = RunManifest(
        task=task.id,
        program_hash=task.program.hash,
        program=task.source,
        prior=prior_label,
        seed=config.seed,
        config=config,
        relax=relax,
        params=params_to_json(params),
        text=request.text,
        frames=frames,
        fps=fps,
        skeleton=skeleton.id,
        restart=result.restart,
        final_error=result.final_error,
        wall_time=result.wall_time,
        metrics=report,
        moproc_version=moproc.__version__,
    )
    save_motion(directory / MOTION_FILE, result.motion, skeleton, meta={"task": task.id, "seed": config.seed})
    write_bvh(directory / "motion.bvh", result.motion, skeleton)
    write_positions_csv(directory / "positions.csv", pos)
    write_manifest(directory / MANIFEST_FILE, manifest)
    write_report_json(directory / "metrics.json", report)
    write_report_csv(directory / "metrics.csv", [report])
    plot_root_path(directory / "root_path.svg", pos)
    plot_joint_heights(directory / "joint_heights.svg", pos, skeleton)
    plot_error_trace(directory / "error_trace.svg", result.trace, result.term_labels, result.term_trace)
    logger.info(f"Wrote run artifacts to {directory}")
    return manifest


def cmd_run(request: RunRequest, baseline: Baseline = "none") -> list[RunOutcome]:
    """Optimize the requested task once per seed and write every artifact.

    A single seed writes into `request.out`; several seeds write into
    `out/seed-<n>/` concurrently plus a combined `out/metrics.csv`.

    Raises:
        UserError: For invalid programs, priors, configs or parameters
        NumericalError: If an optimization diverges
    """
    task = _load_task(request)
    base = ConfigResolver(request.config_path).resolve(task.metadata.config, request.overrides)
    frames = request.frames or task.frames
    fps = request.fps or DEFAULT_FPS
    prior_label = request.prior if baseline == "none" else baseline
    seeds = request.seeds
    multi = len(seeds) > 1
    runs_per_seed = base.restarts * base.steps

    with optimization_progress(runs_per_seed * len(seeds), f"{task.id} ({prior_label})") as advance:

        def one(seed: int) -> RunOutcome:
            config = base.model_copy(update={"seed": seed})
            result = _optimize_seed(task, request, config, frames, fps, baseline, advance)
            directory = request.out / f"seed-{seed}" if multi else request.out
            manifest = _write_artifacts(directory, task, request, config, result, prior_label, frames, fps)
            return RunOutcome(seed, directory, manifest)

        if multi:
            with ThreadPoolExecutor(max_workers=min(len(seeds), os.cpu_count() or 1)) as pool:
                outcomes = list(pool.map(one, seeds))
        else:
            outcomes = [one(seeds[0])]

    if multi:
        write_report_csv(request.out / "metrics.csv", [o.manifest.metrics for o in outcomes])
    return outcomes


def run(
    task: Optional[str] = typer.Option(None, "--task", "-t", help="Corpus task id (see list-tasks)"),
    program: Optional[Path] = typer.Option(None, "--program", "-p", help="Path to a .mopro program"),
    prior: str = typer.Option("dct:K=8", "--prior", help="identity, dct:K=<n> or pca:<path>"),
    baseline: str = typer.Option(
        "none", "--baseline", help="Optimize the motion directly instead of a prior latent: ik or ik-reg"
    ),
    lr: Optional[float] = typer.Option(None, "--lr", help="Adam learning rate"),
    steps: Optional[int] = typer.Option(None, "--steps", help="Optimization steps"),
    restarts: Optional[int] = typer.Option(None, "--restarts", help="Independent initial points per seed"),
    fast: Optional[bool] = typer.Option(None, "--fast/--no-fast", help="Decay the learning rate from max_lr to lr"),
    workers: Optional[int] = typer.Option(None, "--workers", help="Threads used for restarts"),
    relax: Optional[str] = typer.Option(None, "--relax", help="none, plane, line or endpoints (default: the task's)"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Random seed"),
    seeds: Optional[str] = typer.Option(None, "--seeds", help="Seed range a..b or list a,b,c; one run each"),
    out: Path = typer.Option(Path("runs"), "--out", "-o", help="Output directory"),
    frames: Optional[int] = typer.Option(None, "--frames", help="Motion length (default: the task's)"),
    fps: Optional[float] = typer.Option(None, "--fps", help=f"Frame rate (default: {DEFAULT_FPS:g})"),
    param: Optional[list[str]] = typer.Option(None, "--param", help="Override a task parameter: name=value or name=x,y,z"),
    text: Optional[str] = typer.Option(None, "--text", help="Text description, stored in the manifest"),
    config: Optional[Path] = typer.Option(None, "--config", help="TOML file with an [optim] table"),
    log_level: Optional[str] = typer.Option(None, "--log-level", help=LOG_LEVEL_HELP),
) -> None:
    """Optimize a task or program and write motion, manifest, metrics and plots."""
    configure_log_level(log_level)
    with exit_on_error():
        if baseline not in ("none", "ik", "ik-reg"):
            raise UserError(f"Unknown baseline '{baseline}'; choose none, ik or ik-reg")
        try:
            request = RunRequest(
                task=task,
                program=program,
                prior=prior,
                overrides={
                    "lr": lr,
                    "steps": steps,
                    "restarts": restarts,
                    "fast": fast,
                    "workers": workers,
                },
                config_path=config,
                out=out,
                seeds=parse_seeds(seeds, seed),
                relax=relax,
                params=parse_params(param),
                text=text,
                frames=frames,
                fps=fps,
            )
        except ValidationError as e:
            raise UserError(f"Invalid run request: {e}") from None
        outcomes = cmd_run(request, baseline)  # type: ignore[arg-type]

    for outcome in outcomes:
        m = outcome.manifest
        typer.echo(
            f"seed {m.seed}: restart {m.restart}, error {m.final_error:.4g}, "
            f"{format_elapsed(m.wall_time)} -> {outcome.directory}",
            err=True,
        )
    reports: list[MetricsReport] = [o.manifest.metrics for o in outcomes]
    stdout_console.print(metrics_table(reports))
