"""PCA-train command: fit a PCA prior to procedurally generated walks."""

import logging
from pathlib import Path
from typing import Optional

import typer

from moproc.app.utils import LOG_LEVEL_HELP, configure_log_level, exit_on_error
from moproc.configuration.defaults import DEFAULT_FPS, DEFAULT_FRAMES
from moproc.errors import UserError
from moproc.priors import PCAPrior, pca_prior_train, synth_walk_dataset

logger = logging.getLogger(__name__)


def cmd_pca_train(
    out: Path,
    n_motions: int = 256,
    n_components: int = 32,
    seed: int = 0,
    frames: int = DEFAULT_FRAMES,
    fps: float = DEFAULT_FPS,
) -> PCAPrior:
    """Train on `n_motions` synthetic walks and save the prior blob to `out`.

    Raises:
        UserError: If the dataset cannot support the requested components
    """
    dataset = synth_walk_dataset(n_motions, seed, n_frames=frames, fps=fps)
    try:
        prior = pca_prior_train(dataset, n_components)
    except ValueError as e:
        raise UserError(f"Cannot train PCA prior: {e}") from None
    prior.save(out)
    logger.info(f"Trained {prior.latent_dim}-dimensional PCA prior on {n_motions} walks")
    return prior


def pca_train(
    out: Path = typer.Option(Path("pca_prior.json"), "--out", "-o", help="Where to write the prior"),
    motions: int = typer.Option(256, "--motions", min=1, help="Number of synthetic walks"),
    components: int = typer.Option(32, "--components", min=1, help="Latent dimensions"),
    seed: int = typer.Option(0, "--seed", help="Dataset seed"),
    frames: int = typer.Option(DEFAULT_FRAMES, "--frames", min=2, help="Frames per walk"),
    fps: float = typer.Option(DEFAULT_FPS, "--fps", help="Frame rate"),
    log_level: Optional[str] = typer.Option(None, "--log-level", help=LOG_LEVEL_HELP),
) -> None:
    """Train a PCA motion prior on the built-in walk generator."""
    configure_log_level(log_level)
    with exit_on_error():
        prior = cmd_pca_train(out, motions, components, seed, frames, fps)
    typer.echo(f"Wrote {prior.latent_dim}-dimensional PCA prior to {out}; use --prior pca:{out}")
