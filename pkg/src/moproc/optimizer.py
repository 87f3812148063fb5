"""Latent optimization: Adam on a prior's latent code, restarts and IK baselines.

One run samples a starting latent from the prior, then repeatedly decodes
it, evaluates the error program on the decoded motion and takes an Adam
step along the gradient. Runs are deterministic given their seed, so a
restart search over seeds `seed, seed + 1, ...` can fan out on a thread
pool and still merge results reproducibly by restart index.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Callable, Mapping

import numpy as np

from moproc import autodiff as ad
from moproc.autodiff import ArrayLike, value_of
from moproc.configuration.defaults import DEFAULT_IK_REG_WEIGHT
from moproc.configuration.models import OptimConfig
from moproc.dsl.compiler import ErrorProgram, Evaluation, TermValue
from moproc.errors import NumericalError
from moproc.kinematics import MotionSequence
from moproc.priors import IdentityPrior, MotionPrior

if TYPE_CHECKING:
    from moproc.relaxation import Relaxation

logger = logging.getLogger(__name__)

SMOOTHNESS_LABEL = "smoothness"

Scorer = Callable[[MotionSequence], float]
Progress = Callable[[int], None]


class Adam:
    """Adam with bias-corrected moment estimates over one flat parameter vector."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: np.ndarray | None = None
        self.v: np.ndarray | None = None
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        """Return the updated parameters; `params` is not modified."""
        if self.m is None or self.v is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class OptimResult:
    """Outcome of one optimization run (or the winner of a restart search).

    Attributes:
        motion: Final motion, canonicalized and mapped back to the original
            constraint frame when relaxation was used
        z: Final latent code
        trace: Total error after each step, `steps + 1` entries
        term_labels: Labels of the traced terms
        term_trace: Weighted contribution of every term after each step
        wall_time: Seconds spent in this run
        restart: Index of this run within its restart search
        seed: Seed the starting latent was drawn with
        final_error: Program error of `motion` under the original parameters
        constraint_error: Selection score (task constraint error when a
            scorer is given, `final_error` otherwise)
        relaxed_params: Constraint parameters in effect at the end of a
            relaxed run, empty otherwise
        restart_errors: Constraint error of every restart, by index
    """

    motion: MotionSequence
    z: np.ndarray
    trace: list[float]
    term_labels: tuple[str, ...]
    term_trace: list[tuple[float, ...]]
    wall_time: float
    restart: int
    seed: int
    final_error: float
    constraint_error: float
    relaxed_params: dict[str, np.ndarray] = field(default_factory=dict)
    restart_errors: list[float] = field(default_factory=list)


def smoothness(motion: MotionSequence) -> ArrayLike:
    """Mean L2 norm of consecutive-frame differences of the pose parameters."""
    flat = motion.flatten()
    step = ad.sub(ad.getitem(flat, slice(1, None)), ad.getitem(flat, slice(None, -1)))
    return ad.mean(ad.norm2(step, axis=-1))


def _objective(
    program: ErrorProgram, motion: MotionSequence, params: Mapping[str, Any], w_reg: float
) -> Evaluation:
    evaluation = program.evaluate(motion, params)
    if w_reg == 0.0:
        return evaluation
    reg = smoothness(motion)
    return Evaluation(
        total=ad.add(evaluation.total, ad.mul(reg, w_reg)),
        per_term=evaluation.per_term + (TermValue(SMOOTHNESS_LABEL, w_reg, reg),),
    )


def _contributions(evaluation: Evaluation) -> tuple[float, ...]:
    return tuple(t.contribution for t in evaluation.per_term)


def minimize(
    objective: Callable[[ArrayLike], ArrayLike],
    z0: np.ndarray,
    config: OptimConfig | None = None,
) -> tuple[np.ndarray, list[float]]:
    """Adam on a bare scalar function of a flat vector.

    Returns:
        The final point and the objective after each step (`steps + 1` values)

    Raises:
        NumericalError: If the objective or its gradient becomes non-finite
    """
    config = config or OptimConfig()
    adam = Adam(config.beta1, config.beta2, config.eps)
    z = np.array(z0, dtype=float)
    trace = []
    for step in range(config.steps + 1):
        tape = ad.Tape()
        zv = tape.variable(z)
        out = objective(zv)
        value = float(value_of(out))
        trace.append(value)
        if not np.isfinite(value):
            raise NumericalError(step, {"objective": value})
        if step == config.steps:
            break
        grad = ad.gradient(out, [zv])[0]
        if not np.all(np.isfinite(grad)):
            raise NumericalError(step, {"objective": value})
        z = adam.step(z, grad, config.learning_rate(step))
    return z, trace


def _run(
    prior: MotionPrior,
    program: ErrorProgram,
    params: Mapping[str, Any],
    config: OptimConfig,
    seed: int,
    restart: int = 0,
    *,
    w_reg: float = 0.0,
    relaxation: Relaxation | None = None,
    scorer: Scorer | None = None,
    progress: Progress | None = None,
) -> OptimResult:
    """One sequential optimization run from the latent drawn with `seed`."""
    started = time.perf_counter()
    original = program.bind(params)
    active = dict(original)
    logger.info(
        f"Optimizing '{program.name}' with {prior.name} prior "
        f"(seed {seed}, {config.steps} steps, lr {config.lr})"
    )

    adam = Adam(config.beta1, config.beta2, config.eps)
    z = prior.sample_latent(seed, restart)
    trace: list[float] = []
    term_trace: list[tuple[float, ...]] = []
    labels: tuple[str, ...] = ()
    for step in range(config.steps + 1):
        if relaxation is not None and step % config.relax_interval == 0:
            active = relaxation.refit(prior.decode(z), active, step)

        tape = ad.Tape()
        zv = tape.variable(z)
        evaluation = _objective(program, prior.decode(zv), active, w_reg)
        value = evaluation.value
        labels = tuple(t.label for t in evaluation.per_term)
        trace.append(value)
        term_trace.append(_contributions(evaluation))
        if not np.isfinite(value):
            raise NumericalError(step, evaluation.blame())
        if step == config.steps:
            break

        grad = ad.gradient(evaluation.total, [zv])[0]
        if not np.all(np.isfinite(grad)):
            raise NumericalError(step, evaluation.blame())
        z = adam.step(z, grad, config.learning_rate(step))
        if progress is not None:
            progress(1)

    motion = prior.decode(z)
    if relaxation is not None:
        motion = relaxation.map_back(motion, active)
    motion = motion.canonicalized()

    final_error = program.evaluate(motion, original).value
    constraint_error = scorer(motion) if scorer is not None else final_error
    elapsed = time.perf_counter() - started
    logger.info(
        f"Finished seed {seed}: error {trace[0]:.4g} -> {trace[-1]:.4g}, "
        f"constraint error {constraint_error:.4g} in {elapsed:.2f}s"
    )
    return OptimResult(
        motion=motion,
        z=z,
        trace=trace,
        term_labels=labels,
        term_trace=term_trace,
        wall_time=elapsed,
        restart=restart,
        seed=seed,
        final_error=final_error,
        constraint_error=float(constraint_error),
        relaxed_params=dict(active) if relaxation is not None else {},
    )


def optimize(
    prior: MotionPrior,
    program: ErrorProgram,
    params: Mapping[str, Any] | None = None,
    config: OptimConfig | None = None,
    *,
    seed: int | None = None,
    scorer: Scorer | None = None,
    progress: Progress | None = None,
) -> OptimResult:
    """Minimize `program` over the latent code of `prior`, one run.

    The starting latent is `prior.sample_latent(seed)` (restart 0) with `seed`
    defaulting to `config.seed`; identical inputs give bit-identical traces.

    Raises:
        MissingParameterError: If a program parameter has no value
        NumericalError: If the error or its gradient becomes non-finite
    """
    config = config or OptimConfig()
    seed = config.seed if seed is None else seed
    result = _run(prior, program, params or {}, config, seed, scorer=scorer, progress=progress)
    result.restart_errors = [result.constraint_error]
    return result


def restart_search(
    prior: MotionPrior,
    program: ErrorProgram,
    params: Mapping[str, Any] | None = None,
    config: OptimConfig | None = None,
    *,
    w_reg: float = 0.0,
    relaxation: Relaxation | None = None,
    scorer: Scorer | None = None,
    progress: Progress | None = None,
) -> OptimResult:
    """Run `config.restarts` independent optimizations and keep the best.

    Restart `i` uses seed `config.seed + i`, so the candidate set for N
    restarts contains the one for fewer and the best constraint error never
    increases with N. Runs execute on `config.workers` threads; ties go to
    the lowest restart index.
    """
    config = config or OptimConfig()
    params = params or {}

    def one(i: int) -> OptimResult:
        return _run(
            prior,
            program,
            params,
            config,
            config.seed + i,
            i,
            w_reg=w_reg,
            relaxation=relaxation,
            scorer=scorer,
            progress=progress,
        )

    if config.workers == 1 or config.restarts == 1:
        results = [one(i) for i in range(config.restarts)]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(one, range(config.restarts)))

    best = min(results, key=lambda r: (r.constraint_error, r.restart))
    best.restart_errors = [r.constraint_error for r in results]
    if config.restarts > 1:
        logger.info(
            f"Restart {best.restart} of {config.restarts} wins with constraint error "
            f"{best.constraint_error:.4g}"
        )
    return best


def ik_baseline(
    program: ErrorProgram,
    initial_motion: MotionSequence,
    w_reg: float = DEFAULT_IK_REG_WEIGHT,
    params: Mapping[str, Any] | None = None,
    config: OptimConfig | None = None,
    *,
    relaxation: Relaxation | None = None,
    scorer: Scorer | None = None,
    progress: Progress | None = None,
) -> OptimResult:
    """Optimize the motion parameters directly, optionally with a smoothness term.

    `w_reg = 0` is plain IK and matches `optimize` with an identity prior
    started from `initial_motion`; `w_reg > 0` adds `w_reg` times the mean
    norm of consecutive-frame pose differences.
    """
    if w_reg < 0:
        raise ValueError(f"regularization weight must be nonnegative, got {w_reg}")
    prior = IdentityPrior(
        initial_motion.n_frames, program.skeleton, initial_motion.fps, initial=initial_motion
    )
    return restart_search(
        prior,
        program,
        params,
        config,
        w_reg=w_reg,
        relaxation=relaxation,
        scorer=scorer,
        progress=progress,
    )
