"""Lower typed programs to differentiable error functions.

Each typed expression becomes a closure over an `EvalContext`. Values are
either per-frame, with shape (N,) for scalars and (N, 3) for vectors, or
constant, with shape () or (3,). Predicates lower to per-frame errors:

    a == b   |a - b| (scalars) or ||a - b||_n (vectors, n = 2 by default)
    a < b    max(a - b, 0)
    a > b    max(b - a, 0)
    far(E, d)  max(d - E, 0)
    p and q  E_p + E_q
    p or q   min(E_p, E_q)
    when (c) p   E_p where the detached E_c is exactly 0, else 0

A term's error is its weight times the mean of its per-frame error over the
selected frames; the program total is the sum of the terms.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from moproc import atoms
from moproc import autodiff as ad
from moproc.autodiff import ArrayLike, value_of
from moproc.dsl import ast
from moproc.dsl.diagnostics import Span
from moproc.dsl.printer import pretty_print
from moproc.dsl.typecheck import SCALAR, ParamSpec, TypedExpr, TypedPred, TypedProgram
from moproc.errors import EvaluationError, MissingParameterError, ParameterTypeError
from moproc.kinematics import MotionSequence, PositionSequence, Skeleton, finite_difference, forward_kinematics

logger = logging.getLogger(__name__)


@dataclass
class EvalContext:
    pos: ArrayLike
    n_frames: int
    fps: float
    params: Mapping[str, ArrayLike]
    skeleton: Skeleton
    cache: dict[str, ArrayLike] = field(default_factory=dict)


Closure = Callable[[EvalContext], Any]


@dataclass(frozen=True)
class CompiledTerm:
    label: str
    selector: atoms.FrameSelector
    weight: float
    error: Closure = field(repr=False)
    span: Span = field(default=ast.NO_SPAN, repr=False)


@dataclass(frozen=True)
class TermValue:
    """One term of an evaluation: its unweighted error and its weight."""

    label: str
    weight: float
    error: ArrayLike

    @property
    def contribution(self) -> float:
        return self.weight * float(value_of(self.error))


@dataclass(frozen=True)
class Evaluation:
    total: ArrayLike
    per_term: tuple[TermValue, ...]

    @property
    def value(self) -> float:
        return float(value_of(self.total))

    def blame(self) -> dict[str, float]:
        """Weighted contribution of every term, keyed by label."""
        return {t.label: t.contribution for t in self.per_term}

    def as_dict(self) -> dict[str, Any]:
        return {
            "total": self.value,
            "per_term": [
                {"label": t.label, "weight": t.weight, "error": float(value_of(t.error))}
                for t in self.per_term
            ],
        }


@dataclass(frozen=True)
class ErrorProgram:
    """A compiled task: parameter table plus weighted constraint terms.

    Immutable; one instance can be evaluated from several threads at once.
    """

    name: str
    params: tuple[ParamSpec, ...]
    terms: tuple[CompiledTerm, ...]
    skeleton: Skeleton = field(repr=False)
    source: ast.SourceProgram = field(repr=False)

    @property
    def text(self) -> str:
        return pretty_print(self.source)

    @property
    def hash(self) -> str:
        return program_hash(self.source)

    def param(self, name: str) -> ParamSpec:
        for spec in self.params:
            if spec.name == name:
                return spec
        raise KeyError(name)

    def bind(self, params: Mapping[str, Any] | None = None) -> dict[str, np.ndarray]:
        """Complete `params` with declared defaults and check shapes.

        Undeclared names are ignored with a warning.

        Raises:
            MissingParameterError: If a parameter has neither value nor default
            ParameterTypeError: If a value has the wrong shape
        """
        params = dict(params or {})
        declared = {spec.name for spec in self.params}
        for extra in sorted(set(params) - declared):
            logger.warning(f"Ignoring parameter '{extra}': task '{self.name}' does not declare it")
        bound = {}
        for spec in self.params:
            if spec.name in params:
                value = params[spec.name]
            elif spec.default is not None:
                value = spec.default
            else:
                raise MissingParameterError(spec.name)
            if ad.is_var(value):
                shape = value.shape
            else:
                try:
                    value = np.asarray(value, dtype=float)
                except (TypeError, ValueError):
                    raise ParameterTypeError(spec.name, spec.kind) from None
                shape = value.shape
            if shape != spec.shape:
                raise ParameterTypeError(spec.name, spec.kind)
            bound[spec.name] = value
        return bound

    def evaluate(
        self, motion: MotionSequence | PositionSequence, params: Mapping[str, Any] | None = None
    ) -> Evaluation:
        return evaluate(self, motion, params)


def program_hash(source: ast.SourceProgram) -> str:
    """First 8 hex digits of the sha1 of the canonical program text."""
    return hashlib.sha1(pretty_print(source).encode("utf-8")).hexdigest()[:8]


# -- expressions -------------------------------------------------------------


def _located(fn: Closure, span: Span) -> Closure:
    if span == ast.NO_SPAN:
        return fn

    def run(ctx: EvalContext) -> Any:
        try:
            return fn(ctx)
        except EvaluationError as e:
            raise e.with_span(span) from None

    return run


def _as_column(x: ArrayLike) -> ArrayLike:
    return ad.reshape(x, np.shape(value_of(x)) + (1,))


def _scale(a: ArrayLike, a_type: str, b: ArrayLike, b_type: str) -> tuple[ArrayLike, ArrayLike]:
    """Give a scalar operand a trailing axis when combined with a vector."""
    if a_type == SCALAR and b_type != SCALAR:
        a = _as_column(a)
    elif b_type == SCALAR and a_type != SCALAR:
        b = _as_column(b)
    return a, b


def _per_frame(x: ArrayLike, shape: tuple[int, ...]) -> ArrayLike:
    if np.shape(value_of(x)) == shape:
        return x
    return ad.add(x, np.zeros(shape))


def _pad_difference(x: ArrayLike, k: int, fps: float) -> ArrayLike:
    try:
        d = finite_difference(x, k, fps)
    except ValueError as e:
        raise EvaluationError(str(e)) from None
    tail = ad.getitem(d, [-1] * k)
    return ad.concatenate([d, tail], axis=0)


def _unary(typed: TypedExpr, fn: Callable[..., ArrayLike]) -> Closure:
    args = [compile_expr(a) for a in typed.args]
    return lambda ctx: fn(*(a(ctx) for a in args))


def _arith(typed: TypedExpr) -> Closure:
    left, right = (compile_expr(a) for a in typed.args)
    lt, rt = (a.type for a in typed.args)
    op = {"add": ad.add, "sub": ad.sub, "mul": ad.mul, "div": ad.div}[typed.op]

    def run(ctx: EvalContext) -> ArrayLike:
        a, b = _scale(left(ctx), lt, right(ctx), rt)
        return op(a, b)

    return run


def _vec(typed: TypedExpr) -> Closure:
    parts = [compile_expr(a) for a in typed.args]

    def run(ctx: EvalContext) -> ArrayLike:
        values = [p(ctx) for p in parts]
        shape = np.broadcast_shapes(*(np.shape(value_of(v)) for v in values))
        return ad.stack([_per_frame(v, shape) for v in values], axis=-1)

    return run


def _diff(typed: TypedExpr) -> Closure:
    (operand,) = (compile_expr(a) for a in typed.args)
    k = typed.data
    return lambda ctx: _pad_difference(operand(ctx), k, ctx.fps)


def _component(typed: TypedExpr) -> Closure:
    (operand,) = (compile_expr(a) for a in typed.args)
    axis = typed.data
    return lambda ctx: ad.component(operand(ctx), axis)


def _center_of_mass(ctx: EvalContext) -> ArrayLike:
    if "com" not in ctx.cache:
        ctx.cache["com"] = atoms.center_of_mass(ctx.skeleton, ctx.pos)
    return ctx.cache["com"]


def _support(typed: TypedExpr) -> Closure:
    indices = list(typed.data)
    return lambda ctx: atoms.SupportRegion(centers=ad.getitem(ctx.pos, (slice(None), indices)))


def _support_distance(typed: TypedExpr) -> Closure:
    point, region = (compile_expr(a) for a in typed.args)

    def run(ctx: EvalContext) -> ArrayLike:
        p = _per_frame(point(ctx), (ctx.n_frames, 3))
        return atoms.support_distance(ad.getitem(p, (slice(None), [0, 2])), region(ctx))

    return run


def _primitive(cls: type) -> Callable[[TypedExpr], Closure]:
    return lambda typed: _unary(typed, cls)


def _distance(typed: TypedExpr) -> Closure:
    return _unary(typed, atoms.geometric_distance)


_COMPILERS: dict[str, Callable[[TypedExpr], Closure]] = {
    "const": lambda t: (lambda value: lambda ctx: value)(np.asarray(t.data, dtype=float)),
    "param": lambda t: lambda ctx: ctx.params[t.data],
    "joint_pos": lambda t: lambda ctx: ad.getitem(ctx.pos, (slice(None), t.data)),
    "bone": lambda t: lambda ctx: ad.sub(
        ad.getitem(ctx.pos, (slice(None), t.data[0])), ad.getitem(ctx.pos, (slice(None), t.data[1]))
    ),
    "com": lambda t: _center_of_mass,
    "diff": _diff,
    "component": _component,
    "neg": lambda t: _unary(t, ad.neg),
    "add": _arith,
    "sub": _arith,
    "mul": _arith,
    "div": _arith,
    "vec": _vec,
    "dist": lambda t: _unary(t, atoms.distance_to_point),
    "midpoint": lambda t: _unary(t, lambda a, b: ad.mul(ad.add(a, b), 0.5)),
    "dot": lambda t: _unary(t, ad.dot),
    "norm": lambda t: _unary(t, ad.norm2),
    "angle_to": lambda t: _unary(t, atoms.direction_cosine_error),
    "plane": _primitive(atoms.Plane),
    "line": _primitive(atoms.Line),
    "sphere": _primitive(atoms.Sphere),
    "halfspace": _primitive(atoms.Halfspace),
    "support": _support,
    "dist_plane": _distance,
    "dist_line": _distance,
    "dist_sphere": _distance,
    "dist_halfspace": _distance,
    "dist_support": _support_distance,
}


def compile_expr(typed: TypedExpr) -> Closure:
    try:
        builder = _COMPILERS[typed.op]
    except KeyError:
        raise ValueError(f"no lowering for operation '{typed.op}'") from None
    return _located(builder(typed), typed.span)


# -- predicates --------------------------------------------------------------


def compile_pred(pred: TypedPred) -> Closure:
    """Lower a predicate to a closure returning its per-frame error."""
    if pred.op in ("eq", "lt", "gt", "far"):
        left, right = (compile_expr(a) for a in pred.args)
        vector = pred.args[0].type != SCALAR

        def compare(ctx: EvalContext) -> ArrayLike:
            a, b = left(ctx), right(ctx)
            if pred.op == "eq":
                difference = ad.sub(a, b)
                if vector:
                    return ad.pnorm(difference, pred.norm or 2.0)
                return ad.absolute(difference)
            if pred.op == "lt":
                return atoms.lt(a, b)
            if pred.op == "gt":
                return atoms.gt(a, b)
            return atoms.far(a, b)

        return _located(compare, pred.span)

    left, right = (compile_pred(p) for p in pred.args)
    if pred.op == "and":
        return lambda ctx: atoms.and_(left(ctx), right(ctx))
    if pred.op == "or":
        return lambda ctx: atoms.or_(left(ctx), right(ctx))
    if pred.op == "when":

        def guarded(ctx: EvalContext) -> ArrayLike:
            condition = value_of(left(ctx))
            body = right(ctx)
            shape = np.broadcast_shapes(condition.shape, np.shape(value_of(body)))
            mask = np.broadcast_to(condition == 0.0, shape)
            return ad.where(mask, _per_frame(body, shape), 0.0)

        return guarded
    raise ValueError(f"no lowering for predicate '{pred.op}'")


def compile_program(typed: TypedProgram) -> ErrorProgram:
    """Lower every term of a typed program."""
    terms = tuple(
        CompiledTerm(t.label, t.selector, t.weight, compile_pred(t.pred), t.span) for t in typed.terms
    )
    return ErrorProgram(
        name=typed.name,
        params=typed.params,
        terms=terms,
        skeleton=typed.skeleton,
        source=typed.source,
    )


def _term_error(term: CompiledTerm, ctx: EvalContext) -> ArrayLike:
    per_frame = _per_frame(term.error(ctx), (ctx.n_frames,))
    try:
        return atoms.keyframe(per_frame, term.selector, ctx.n_frames)
    except EvaluationError as e:
        if term.span == ast.NO_SPAN:
            raise
        raise e.with_span(term.span) from None


def evaluate(
    program: ErrorProgram,
    motion: MotionSequence | PositionSequence,
    params: Mapping[str, Any] | None = None,
) -> Evaluation:
    """Total and per-term error of `motion` under `program`.

    Zero-weight terms are reported but do not enter the total.

    Raises:
        MissingParameterError: If a parameter has no value and no default
        ParameterTypeError: If a parameter value has the wrong shape
        EvaluationError: If an atom cannot be evaluated (span attached)
    """
    bound = program.bind(params)
    if isinstance(motion, MotionSequence):
        positions = forward_kinematics(program.skeleton, motion)
    else:
        positions = motion
    ctx = EvalContext(
        pos=positions.pos,
        n_frames=positions.n_frames,
        fps=positions.fps,
        params=bound,
        skeleton=program.skeleton,
    )
    total: ArrayLike = np.asarray(0.0)
    per_term = []
    for term in program.terms:
        error = _term_error(term, ctx)
        if term.weight == 0.0:
            per_term.append(TermValue(term.label, term.weight, value_of(error)))
            continue
        per_term.append(TermValue(term.label, term.weight, error))
        total = ad.add(total, ad.mul(error, term.weight))
    return Evaluation(total=total, per_term=tuple(per_term))
