"""Name resolution, typing and loop unrolling.

`typecheck` turns a `SourceProgram` into a `TypedProgram`: joint names are
bound to skeleton indices, every expression gets a type (scalar, vec3, a
joint handle or a geometric primitive), `let` bindings are inlined, `for`
loops are unrolled and weights are folded to constants. All problems found
are reported together as one `DiagnosticError`.
"""

from __future__ import annotations

import difflib
import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from moproc import atoms
from moproc.dsl import ast
from moproc.dsl.diagnostics import Diagnostic, Span, error
from moproc.dsl.printer import format_constraint
from moproc.errors import DiagnosticError
from moproc.kinematics import Skeleton

logger = logging.getLogger(__name__)

SCALAR, VEC3, JOINT = "scalar", "vec3", "joint"
PRIMITIVE_TYPES = ("plane", "line", "sphere", "halfspace", "support")

ATTR_AXES = {"x": 0, "y": 1, "z": 2}
ATTR_ORDERS = {"vel": 1, "acc": 2}


@dataclass(frozen=True)
class TypedExpr:
    """An expression after typing.

    Attributes:
        op: Operation name, dispatched on by the compiler
        type: scalar, vec3, joint or a primitive type
        args: Typed operands
        data: Operation payload (constant value, joint index, axis, ...)
        varying: Depends on the motion (one value per frame)
        uses_params: Depends on a task parameter
    """

    op: str
    type: str
    args: tuple[TypedExpr, ...] = ()
    data: Any = None
    span: Span = field(default=ast.NO_SPAN, compare=False, repr=False)
    varying: bool = False
    uses_params: bool = False

    @property
    def is_constant(self) -> bool:
        return not (self.varying or self.uses_params)


@dataclass(frozen=True)
class TypedPred:
    """A predicate: `eq`, `lt`, `gt`, `far`, `and`, `or` or `when`."""

    op: str
    args: tuple[Any, ...]
    norm: float | None = None
    span: Span = field(default=ast.NO_SPAN, compare=False, repr=False)


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str
    default: np.ndarray | None = field(default=None, compare=False)
    span: Span = field(default=ast.NO_SPAN, compare=False, repr=False)

    @property
    def shape(self) -> tuple[int, ...]:
        return () if self.kind == "float" else (3,)


@dataclass(frozen=True)
class TypedTerm:
    label: str
    selector: atoms.FrameSelector
    pred: TypedPred
    weight: float
    span: Span = field(default=ast.NO_SPAN, compare=False, repr=False)


@dataclass(frozen=True)
class TypedProgram:
    name: str
    params: tuple[ParamSpec, ...]
    terms: tuple[TypedTerm, ...]
    skeleton: Skeleton = field(compare=False, repr=False)
    source: ast.SourceProgram = field(compare=False, repr=False)


_ERROR = TypedExpr("error", "error")


# -- function table ----------------------------------------------------------


@dataclass(frozen=True)
class Function:
    """A builtin callable from programs.

    `params` lists argument types; a joint-name function (`joint`, `bone`,
    `support`) takes bare joint names instead and `variadic` allows one or
    more of them.
    """

    name: str
    params: tuple[str, ...]
    returns: str
    op: str
    doc: str
    joint_names: bool = False
    variadic: bool = False

    @property
    def signature(self) -> str:
        if self.joint_names:
            args = "IDENT, ..." if self.variadic else "IDENT"
        else:
            args = ", ".join(self.params)
        return f"{self.name}({args}) -> {self.returns}"


FUNCTIONS: dict[str, Function] = {
    f.name: f
    for f in (
        Function("joint", (), JOINT, "joint", "joint handle; use .pos, .vel, .acc", joint_names=True),
        Function("bone", (), VEC3, "bone", "bone vector: joint position minus its parent's", joint_names=True),
        Function("com", (), VEC3, "com", "whole-body center of mass"),
        Function("dist", (VEC3, VEC3), SCALAR, "dist", "Euclidean distance between two points"),
        Function("distToPoint", (VEC3, VEC3), SCALAR, "dist", "distance to a fixed point"),
        Function("plane", (VEC3, SCALAR), "plane", "plane", "plane {p : n . p = offset}"),
        Function("line", (VEC3, VEC3), "line", "line", "line through origin along direction"),
        Function("sphere", (VEC3, SCALAR), "sphere", "sphere", "sphere with center and radius"),
        Function("halfspace", (VEC3, SCALAR), "halfspace", "halfspace", "halfspace {p : n . p <= offset}"),
        Function("support", (), "support", "support", "support region around stance joints", joint_names=True, variadic=True),
        Function("distToPlane", (VEC3, "plane"), SCALAR, "dist_plane", "distance to a plane"),
        Function("distToLine", (VEC3, "line"), SCALAR, "dist_line", "distance to a line"),
        Function("distToSphere", (VEC3, "sphere"), SCALAR, "dist_sphere", "distance to a sphere surface"),
        Function("distToHalfspace", (VEC3, "halfspace"), SCALAR, "dist_halfspace", "signed distance to a halfspace boundary (negative inside)"),
        Function("distToSupport", (VEC3, "support"), SCALAR, "dist_support", "ground distance to a support region (0 inside)"),
        Function("midpoint", (VEC3, VEC3), VEC3, "midpoint", "midpoint of two points"),
        Function("dot", (VEC3, VEC3), SCALAR, "dot", "dot product"),
        Function("norm", (VEC3,), SCALAR, "norm", "Euclidean length"),
        Function("angleTo", (VEC3, VEC3), SCALAR, "angle_to", "1 - cos of the angle between two directions"),
    )
}


# -- scopes ------------------------------------------------------------------


@dataclass(frozen=True)
class _Binding:
    kind: str  # param, let, joint_var or frame_var
    value: Any
    span: Span


class _Scope:
    def __init__(self, parent: _Scope | None = None) -> None:
        self.parent = parent
        self.names: dict[str, _Binding] = {}

    def lookup(self, name: str) -> _Binding | None:
        scope: _Scope | None = self
        while scope is not None:
            if name in scope.names:
                return scope.names[name]
            scope = scope.parent
        return None


def _declared_names(items: tuple[ast.Item, ...]) -> set[str]:
    names = set()
    for item in items:
        if isinstance(item, (ast.Param, ast.Let)):
            names.add(item.name)
        elif isinstance(item, ast.ForLoop):
            names.add(item.var)
            names |= _declared_names(item.body)
    return names


# -- checker -----------------------------------------------------------------


class _Checker:
    def __init__(self, program: ast.SourceProgram, skeleton: Skeleton) -> None:
        self.program = program
        self.skeleton = skeleton
        self.diagnostics: list[Diagnostic] = []
        self.declared = _declared_names(program.items)
        self.params: list[ParamSpec] = []
        self.terms: list[TypedTerm] = []

    def report(self, code: str, message: str, span: Span) -> None:
        diagnostic = error(code, message, span)
        if diagnostic not in self.diagnostics:
            self.diagnostics.append(diagnostic)

    # items

    def items(self, items: tuple[ast.Item, ...], scope: _Scope, bindings: tuple[str, ...], depth: int) -> None:
        for item in items:
            if isinstance(item, ast.Param):
                self.param(item, scope, depth)
            elif isinstance(item, ast.Let):
                if self._declare(item.name, item.span, scope):
                    value = self.expr(item.value, scope)
                    scope.names[item.name] = _Binding("let", value, item.span)
            elif isinstance(item, ast.Constraint):
                self.constraint(item, scope, bindings)
            elif isinstance(item, ast.ForLoop):
                self.loop(item, scope, bindings, depth)

    def constant(self, typed: TypedExpr, span: Span) -> np.ndarray | None:
        try:
            return fold(typed)
        except ValueError as e:
            self.report("constant", str(e), span)
            return None

    def _declare(self, name: str, span: Span, scope: _Scope) -> bool:
        existing = scope.lookup(name)
        if existing is not None:
            self.report("duplicate", f"'{name}' is already declared", span)
            return False
        if name in FUNCTIONS:
            self.report("duplicate", f"'{name}' shadows a builtin function", span)
            return False
        return True

    def param(self, item: ast.Param, scope: _Scope, depth: int) -> None:
        if depth > 0:
            self.report("param-scope", "parameters must be declared at the top level", item.span)
            return
        if not self._declare(item.name, item.span, scope):
            return
        expected = SCALAR if item.kind == "float" else VEC3
        default = None
        if item.default is not None:
            typed = self.expr(item.default, scope)
            if typed is not _ERROR:
                if not typed.is_constant:
                    self.report("constant", "parameter defaults must be constant", item.default.span)
                elif typed.type != expected:
                    self.report(
                        "type",
                        f"default of '{item.name}' is {typed.type}, expected {expected}",
                        item.default.span,
                    )
                else:
                    default = self.constant(typed, item.default.span)
        spec = ParamSpec(item.name, item.kind, default, item.span)
        self.params.append(spec)
        scope.names[item.name] = _Binding("param", spec, item.span)

    def loop(self, item: ast.ForLoop, scope: _Scope, bindings: tuple[str, ...], depth: int) -> None:
        if not self._declare(item.var, item.span, scope):
            return
        domain = item.domain
        values: list[tuple[str, Any]] = []
        if isinstance(domain, ast.AllJoints):
            values = [("joint_var", (i, name)) for i, name in enumerate(self.skeleton.names)]
        elif isinstance(domain, ast.JointList):
            for name in domain.names:
                index = self.resolve_joint(name, scope, domain.span)
                if index is not None:
                    values.append(("joint_var", (index, name)))
        elif isinstance(domain, ast.FrameSpan):
            bounds = [self._static_frame(ref, scope) for ref in (domain.start, domain.stop)]
            if None in bounds:
                return
            start, stop = bounds
            if start > stop:
                self.report("range", f"empty loop range {start}..{stop}", domain.span)
                return
            values = [("frame_var", i) for i in range(start, stop + 1)]

        for kind, value in values:
            inner = _Scope(scope)
            inner.names[item.var] = _Binding(kind, value, item.span)
            shown = value[1] if kind == "joint_var" else value
            self.items(item.body, inner, bindings + (f"{item.var}={shown}",), depth + 1)

    def _static_frame(self, ref: ast.FrameRef, scope: _Scope) -> int | None:
        if isinstance(ref.value, int):
            return ref.value
        binding = scope.lookup(ref.value)
        if binding is not None and binding.kind == "frame_var":
            return binding.value
        self.report("range", "loop bounds must be integer frames", ref.span)
        return None

    def constraint(self, item: ast.Constraint, scope: _Scope, bindings: tuple[str, ...]) -> None:
        selector = self.selector(item.selector, scope)
        pred = self.pred(item.pred, scope)
        weight = 1.0
        if item.weight is not None:
            typed = self.expr(item.weight, scope)
            if typed is _ERROR:
                return
            if typed.type != SCALAR or not typed.is_constant:
                self.report("weight", "weight must be a constant scalar", item.weight.span)
                return
            value = self.constant(typed, item.weight.span)
            if value is None:
                return
            weight = float(value)
            if not np.isfinite(weight) or weight < 0:
                self.report("weight", f"weight must be nonnegative, got {weight:g}", item.weight.span)
                return
        if selector is None or pred is None:
            return
        label = format_constraint(item)[len("constraint ") : -1]
        if bindings:
            label += f" [{', '.join(bindings)}]"
        self.terms.append(TypedTerm(label, selector, pred, weight, item.span))

    # selectors

    def frame_ref(self, ref: ast.FrameRef, scope: _Scope) -> atoms.FrameRef | None:
        value = ref.value
        if isinstance(value, int) or value in ("first", "mid", "last"):
            return value
        binding = scope.lookup(value)
        if binding is not None and binding.kind == "frame_var":
            return binding.value
        self.report("undefined", f"'{value}' is not a frame variable", ref.span)
        return None

    def selector(self, selector: ast.Selector, scope: _Scope) -> atoms.FrameSelector | None:
        if isinstance(selector, ast.AllFramesSel):
            return atoms.AllFrames()
        if isinstance(selector, ast.FrameSel):
            ref = self.frame_ref(selector.ref, scope)
            return None if ref is None else atoms.FrameAt(ref)
        if isinstance(selector, ast.RangeSel):
            start = self.frame_ref(selector.start, scope)
            stop = self.frame_ref(selector.stop, scope)
            if start is None or stop is None:
                return None
            if isinstance(start, int) and isinstance(stop, int) and start > stop:
                self.report("range", f"empty frame range {start}..{stop}", selector.span)
                return None
            return atoms.FrameRange(start, stop)
        refs = [self.frame_ref(r, scope) for r in selector.refs]
        if any(r is None for r in refs):
            return None
        return atoms.FrameSet(tuple(refs))

    # predicates

    def pred(self, pred: ast.Pred, scope: _Scope) -> TypedPred | None:
        if isinstance(pred, ast.Compare):
            left = self.coerce(self.expr(pred.left, scope))
            right = self.coerce(self.expr(pred.right, scope))
            if left is _ERROR or right is _ERROR:
                return None
            if left.type not in (SCALAR, VEC3) or right.type not in (SCALAR, VEC3):
                self.report("type", f"cannot compare {left.type} with {right.type}", pred.span)
                return None
            if left.type != right.type:
                self.report("type", f"vector-scalar mismatch: {left.type} {pred.op} {right.type}", pred.span)
                return None
            if pred.op != "==" and left.type == VEC3:
                self.report(
                    "type",
                    f"'{pred.op}' needs scalars; compare a component (.x, .y, .z) or norm()",
                    pred.span,
                )
                return None
            op = {"==": "eq", "<": "lt", ">": "gt"}[pred.op]
            return TypedPred(op, (left, right), pred.norm, pred.span)
        if isinstance(pred, ast.Far):
            operand = self.coerce(self.expr(pred.operand, scope))
            bound = self.expr(pred.bound, scope)
            if operand is _ERROR or bound is _ERROR:
                return None
            if operand.type != SCALAR or bound.type != SCALAR:
                self.report("type", "far expects (scalar, scalar)", pred.span)
                return None
            return TypedPred("far", (operand, bound), span=pred.span)
        if isinstance(pred, (ast.And, ast.Or)):
            left = self.pred(pred.left, scope)
            right = self.pred(pred.right, scope)
            if left is None or right is None:
                return None
            return TypedPred("and" if isinstance(pred, ast.And) else "or", (left, right), span=pred.span)
        if isinstance(pred, ast.When):
            condition = self.pred(pred.condition, scope)
            body = self.pred(pred.body, scope)
            if condition is None or body is None:
                return None
            return TypedPred("when", (condition, body), span=pred.span)
        raise TypeError(f"not a predicate: {pred!r}")

    # expressions

    def coerce(self, typed: TypedExpr) -> TypedExpr:
        """A joint handle used as a value stands for its position."""
        if typed.type == JOINT:
            return TypedExpr("joint_pos", VEC3, data=typed.data, span=typed.span, varying=True)
        return typed

    def resolve_joint(self, name: str, scope: _Scope, span: Span) -> int | None:
        binding = scope.lookup(name)
        if binding is not None:
            if binding.kind == "joint_var":
                return binding.value[0]
            self.report("type", f"'{name}' is a {binding.kind.replace('_', ' ')}, not a joint", span)
            return None
        try:
            return self.skeleton.joint_index(name)
        except KeyError:
            message = f"unknown joint '{name}'"
            close = difflib.get_close_matches(name, self.skeleton.known_names(), n=1)
            if close:
                message += f"; did you mean '{close[0]}'?"
            self.report("unknown-joint", message, span)
            return None

    def expr(self, node: ast.Expr, scope: _Scope) -> TypedExpr:
        handler = getattr(self, f"_expr_{type(node).__name__.lower()}")
        return handler(node, scope)

    def _expr_number(self, node: ast.Number, scope: _Scope) -> TypedExpr:
        return TypedExpr("const", SCALAR, data=float(node.value), span=node.span)

    def _expr_vec(self, node: ast.Vec, scope: _Scope) -> TypedExpr:
        parts = [self.expr(p, scope) for p in (node.x, node.y, node.z)]
        if any(a is _ERROR for a in parts):
            return _ERROR
        for part, original in zip(parts, (node.x, node.y, node.z)):
            if part.type != SCALAR:
                self.report("type", f"vector components must be scalars, got {part.type}", original.span)
                return _ERROR
        return _combine("vec", VEC3, parts, node.span)

    def _expr_name(self, node: ast.Name, scope: _Scope) -> TypedExpr:
        binding = scope.lookup(node.id)
        if binding is None:
            if node.id in self.declared:
                self.report("undefined", f"'{node.id}' is used before its declaration", node.span)
            else:
                self.report("undefined", f"undefined name '{node.id}'", node.span)
            return _ERROR
        if binding.kind == "param":
            spec: ParamSpec = binding.value
            kind = SCALAR if spec.kind == "float" else VEC3
            return TypedExpr("param", kind, data=spec.name, span=node.span, uses_params=True)
        if binding.kind == "let":
            return binding.value
        if binding.kind == "frame_var":
            return TypedExpr("const", SCALAR, data=float(binding.value), span=node.span)
        return TypedExpr("joint", JOINT, data=binding.value[0], span=node.span)

    def _expr_neg(self, node: ast.Neg, scope: _Scope) -> TypedExpr:
        operand = self.coerce(self.expr(node.operand, scope))
        if operand is _ERROR:
            return _ERROR
        if operand.type not in (SCALAR, VEC3):
            self.report("type", f"cannot negate {operand.type}", node.span)
            return _ERROR
        return _combine("neg", operand.type, [operand], node.span)

    def _expr_binop(self, node: ast.BinOp, scope: _Scope) -> TypedExpr:
        left = self.coerce(self.expr(node.left, scope))
        right = self.coerce(self.expr(node.right, scope))
        if left is _ERROR or right is _ERROR:
            return _ERROR
        kinds = (left.type, right.type)
        result = None
        if node.op in "+-" and left.type == right.type and left.type in (SCALAR, VEC3):
            result = left.type
        elif node.op == "*" and kinds in ((SCALAR, SCALAR), (SCALAR, VEC3), (VEC3, SCALAR)):
            result = VEC3 if VEC3 in kinds else SCALAR
        elif node.op == "/" and kinds in ((SCALAR, SCALAR), (VEC3, SCALAR)):
            result = left.type
        if result is None:
            hint = "; use dot()" if kinds == (VEC3, VEC3) and node.op == "*" else ""
            self.report(
                "type", f"vector-scalar mismatch: {left.type} {node.op} {right.type}{hint}", node.span
            )
            return _ERROR
        op = {"+": "add", "-": "sub", "*": "mul", "/": "div"}[node.op]
        return _combine(op, result, [left, right], node.span)

    def _expr_attr(self, node: ast.Attr, scope: _Scope) -> TypedExpr:
        operand = self.expr(node.operand, scope)
        if operand is _ERROR:
            return _ERROR
        if node.attr == "pos":
            if operand.type != JOINT:
                self.report("type", "'.pos' applies to joint(...) only", node.span)
                return _ERROR
            return self.coerce(operand)
        operand = self.coerce(operand)
        if node.attr in ATTR_ORDERS:
            if operand.type not in (SCALAR, VEC3) or not operand.varying:
                self.report("type", f"'.{node.attr}' needs a per-frame value", node.span)
                return _ERROR
            return _combine("diff", operand.type, [operand], node.span, data=ATTR_ORDERS[node.attr])
        if operand.type != VEC3:
            self.report("type", f"'.{node.attr}' applies to vec3, got {operand.type}", node.span)
            return _ERROR
        return _combine("component", SCALAR, [operand], node.span, data=ATTR_AXES[node.attr])

    def _expr_call(self, node: ast.Call, scope: _Scope) -> TypedExpr:
        fn = FUNCTIONS.get(node.func)
        if fn is None:
            message = f"unknown function '{node.func}'"
            close = difflib.get_close_matches(node.func, list(FUNCTIONS), n=1)
            if close:
                message += f"; did you mean '{close[0]}'?"
            self.report("unknown-function", message, node.span)
            return _ERROR
        if fn.joint_names:
            return self._joint_call(fn, node, scope)
        if len(node.args) != len(fn.params):
            self.report(
                "arity",
                f"{fn.name} expects {len(fn.params)} argument(s) ({', '.join(fn.params)}), got {len(node.args)}",
                node.span,
            )
            return _ERROR
        args = [self.coerce(self.expr(a, scope)) for a in node.args]
        if any(a is _ERROR for a in args):
            return _ERROR
        got = tuple(a.type for a in args)
        if got != fn.params:
            self.report(
                "arity", f"{fn.name} expects ({', '.join(fn.params)}), got ({', '.join(got)})", node.span
            )
            return _ERROR
        if fn.op == "com":
            return TypedExpr("com", VEC3, span=node.span, varying=True)
        return _combine(fn.op, fn.returns, args, node.span)

    def _joint_call(self, fn: Function, node: ast.Call, scope: _Scope) -> TypedExpr:
        if not node.args or (len(node.args) > 1 and not fn.variadic):
            expected = "one or more joint names" if fn.variadic else "one joint name"
            self.report("arity", f"{fn.name} expects {expected}, got {len(node.args)} argument(s)", node.span)
            return _ERROR
        indices = []
        for arg in node.args:
            if not isinstance(arg, ast.Name):
                self.report("type", f"{fn.name} expects joint names", arg.span)
                return _ERROR
            index = self.resolve_joint(arg.id, scope, arg.span)
            if index is None:
                return _ERROR
            indices.append(index)
        if fn.op == "joint":
            return TypedExpr("joint", JOINT, data=indices[0], span=node.span)
        if fn.op == "bone":
            child = indices[0]
            parent = self.skeleton.parents[child]
            if parent is None:
                self.report("type", "the root joint has no bone", node.span)
                return _ERROR
            return TypedExpr("bone", VEC3, data=(child, parent), span=node.span, varying=True)
        return TypedExpr("support", "support", data=tuple(indices), span=node.span, varying=True)


def _combine(op: str, type_: str, args: list[TypedExpr], span: Span, data: Any = None) -> TypedExpr:
    return TypedExpr(
        op,
        type_,
        tuple(args),
        data=data,
        span=span,
        varying=any(a.varying for a in args),
        uses_params=any(a.uses_params for a in args),
    )


# -- constant folding --------------------------------------------------------

_FOLD_BINARY = {"add": np.add, "sub": np.subtract, "mul": np.multiply}


def fold(typed: TypedExpr) -> np.ndarray:
    """Value of a constant scalar or vector expression.

    Raises:
        ValueError: If the expression is not a foldable constant
    """
    if typed.op == "const":
        return np.asarray(typed.data, dtype=float)
    args = [fold(a) for a in typed.args]
    if typed.op in _FOLD_BINARY:
        return np.asarray(_FOLD_BINARY[typed.op](args[0], args[1]), dtype=float)
    if typed.op == "div":
        if np.any(args[1] == 0):
            raise ValueError("division by zero in constant expression")
        return np.divide(args[0], args[1])
    if typed.op == "neg":
        return -args[0]
    if typed.op == "vec":
        return np.array([float(a) for a in args])
    if typed.op == "component":
        return np.asarray(args[0][typed.data])
    if typed.op == "dot":
        return np.asarray(np.dot(args[0], args[1]))
    if typed.op == "norm":
        return np.asarray(np.linalg.norm(args[0]))
    if typed.op == "dist":
        return np.asarray(np.linalg.norm(args[0] - args[1]))
    if typed.op == "midpoint":
        return (args[0] + args[1]) / 2.0
    raise ValueError(f"'{typed.op}' cannot be folded to a constant")


def typecheck(program: ast.SourceProgram, skeleton: Skeleton) -> TypedProgram:
    """Resolve names, check types and unroll loops.

    Raises:
        DiagnosticError: With every problem found, in source order
    """
    checker = _Checker(program, skeleton)
    checker.items(program.items, _Scope(), (), 0)
    if checker.diagnostics:
        ordered = sorted(checker.diagnostics, key=lambda d: (d.line, d.column))
        raise DiagnosticError(ordered, program.text)
    logger.debug(
        f"Typechecked '{program.name}': {len(checker.params)} params, {len(checker.terms)} terms"
    )
    return TypedProgram(
        name=program.name,
        params=tuple(checker.params),
        terms=tuple(checker.terms),
        skeleton=skeleton,
        source=program,
    )
