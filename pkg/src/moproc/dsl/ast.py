"""Syntax tree of motion programs.

Nodes are frozen dataclasses. Source spans are carried on every node but
excluded from equality, so two parses of equivalently formatted programs
compare equal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Union

from moproc.dsl.diagnostics import Span

NO_SPAN = Span(0, 0, 0, 0)


def _span() -> Span:
    return field(default=NO_SPAN, compare=False, repr=False)


# -- expressions -------------------------------------------------------------


@dataclass(frozen=True)
class Number:
    value: float
    span: Span = _span()


@dataclass(frozen=True)
class Vec:
    x: Expr
    y: Expr
    z: Expr
    span: Span = _span()


@dataclass(frozen=True)
class Name:
    id: str
    span: Span = _span()


@dataclass(frozen=True)
class Neg:
    operand: Expr
    span: Span = _span()


@dataclass(frozen=True)
class BinOp:
    op: Literal["+", "-", "*", "/"]
    left: Expr
    right: Expr
    span: Span = _span()


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple[Expr, ...]
    span: Span = _span()


@dataclass(frozen=True)
class Attr:
    operand: Expr
    attr: Literal["pos", "vel", "acc", "x", "y", "z"]
    span: Span = _span()


Expr = Union[Number, Vec, Name, Neg, BinOp, Call, Attr]


# -- predicates --------------------------------------------------------------


@dataclass(frozen=True)
class Compare:
    op: Literal["==", "<", ">"]
    left: Expr
    right: Expr
    norm: float | None = None
    span: Span = _span()


@dataclass(frozen=True)
class Far:
    operand: Expr
    bound: Expr
    span: Span = _span()


@dataclass(frozen=True)
class And:
    left: Pred
    right: Pred
    span: Span = _span()


@dataclass(frozen=True)
class Or:
    left: Pred
    right: Pred
    span: Span = _span()


@dataclass(frozen=True)
class When:
    condition: Pred
    body: Pred
    span: Span = _span()


Pred = Union[Compare, Far, And, Or, When]


# -- selectors ---------------------------------------------------------------


@dataclass(frozen=True)
class FrameRef:
    """A frame index, `first` / `mid` / `last`, or a frame loop variable."""

    value: int | str
    span: Span = _span()


@dataclass(frozen=True)
class AllFramesSel:
    span: Span = _span()


@dataclass(frozen=True)
class FrameSel:
    ref: FrameRef
    span: Span = _span()


@dataclass(frozen=True)
class RangeSel:
    start: FrameRef
    stop: FrameRef
    span: Span = _span()


@dataclass(frozen=True)
class SetSel:
    refs: tuple[FrameRef, ...]
    span: Span = _span()


Selector = Union[AllFramesSel, FrameSel, RangeSel, SetSel]


# -- statements --------------------------------------------------------------


@dataclass(frozen=True)
class Param:
    name: str
    kind: Literal["float", "vec3"]
    default: Expr | None = None
    span: Span = _span()


@dataclass(frozen=True)
class Let:
    name: str
    value: Expr
    span: Span = _span()


@dataclass(frozen=True)
class Constraint:
    selector: Selector
    pred: Pred
    weight: Expr | None = None
    span: Span = _span()


@dataclass(frozen=True)
class AllJoints:
    span: Span = _span()


@dataclass(frozen=True)
class JointList:
    names: tuple[str, ...]
    span: Span = _span()


@dataclass(frozen=True)
class FrameSpan:
    start: FrameRef
    stop: FrameRef
    span: Span = _span()


Domain = Union[AllJoints, JointList, FrameSpan]


@dataclass(frozen=True)
class ForLoop:
    var: str
    domain: Domain
    body: tuple[Item, ...]
    span: Span = _span()


Item = Union[Param, Let, Constraint, ForLoop]


@dataclass(frozen=True)
class SourceProgram:
    """A parsed program: task name plus its items in source order."""

    name: str
    items: tuple[Item, ...]
    span: Span = _span()
    text: str = field(default="", compare=False, repr=False)
