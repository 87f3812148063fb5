"""Parse program text into a `SourceProgram`.

The lark LALR parser produces a parse tree with positions; `_AstBuilder`
turns it into the frozen dataclass AST. Syntax errors, reserved-word misuse
and malformed literals are reported as `Diagnostic`s carrying the span of
the offending token.
"""

from __future__ import annotations

import json
import logging
from functools import lru_cache

import lark
from lark import Token, Transformer, v_args

from moproc.dsl import ast
from moproc.dsl.diagnostics import Diagnostic, Span, error
from moproc.dsl.grammar import GRAMMAR, RESERVED_WORDS
from moproc.errors import DiagnosticError

logger = logging.getLogger(__name__)

SYMBOLIC_FRAMES = ("first", "mid", "last")


@lru_cache(maxsize=1)
def _parser() -> lark.Lark:
    return lark.Lark(GRAMMAR, start="start", parser="lalr", propagate_positions=True)


def _meta_span(meta) -> Span:
    if getattr(meta, "empty", True):
        return ast.NO_SPAN
    return Span(meta.line, meta.column, meta.end_line, meta.end_column)


def _token_span(token: Token) -> Span:
    if token.line is None or token.column is None:
        return ast.NO_SPAN
    end_line = token.end_line if token.end_line is not None else token.line
    end_column = token.end_column if token.end_column is not None else token.column + len(token)
    return Span(token.line, token.column, end_line, end_column)


@v_args(meta=True)
class _AstBuilder(Transformer):
    """Build AST nodes bottom-up, collecting diagnostics instead of stopping."""

    def __init__(self) -> None:
        super().__init__(visit_tokens=False)
        self.diagnostics: list[Diagnostic] = []

    def _name(self, token: Token) -> str:
        if token.value in RESERVED_WORDS:
            self.diagnostics.append(
                error(
                    "reserved-word",
                    f"'{token.value}' is a reserved word and cannot be used as a name",
                    _token_span(token),
                )
            )
        return str(token.value)

    def _int(self, token: Token, what: str) -> int:
        value = float(token.value)
        if value != int(value):
            self.diagnostics.append(
                error("syntax", f"{what} must be an integer, got {token.value}", _token_span(token))
            )
        return int(value)

    def start(self, meta, children):
        return children[0]

    def program(self, meta, children):
        name_token, *items = children
        return ast.SourceProgram(
            name=json.loads(name_token.value), items=tuple(items), span=_meta_span(meta)
        )

    # statements

    def ptype(self, meta, children):
        return str(children[0].value)

    def param(self, meta, children):
        name, kind, default = children
        return ast.Param(self._name(name), kind, default, span=_meta_span(meta))

    def let(self, meta, children):
        name, value = children
        return ast.Let(self._name(name), value, span=_meta_span(meta))

    def constraint(self, meta, children):
        selector, pred, weight = children
        return ast.Constraint(selector, pred, weight, span=_meta_span(meta))

    def for_loop(self, meta, children):
        var, domain, *body = children
        return ast.ForLoop(self._name(var), domain, tuple(body), span=_meta_span(meta))

    def all_joints(self, meta, children):
        return ast.AllJoints(span=_meta_span(meta))

    def joint_list(self, meta, children):
        return ast.JointList(tuple(self._name(t) for t in children), span=_meta_span(meta))

    def frame_span(self, meta, children):
        start, stop = children
        return ast.FrameSpan(start, stop, span=_meta_span(meta))

    # selectors

    def all_frames(self, meta, children):
        return ast.AllFramesSel(span=_meta_span(meta))

    def frame_at(self, meta, children):
        return ast.FrameSel(children[0], span=_meta_span(meta))

    def frame_range(self, meta, children):
        start, stop = children
        return ast.RangeSel(start, stop, span=_meta_span(meta))

    def frame_set(self, meta, children):
        return ast.SetSel(tuple(children), span=_meta_span(meta))

    def fref(self, meta, children):
        token = children[0]
        span = _token_span(token)
        if token.type == "NUMBER":
            return ast.FrameRef(self._int(token, "frame index"), span=span)
        if token.value in SYMBOLIC_FRAMES:
            return ast.FrameRef(str(token.value), span=span)
        return ast.FrameRef(self._name(token), span=span)

    # predicates

    def disj(self, meta, children):
        left, right = children
        return ast.Or(left, right, span=_meta_span(meta))

    def conj_and(self, meta, children):
        left, right = children
        return ast.And(left, right, span=_meta_span(meta))

    def when(self, meta, children):
        condition, body = children
        return ast.When(condition, body, span=_meta_span(meta))

    def eq(self, meta, children):
        left, right, keyword, order = children
        norm = None
        if keyword is not None:
            if keyword.value != "norm":
                self.diagnostics.append(
                    error("syntax", f"expected 'norm' after '==', got '{keyword.value}'", _token_span(keyword))
                )
            norm = self._int(order, "norm order")
            if norm < 1:
                self.diagnostics.append(
                    error("syntax", "norm order must be at least 1", _token_span(order))
                )
            norm = float(norm)
        return ast.Compare("==", left, right, norm, span=_meta_span(meta))

    def lt(self, meta, children):
        left, right = children
        return ast.Compare("<", left, right, span=_meta_span(meta))

    def gt(self, meta, children):
        left, right = children
        return ast.Compare(">", left, right, span=_meta_span(meta))

    def far(self, meta, children):
        operand, bound = children
        return ast.Far(operand, bound, span=_meta_span(meta))

    # expressions

    def _binop(self, op, meta, children):
        left, right = children
        return ast.BinOp(op, left, right, span=_meta_span(meta))

    def add(self, meta, children):
        return self._binop("+", meta, children)

    def sub(self, meta, children):
        return self._binop("-", meta, children)

    def mul(self, meta, children):
        return self._binop("*", meta, children)

    def div(self, meta, children):
        return self._binop("/", meta, children)

    def neg(self, meta, children):
        return ast.Neg(children[0], span=_meta_span(meta))

    def attr(self, meta, children):
        operand, token = children
        return ast.Attr(operand, str(token.value), span=_meta_span(meta))

    def number(self, meta, children):
        return ast.Number(float(children[0].value), span=_meta_span(meta))

    def name(self, meta, children):
        return ast.Name(self._name(children[0]), span=_meta_span(meta))

    def call(self, meta, children):
        func, *args = children
        return ast.Call(
            self._name(func),
            tuple(a for a in args if a is not None),
            span=_meta_span(meta),
        )

    def vec(self, meta, children):
        x, y, z = children
        return ast.Vec(x, y, z, span=_meta_span(meta))


def _describe_expected(expected: set[str]) -> str:
    parser = _parser()
    shown = []
    for name in sorted(expected):
        if name.startswith("$"):
            continue
        try:
            pattern = parser.get_terminal(name).pattern
        except KeyError:
            shown.append(name)
            continue
        if pattern.type == "str":
            shown.append(f"'{pattern.value}'")
        else:
            shown.append(name.lower())
    return ", ".join(shown) if shown else "end of program"


def _syntax_diagnostic(exc: lark.exceptions.UnexpectedInput, text: str) -> Diagnostic:
    if isinstance(exc, lark.exceptions.UnexpectedCharacters):
        span = Span.point(exc.line, exc.column).clamp(text)
        return error("syntax", f"unexpected character {exc.char!r}", span)
    if isinstance(exc, lark.exceptions.UnexpectedToken):
        token = exc.token
        if token.type == "$END":
            return error(
                "syntax",
                f"unexpected end of program; expected {_describe_expected(exc.expected)}",
                Span.end_of(text),
            )
        span = _token_span(token).clamp(text)
        if token.value in RESERVED_WORDS and "IDENT" in exc.expected:
            return error(
                "reserved-word",
                f"'{token.value}' is a reserved word and cannot be used as a name",
                span,
            )
        return error(
            "syntax",
            f"unexpected '{token.value}'; expected {_describe_expected(exc.expected)}",
            span,
        )
    return error("syntax", "unexpected end of program", Span.end_of(text))


def parse(text: str) -> ast.SourceProgram:
    """Parse program text.

    Raises:
        DiagnosticError: On syntax errors or reserved-word misuse
    """
    try:
        tree = _parser().parse(text)
    except lark.exceptions.UnexpectedInput as exc:
        diagnostic = _syntax_diagnostic(exc, text)
        logger.debug(f"Parse failed: {diagnostic.render()}")
        raise DiagnosticError([diagnostic], text) from None

    builder = _AstBuilder()
    program = builder.transform(tree)
    if builder.diagnostics:
        raise DiagnosticError(
            sorted(builder.diagnostics, key=lambda d: (d.line, d.column)), text
        )
    logger.debug(f"Parsed task '{program.name}' with {len(program.items)} items")
    return ast.SourceProgram(program.name, program.items, span=program.span, text=text)
