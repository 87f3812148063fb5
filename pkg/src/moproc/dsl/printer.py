"""Canonical formatting of motion programs.

`pretty_print` emits two-space indentation, one item per line, and only the
parentheses needed to reproduce the same tree, so printing is idempotent and
`parse(pretty_print(p)) == p` for every parsed program.
"""

from __future__ import annotations

import json

from moproc.dsl import ast

INDENT = "  "

_SUM, _PRODUCT, _UNARY, _POSTFIX, _ATOM = 1, 2, 3, 4, 5
_BINARY_PRECEDENCE = {"+": _SUM, "-": _SUM, "*": _PRODUCT, "/": _PRODUCT}

_OR, _AND, _GUARD, _CMP = 1, 2, 3, 4


def format_number(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def _precedence(expr: ast.Expr) -> int:
    if isinstance(expr, ast.BinOp):
        return _BINARY_PRECEDENCE[expr.op]
    if isinstance(expr, ast.Neg):
        return _UNARY
    if isinstance(expr, ast.Attr):
        return _POSTFIX
    return _ATOM


def _wrap(expr: ast.Expr, minimum: int) -> str:
    text = format_expr(expr)
    return f"({text})" if _precedence(expr) < minimum else text


def format_expr(expr: ast.Expr) -> str:
    if isinstance(expr, ast.Number):
        return format_number(expr.value)
    if isinstance(expr, ast.Name):
        return expr.id
    if isinstance(expr, ast.Vec):
        return f"({format_expr(expr.x)}, {format_expr(expr.y)}, {format_expr(expr.z)})"
    if isinstance(expr, ast.Neg):
        return f"-{_wrap(expr.operand, _UNARY)}"
    if isinstance(expr, ast.BinOp):
        level = _BINARY_PRECEDENCE[expr.op]
        # left-associative: an equal-precedence right operand keeps its parentheses
        return f"{_wrap(expr.left, level)} {expr.op} {_wrap(expr.right, level + 1)}"
    if isinstance(expr, ast.Call):
        return f"{expr.func}({', '.join(format_expr(a) for a in expr.args)})"
    if isinstance(expr, ast.Attr):
        return f"{_wrap(expr.operand, _POSTFIX)}.{expr.attr}"
    raise TypeError(f"not an expression: {expr!r}")


def _pred_precedence(pred: ast.Pred) -> int:
    if isinstance(pred, ast.Or):
        return _OR
    if isinstance(pred, ast.And):
        return _AND
    if isinstance(pred, ast.When):
        return _GUARD
    return _CMP


def _wrap_pred(pred: ast.Pred, minimum: int) -> str:
    text = format_pred(pred)
    return f"({text})" if _pred_precedence(pred) < minimum else text


def format_pred(pred: ast.Pred) -> str:
    if isinstance(pred, ast.Compare):
        text = f"{format_expr(pred.left)} {pred.op} {format_expr(pred.right)}"
        if pred.norm is not None:
            text += f" norm {format_number(pred.norm)}"
        return text
    if isinstance(pred, ast.Far):
        return f"far({format_expr(pred.operand)}, {format_expr(pred.bound)})"
    if isinstance(pred, ast.Or):
        return f"{_wrap_pred(pred.left, _OR)} or {_wrap_pred(pred.right, _AND)}"
    if isinstance(pred, ast.And):
        return f"{_wrap_pred(pred.left, _AND)} and {_wrap_pred(pred.right, _GUARD)}"
    if isinstance(pred, ast.When):
        return f"when ({format_pred(pred.condition)}) {_wrap_pred(pred.body, _GUARD)}"
    raise TypeError(f"not a predicate: {pred!r}")


def format_frame_ref(ref: ast.FrameRef) -> str:
    return str(ref.value)


def format_selector(selector: ast.Selector) -> str:
    if isinstance(selector, ast.AllFramesSel):
        return "all frames"
    if isinstance(selector, ast.FrameSel):
        return f"frame {format_frame_ref(selector.ref)}"
    if isinstance(selector, ast.RangeSel):
        return f"frames {format_frame_ref(selector.start)}..{format_frame_ref(selector.stop)}"
    if isinstance(selector, ast.SetSel):
        return f"frames [{', '.join(format_frame_ref(r) for r in selector.refs)}]"
    raise TypeError(f"not a selector: {selector!r}")


def format_constraint(item: ast.Constraint) -> str:
    text = f"constraint {format_selector(item.selector)}: {format_pred(item.pred)}"
    if item.weight is not None:
        text += f" weight {format_expr(item.weight)}"
    return text + ";"


def _format_domain(domain: ast.Domain) -> str:
    if isinstance(domain, ast.AllJoints):
        return "joints"
    if isinstance(domain, ast.JointList):
        return f"[{', '.join(domain.names)}]"
    if isinstance(domain, ast.FrameSpan):
        return f"{format_frame_ref(domain.start)}..{format_frame_ref(domain.stop)}"
    raise TypeError(f"not a loop domain: {domain!r}")


def _format_items(items: tuple[ast.Item, ...], depth: int) -> list[str]:
    pad = INDENT * depth
    lines = []
    for item in items:
        if isinstance(item, ast.Param):
            text = f"param {item.name}: {item.kind}"
            if item.default is not None:
                text += f" = {format_expr(item.default)}"
            lines.append(f"{pad}{text};")
        elif isinstance(item, ast.Let):
            lines.append(f"{pad}let {item.name} = {format_expr(item.value)};")
        elif isinstance(item, ast.Constraint):
            lines.append(pad + format_constraint(item))
        elif isinstance(item, ast.ForLoop):
            lines.append(f"{pad}for {item.var} in {_format_domain(item.domain)} {{")
            lines.extend(_format_items(item.body, depth + 1))
            lines.append(f"{pad}}}")
        else:
            raise TypeError(f"not a program item: {item!r}")
    return lines


def pretty_print(program: ast.SourceProgram) -> str:
    """Format `program` canonically; an empty task prints as two lines."""
    lines = [f"task {json.dumps(program.name)} {{"]
    lines.extend(_format_items(program.items, 1))
    lines.append("}")
    return "\n".join(lines) + "\n"
