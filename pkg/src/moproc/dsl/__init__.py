"""The motion programming language: parse, check, compile and evaluate."""

from moproc.dsl.ast import SourceProgram
from moproc.dsl.compiler import (
    ErrorProgram,
    Evaluation,
    TermValue,
    compile_program,
    evaluate,
    program_hash,
)
from moproc.dsl.diagnostics import Diagnostic, Span
from moproc.dsl.parser import parse
from moproc.dsl.printer import pretty_print
from moproc.dsl.typecheck import FUNCTIONS, TypedProgram, typecheck
from moproc.kinematics import Skeleton, default_skeleton

__all__ = [
    "FUNCTIONS",
    "Diagnostic",
    "ErrorProgram",
    "Evaluation",
    "SourceProgram",
    "Span",
    "TermValue",
    "TypedProgram",
    "compile_program",
    "evaluate",
    "load_program",
    "parse",
    "pretty_print",
    "program_hash",
    "typecheck",
]


def load_program(text: str, skeleton: Skeleton | None = None) -> ErrorProgram:
    """Parse, typecheck and compile program text in one step."""
    skeleton = skeleton or default_skeleton()
    return compile_program(typecheck(parse(text), skeleton))
