"""Source spans and diagnostics for motion programs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

Severity = Literal["error", "warning"]


@dataclass(frozen=True)
class Span:
    """1-based, end-exclusive column range in the program text."""

    line: int
    column: int
    end_line: int
    end_column: int

    @classmethod
    def point(cls, line: int, column: int) -> Span:
        return cls(line, column, line, column + 1)

    @classmethod
    def end_of(cls, text: str) -> Span:
        """Span just past the last character of `text`."""
        lines = text.split("\n")
        # trailing newline: point at the last non-empty line instead
        while len(lines) > 1 and not lines[-1].strip():
            lines.pop()
        line = len(lines)
        column = len(lines[-1]) + 1
        return cls.point(line, column)

    def clamp(self, text: str) -> Span:
        """Move the span inside `text` if it points past the end."""
        lines = text.split("\n") or [""]
        if self.line > len(lines) or self.line < 1:
            return Span.end_of(text)
        width = len(lines[self.line - 1]) + 1
        column = min(max(self.column, 1), width)
        return Span(self.line, column, max(self.end_line, self.line), max(self.end_column, column + 1))


@dataclass(frozen=True)
class Diagnostic:
    """One problem found in a program.

    Attributes:
        code: Machine-readable category (syntax, reserved-word, unknown-joint, ...)
        severity: "error" or "warning"
        message: Human-readable description
        span: Where in the source the problem is
    """

    code: str
    severity: Severity
    message: str
    span: Span

    @property
    def line(self) -> int:
        return self.span.line

    @property
    def column(self) -> int:
        return self.span.column

    def is_error(self) -> bool:
        return self.severity == "error"

    def render(self, source: str = "") -> str:
        """Format as `line:col: severity: message`, with a caret excerpt when the source is known."""
        head = f"{self.span.line}:{self.span.column}: {self.severity}: {self.message}"
        lines = source.split("\n")
        if not source or not 1 <= self.span.line <= len(lines):
            return head
        text = lines[self.span.line - 1]
        width = 1
        if self.span.end_line == self.span.line:
            width = max(1, self.span.end_column - self.span.column)
        caret = " " * (self.span.column - 1) + "^" * width
        return f"{head}\n  {text}\n  {caret}"


def error(code: str, message: str, span: Span) -> Diagnostic:
    return Diagnostic(code=code, severity="error", message=message, span=span)


def warning(code: str, message: str, span: Span) -> Diagnostic:
    return Diagnostic(code=code, severity="warning", message=message, span=span)
