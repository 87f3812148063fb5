"""Exception hierarchy for moproc.

User-facing failures (bad programs, unknown tasks, malformed files) derive
from `UserError` and map to CLI exit code 2. Numeric failures during
optimization map to exit code 3.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Sequence

if TYPE_CHECKING:
    from moproc.dsl.diagnostics import Diagnostic, Span


class MoprocError(Exception):
    """Base class for all moproc errors."""

    exit_code: int = 1


class UserError(MoprocError):
    """Raised for invalid user input: programs, tasks, files or flags."""

    exit_code = 2


class DiagnosticError(UserError):
    """Raised when a program fails to parse or typecheck.

    Attributes:
        diagnostics: Every problem found, in source order
        source: The program text the diagnostics point into
    """

    def __init__(self, diagnostics: Sequence[Diagnostic], source: str = ""):
        self.diagnostics = list(diagnostics)
        self.source = source
        super().__init__(str(self))

    def __str__(self) -> str:
        return "\n".join(d.render(self.source) for d in self.diagnostics)


class UnknownTaskError(UserError):
    """Raised when a task id is not present in the corpus.

    Attributes:
        task_id: The requested id
        available: Ids that do exist
    """

    def __init__(self, task_id: str, available: Sequence[str]):
        self.task_id = task_id
        self.available = list(available)
        super().__init__(str(self))

    def __str__(self) -> str:
        return (
            f"Unknown task '{self.task_id}'. "
            f"Available tasks: {', '.join(self.available)}"
        )


class MissingParameterError(UserError):
    """Raised when a program parameter has no default and no supplied value."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"Parameter '{name}' has no default and was not supplied")


class ParameterTypeError(UserError):
    """Raised when a supplied parameter value has the wrong shape.

    Attributes:
        name: Parameter name
        expected: "float" or "vec3"
    """

    def __init__(self, name: str, expected: str):
        self.name = name
        self.expected = expected
        super().__init__(f"Parameter '{name}' expects a {expected} value")


class SkeletonMismatchError(UserError):
    """Raised when motion data and skeleton disagree on the joint count."""

    def __init__(self, expected: int, actual: int):
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"Skeleton has {expected} joints but motion data has {actual}"
        )


class PriorSpecError(UserError):
    """Raised for an unparseable or invalid prior specification."""

    def __init__(self, spec: str, reason: str):
        self.spec = spec
        self.reason = reason
        super().__init__(f"Invalid prior '{spec}': {reason}")


class MotionFormatError(UserError):
    """Raised when a motion file cannot be read."""

    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"Cannot read motion file '{path}': {reason}")


class EvaluationError(MoprocError):
    """Raised when an error program cannot be evaluated at a point.

    Division by zero, square roots of negative values and degenerate
    geometric primitives end up here. The DSL compiler attaches the span of
    the expression that failed.

    Attributes:
        message: What went wrong
        span: Source span of the failing expression, if known
    """

    exit_code = 2

    def __init__(self, message: str, span: Span | None = None):
        self.message = message
        self.span = span
        super().__init__(str(self))

    def __str__(self) -> str:
        if self.span is None:
            return self.message
        return f"{self.span.line}:{self.span.column}: {self.message}"

    def with_span(self, span: Span) -> EvaluationError:
        """Return a copy located at `span` unless a location is already set."""
        if self.span is not None:
            return self
        return EvaluationError(self.message, span)


class DifferentiationError(MoprocError):
    """Raised for invalid gradient requests or non-finite gradient checks."""

    exit_code = 3


class NumericalError(MoprocError):
    """Raised when the optimization objective becomes non-finite.

    Attributes:
        step: Optimization step at which the value was observed
        blame: Per-term error values at that step (term label -> value)
    """

    exit_code = 3

    def __init__(self, step: int, blame: dict[str, float]):
        self.step = step
        self.blame = dict(blame)
        super().__init__(str(self))

    def __str__(self) -> str:
        bad = [name for name, value in self.blame.items() if not _finite(value)]
        culprits = ", ".join(bad) if bad else "no single term"
        return f"Non-finite error at step {self.step} (offending terms: {culprits})"


def _finite(value: float) -> bool:
    return value == value and value not in (float("inf"), float("-inf"))
