"""Reverse-mode automatic differentiation over small numpy arrays.

A `Tape` records every operation of one evaluation. Each recorded node is a
`Var` holding its forward value, its parent nodes and one vector-Jacobian
product per parent. `gradient` walks the tape backwards once and returns the
adjoint of every requested input.

Values are float64 numpy arrays (scalars, 3-vectors, or a batch of frames of
them), so a whole frame batch flows through a single node. Every operation
also accepts plain numpy inputs and then returns plain numpy, which is how
finite-difference checks and metric code reuse the same functions without a
tape.

Subgradient conventions at kinks are fixed: ties in `maximum` / `minimum`
go to the first argument, and `absolute`, `sqrt` and `norm2` have derivative
0 at 0.
"""

from __future__ import annotations

import logging
from typing import Callable, Sequence, Union

import numpy as np

from moproc.errors import DifferentiationError, EvaluationError

logger = logging.getLogger(__name__)

ArrayLike = Union["Var", np.ndarray, float, int, Sequence[float]]
VJP = Callable[[np.ndarray], np.ndarray]


class Tape:
    """Append-only record of one evaluation.

    Nodes are appended in evaluation order, so parents always precede their
    children and the list is a valid topological order for the backward pass.
    """

    def __init__(self) -> None:
        self.nodes: list[Var] = []

    def variable(self, value: ArrayLike) -> Var:
        """Create a leaf node holding `value`."""
        return Var(self, np.array(value_of(value), dtype=float))

    def __len__(self) -> int:
        return len(self.nodes)


class Var:
    """A value recorded on a tape."""

    __slots__ = ("tape", "index", "value", "parents", "vjps")

    # let numpy defer binary operators to the reflected Var methods
    __array_ufunc__ = None

    def __init__(
        self,
        tape: Tape,
        value: np.ndarray,
        parents: tuple[Var, ...] = (),
        vjps: tuple[VJP, ...] = (),
    ) -> None:
        self.tape = tape
        self.value = value
        self.parents = parents
        self.vjps = vjps
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return self.value.size

    def __len__(self) -> int:
        return len(self.value)

    def __repr__(self) -> str:
        return f"Var(index={self.index}, shape={self.shape})"

    def __add__(self, other: ArrayLike) -> Var:
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> Var:
        return add(other, self)

    def __sub__(self, other: ArrayLike) -> Var:
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> Var:
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> Var:
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> Var:
        return mul(other, self)

    def __truediv__(self, other: ArrayLike) -> Var:
        return div(self, other)

    def __rtruediv__(self, other: ArrayLike) -> Var:
        return div(other, self)

    def __neg__(self) -> Var:
        return neg(self)

    def __pow__(self, exponent: float) -> Var:
        return power(self, exponent)

    def __matmul__(self, other: ArrayLike) -> Var:
        return matmul(self, other)

    def __rmatmul__(self, other: ArrayLike) -> Var:
        return matmul(other, self)

    def __getitem__(self, index) -> Var:
        return getitem(self, index)


def value_of(x: ArrayLike) -> np.ndarray:
    """Forward value of `x` as a float array, detached from any tape."""
    if isinstance(x, Var):
        return x.value
    return np.asarray(x, dtype=float)


def is_var(x: object) -> bool:
    return isinstance(x, Var)


def lift(constant: ArrayLike, tape: Tape | None = None) -> Var:
    """Record `constant` as a leaf on `tape` (a fresh tape when omitted)."""
    if isinstance(constant, Var):
        return constant
    return (tape or Tape()).variable(constant)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _record(value: np.ndarray, pairs: Sequence[tuple[ArrayLike, VJP]]) -> ArrayLike:
    """Wrap `value` in a node when any operand lives on a tape."""
    recorded = [(x, fn) for x, fn in pairs if isinstance(x, Var)]
    if not recorded:
        return value
    tape = recorded[0][0].tape
    if any(x.tape is not tape for x, _ in recorded):
        raise DifferentiationError("Cannot combine values from different tapes")
    return Var(
        tape,
        value,
        tuple(x for x, _ in recorded),
        tuple(fn for _, fn in recorded),
    )


def add(a: ArrayLike, b: ArrayLike) -> ArrayLike:
    av, bv = value_of(a), value_of(b)
    return _record(av + bv, [(a, lambda g: g), (b, lambda g: g)])


def sub(a: ArrayLike, b: ArrayLike) -> ArrayLike:
    av, bv = value_of(a), value_of(b)
    return _record(av - bv, [(a, lambda g: g), (b, lambda g: -g)])


def mul(a: ArrayLike, b: ArrayLike) -> ArrayLike:
    av, bv = value_of(a), value_of(b)
    return _record(av * bv, [(a, lambda g: g * bv), (b, lambda g: g * av)])


def div(a: ArrayLike, b: ArrayLike) -> ArrayLike:
    av, bv = value_of(a), value_of(b)
    if np.any(bv == 0):
        raise EvaluationError("division by zero")
    return _record(
        av / bv,
        [(a, lambda g: g / bv), (b, lambda g: -g * av / (bv * bv))],
    )


def neg(a: ArrayLike) -> ArrayLike:
    return _record(-value_of(a), [(a, lambda g: -g)])


def sqrt(a: ArrayLike) -> ArrayLike:
    av = value_of(a)
    if np.any(av < 0):
        raise EvaluationError("square root of a negative value")
    out = np.sqrt(av)
    positive = out > 0
    safe = np.where(positive, out, 1.0)
    return _record(out, [(a, lambda g: np.where(positive, 0.5 * g / safe, 0.0))])


def minimum(a: ArrayLike, b: ArrayLike) -> ArrayLike:
    av, bv = value_of(a), value_of(b)
    take_a = av <= bv
    return _record(
        np.where(take_a, av, bv),
        [(a, lambda g: g * take_a), (b, lambda g: g * ~take_a)],
    )


def maximum(a: ArrayLike, b: ArrayLike) -> ArrayLike:
    av, bv = value_of(a), value_of(b)
    take_a = av >= bv
    return _record(
        np.where(take_a, av, bv),
        [(a, lambda g: g * take_a), (b, lambda g: g * ~take_a)],
    )


def clamp_min(a: ArrayLike, lower: float) -> ArrayLike:
    return maximum(a, lower)


def absolute(a: ArrayLike) -> ArrayLike:
    av = value_of(a)
    return _record(np.abs(av), [(a, lambda g: g * np.sign(av))])


def where(condition: np.ndarray, a: ArrayLike, b: ArrayLike) -> ArrayLike:
    """Select from `a` where the (constant) condition holds, else from `b`."""
    cond = np.asarray(condition, dtype=bool)
    av, bv = value_of(a), value_of(b)
    return _record(
        np.where(cond, av, bv),
        [(a, lambda g: g * cond), (b, lambda g: g * ~cond)],
    )


def power(a: ArrayLike, exponent: float) -> ArrayLike:
    av = value_of(a)
    out = av**exponent

    def vjp(g: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            local = exponent * av ** (exponent - 1)
        return g * np.where(np.isfinite(local), local, 0.0)

    return _record(out, [(a, vjp)])


def sum(a: ArrayLike, axis: int | None = None, keepdims: bool = False) -> ArrayLike:  # noqa: A001
    av = value_of(a)

    def vjp(g: np.ndarray) -> np.ndarray:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, av.shape)

    return _record(np.sum(av, axis=axis, keepdims=keepdims), [(a, vjp)])


def mean(a: ArrayLike, axis: int | None = None) -> ArrayLike:
    av = value_of(a)
    count = av.size if axis is None else av.shape[axis]
    if count == 0:
        raise EvaluationError("mean over an empty selection")
    return mul(sum(a, axis=axis), 1.0 / count)


def getitem(a: ArrayLike, index) -> ArrayLike:
    av = value_of(a)

    def vjp(g: np.ndarray) -> np.ndarray:
        out = np.zeros_like(av)
        np.add.at(out, index, g)
        return out

    return _record(np.array(av[index], dtype=float), [(a, vjp)])


def component(a: ArrayLike, i: int) -> ArrayLike:
    """The `i`-th entry along the last axis (x, y or z of a vector batch)."""
    av = value_of(a)

    def vjp(g: np.ndarray) -> np.ndarray:
        out = np.zeros_like(av)
        out[..., i] = g
        return out

    return _record(np.array(av[..., i], dtype=float), [(a, vjp)])


def stack(items: Sequence[ArrayLike], axis: int = 0) -> ArrayLike:
    values = [value_of(x) for x in items]
    out = np.stack(values, axis=axis)
    pairs = [(x, _take_vjp(i, axis)) for i, x in enumerate(items)]
    return _record(out, pairs)


def _take_vjp(i: int, axis: int) -> VJP:
    return lambda g: np.take(g, i, axis=axis)


def concatenate(items: Sequence[ArrayLike], axis: int = 0) -> ArrayLike:
    values = [value_of(x) for x in items]
    out = np.concatenate(values, axis=axis)
    pairs = []
    start = 0
    for x, v in zip(items, values):
        stop = start + v.shape[axis]
        pairs.append((x, _slice_vjp(start, stop, axis)))
        start = stop
    return _record(out, pairs)


def _slice_vjp(start: int, stop: int, axis: int) -> VJP:
    return lambda g: np.take(g, np.arange(start, stop), axis=axis)


def reshape(a: ArrayLike, shape: tuple[int, ...]) -> ArrayLike:
    av = value_of(a)
    return _record(av.reshape(shape), [(a, lambda g: g.reshape(av.shape))])


def matmul(a: ArrayLike, b: ArrayLike) -> ArrayLike:
    """Batched matrix product over the last two axes."""
    av, bv = value_of(a), value_of(b)
    return _record(
        av @ bv,
        [
            (a, lambda g: g @ np.swapaxes(bv, -1, -2)),
            (b, lambda g: np.swapaxes(av, -1, -2) @ g),
        ],
    )


def matvec(m: ArrayLike, v: ArrayLike) -> ArrayLike:
    """Batched matrix-vector product `m @ v` over the trailing axes."""
    mv, vv = value_of(m), value_of(v)
    return _record(
        np.einsum("...ij,...j->...i", mv, vv),
        [
            (m, lambda g: g[..., :, None] * vv[..., None, :]),
            (v, lambda g: np.einsum("...ij,...i->...j", mv, g)),
        ],
    )


def dot(a: ArrayLike, b: ArrayLike, axis: int = -1) -> ArrayLike:
    return sum(mul(a, b), axis=axis)


def norm2(a: ArrayLike, axis: int = -1) -> ArrayLike:
    """Euclidean norm along `axis`; the gradient at the zero vector is 0."""
    av = value_of(a)
    out = np.sqrt(np.sum(av * av, axis=axis))

    def vjp(g: np.ndarray) -> np.ndarray:
        n = np.expand_dims(out, axis)
        safe = np.where(n > 0, n, 1.0)
        return np.where(n > 0, np.expand_dims(g, axis) * av / safe, 0.0)

    return _record(out, [(a, vjp)])


def pnorm(a: ArrayLike, p: float, axis: int = -1) -> ArrayLike:
    """L-p norm along `axis` for p >= 1."""
    if p < 1:
        raise EvaluationError(f"norm order must be >= 1, got {p}")
    if p == 1:
        return sum(absolute(a), axis=axis)
    if p == 2:
        return norm2(a, axis=axis)
    av = value_of(a)
    out = np.sum(np.abs(av) ** p, axis=axis) ** (1.0 / p)

    def vjp(g: np.ndarray) -> np.ndarray:
        n = np.expand_dims(out, axis)
        safe = np.where(n > 0, n, 1.0)
        local = np.abs(av) ** (p - 1) * np.sign(av) / safe ** (p - 1)
        return np.where(n > 0, np.expand_dims(g, axis) * local, 0.0)

    return _record(out, [(a, vjp)])


def cross2(a: ArrayLike, b: ArrayLike) -> ArrayLike:
    """Planar cross product a0*b1 - a1*b0 over the last axis."""
    return sub(
        mul(component(a, 0), component(b, 1)), mul(component(a, 1), component(b, 0))
    )


def _unary(a: ArrayLike, f: np.ndarray, df: np.ndarray) -> ArrayLike:
    return _record(f, [(a, lambda g: g * df)])


_SERIES_THRESHOLD = 1e-4


def rotation_coefficients(theta_sq: ArrayLike) -> tuple[ArrayLike, ArrayLike]:
    """Rodrigues coefficients as functions of the squared rotation angle.

    Returns `(A, B)` with A = sin(t)/t and B = (1 - cos(t))/t**2 for
    t = sqrt(theta_sq). Small angles use Taylor series so both values and
    derivatives stay finite at the identity rotation.
    """
    s = value_of(theta_sq)
    small = s < _SERIES_THRESHOLD
    safe_s = np.where(small, 1.0, s)
    t = np.sqrt(safe_s)
    sin_t, cos_t = np.sin(t), np.cos(t)

    a_big = sin_t / t
    b_big = (1.0 - cos_t) / safe_s
    da_big = (t * cos_t - sin_t) / (2.0 * t * safe_s)
    db_big = (t * sin_t - 2.0 * (1.0 - cos_t)) / (2.0 * safe_s * safe_s)

    a_small = 1.0 - s / 6.0 + s * s / 120.0
    b_small = 0.5 - s / 24.0 + s * s / 720.0
    da_small = -1.0 / 6.0 + s / 60.0
    db_small = -1.0 / 24.0 + s / 360.0

    coef_a = _unary(theta_sq, np.where(small, a_small, a_big), np.where(small, da_small, da_big))
    coef_b = _unary(theta_sq, np.where(small, b_small, b_big), np.where(small, db_small, db_big))
    return coef_a, coef_b


def gradient(output: ArrayLike, inputs: Sequence[ArrayLike]) -> list[np.ndarray]:
    """Adjoints of a scalar `output` with respect to each of `inputs`.

    Inputs that the output does not depend on (including plain constants)
    get a zero gradient of their own shape.

    Raises:
        DifferentiationError: If `output` is not a scalar
    """
    out_value = value_of(output)
    if out_value.size != 1:
        raise DifferentiationError(
            f"gradient requires a scalar output, got shape {out_value.shape}"
        )
    if not isinstance(output, Var):
        return [np.zeros_like(value_of(x)) for x in inputs]

    wanted = {x.index for x in inputs if isinstance(x, Var) and x.tape is output.tape}
    grads: dict[int, np.ndarray] = {output.index: np.ones_like(output.value)}
    for node in reversed(output.tape.nodes[: output.index + 1]):
        g = grads.get(node.index)
        if g is None or not node.parents:
            continue
        for parent, vjp in zip(node.parents, node.vjps):
            contribution = _unbroadcast(np.asarray(vjp(g), dtype=float), parent.shape)
            previous = grads.get(parent.index)
            grads[parent.index] = contribution if previous is None else previous + contribution
        if node.index not in wanted:
            del grads[node.index]

    result = []
    for x in inputs:
        if isinstance(x, Var) and x.index in grads and x.tape is output.tape:
            result.append(np.array(grads[x.index], dtype=float).reshape(x.shape))
        else:
            result.append(np.zeros_like(value_of(x)))
    return result


def check_gradient(
    f: Callable[[ArrayLike], ArrayLike],
    x0: ArrayLike,
    h: float = 1e-5,
    coords: Sequence[int] | None = None,
) -> float:
    """Compare reverse-mode gradients with central finite differences.

    Args:
        f: Scalar function accepting either a `Var` or a plain array
        x0: Point to check at
        h: Finite-difference step
        coords: Flat coordinate indices to check (all when omitted)

    Returns:
        max over checked coordinates of |g_ad - g_fd| / max(1, |g_fd|)

    Raises:
        DifferentiationError: If f is non-scalar or non-finite near x0
    """
    x0 = np.array(value_of(x0), dtype=float)
    tape = Tape()
    x = tape.variable(x0)
    out = f(x)
    out_value = value_of(out)
    if out_value.size != 1:
        raise DifferentiationError(
            f"check_gradient requires a scalar function, got shape {out_value.shape}"
        )
    if not np.isfinite(out_value).all():
        raise DifferentiationError("function is not finite at x0")
    g_ad = gradient(out, [x])[0].ravel()

    flat = x0.ravel()
    indices = range(flat.size) if coords is None else coords
    worst = 0.0
    for i in indices:
        shifted = flat.copy()
        shifted[i] = flat[i] + h
        f_plus = float(value_of(f(shifted.reshape(x0.shape))))
        shifted[i] = flat[i] - h
        f_minus = float(value_of(f(shifted.reshape(x0.shape))))
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise DifferentiationError(f"function is not finite near x0 (coordinate {i})")
        g_fd = (f_plus - f_minus) / (2.0 * h)
        worst = max(worst, abs(g_ad[i] - g_fd) / max(1.0, abs(g_fd)))
    logger.debug(f"Gradient check over {len(indices)} coordinates: max error {worst:.3e}")
    return worst
