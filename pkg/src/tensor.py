"""Dense fp64 tensors with tape-based reverse-mode differentiation.

Every operation that receives at least one tensor requiring gradients appends
an entry to the computation trace. ``backward`` collects the entries reachable
from a scalar loss, orders them by creation and visits each exactly once in
reverse order, accumulating gradients into the leaf tensors.
"""

import itertools
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import NumericError


class TensorError(NumericError):
    """Base exception for tensor operations."""
    pass


class DimensionError(TensorError):
    """Raised when operand shapes do not satisfy an operation's contract."""
    pass


class ContractError(TensorError):
    """Raised when a call violates a precondition other than shape."""
    pass


ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]
VJP = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_sequence = itertools.count()
_state = threading.local()


@contextmanager
def no_grad():
    """Within this block no operation is recorded on the current thread."""
    previous = getattr(_state, "disabled", False)
    _state.disabled = True
    try:
        yield
    finally:
        _state.disabled = previous


@dataclass
class TraceEntry:
    """One recorded primitive: its inputs, its output and its vector-Jacobian product."""
    seq: int
    op: str
    inputs: Tuple["Tensor", ...]
    output: "Tensor"
    vjp: VJP


class ComputationTrace:
    """Entries reachable from a tensor, in topological (creation) order."""

    def __init__(self, entries: List[TraceEntry]):
        self.entries = sorted(entries, key=lambda entry: entry.seq)

    @classmethod
    def collect(cls, root: "Tensor") -> "ComputationTrace":
        """
        Gather every trace entry the root depends on.

        Args:
            root: Tensor whose history is collected

        Returns:
            ComputationTrace ordered so that inputs precede their consumers
        """
        entries = []
        seen = set()
        stack = [root]
        while stack:
            tensor = stack.pop()
            entry = tensor._entry
            if entry is None or id(entry) in seen:
                continue
            seen.add(id(entry))
            entries.append(entry)
            stack.extend(entry.inputs)
        return cls(entries)

    def __iter__(self) -> Iterator[TraceEntry]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def ops(self) -> List[str]:
        return [entry.op for entry in self.entries]


class Tensor:
    """Dense row-major fp64 array, optionally tracked for gradients."""

    __array_priority__ = 100

    def __init__(self, values: ArrayLike, requires_grad: bool = False):
        if isinstance(values, Tensor):
            values = values.values
        self.values = np.array(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._entry: Optional[TraceEntry] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def is_leaf(self) -> bool:
        return self._entry is None

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        if self.values.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.values.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.values.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.values)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(value: ArrayLike) -> Tensor:
    """Lift arrays and scalars to constant tensors; tensors pass through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _record(op: str, values: np.ndarray, inputs: Sequence[Tensor], vjp: VJP) -> Tensor:
    out = Tensor(values)
    if not getattr(_state, "disabled", False) and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._entry = TraceEntry(next(_sequence), op, tuple(inputs), out, vjp)
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def backward(loss: Tensor) -> None:
    """
    Accumulate d(loss)/d(leaf) into every leaf tensor that requires gradients.

    Repeated calls without zeroing the leaves accumulate.

    Args:
        loss: Scalar tensor connected to the leaves by recorded operations

    Raises:
        ContractError: If the loss is not a scalar
    """
    if loss.values.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    seed = np.ones_like(loss.values)
    if loss._entry is None:
        if loss.requires_grad:
            loss.grad = seed if loss.grad is None else loss.grad + seed
        return

    pending = {id(loss): seed}
    for entry in reversed(ComputationTrace.collect(loss).entries):
        grad = pending.pop(id(entry.output), None)
        if grad is None:
            continue
        for tensor, partial in zip(entry.inputs, entry.vjp(grad)):
            if partial is None or not tensor.requires_grad:
                continue
            partial = _unbroadcast(partial, tensor.shape)
            if tensor._entry is None:
                tensor.grad = partial.copy() if tensor.grad is None else tensor.grad + partial
            else:
                key = id(tensor)
                pending[key] = partial if key not in pending else pending[key] + partial


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return _record("add", a.values + b.values, (a, b), lambda g: (g, g))


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    return _record("sub", a.values - b.values, (a, b), lambda g: (g, -g))


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    av, bv = a.values, b.values
    return _record("mul", av * bv, (a, b), lambda g: (g * bv, g * av))


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """
    Matrix product over the last two axes, batched over any leading axes.

    Raises:
        DimensionError: If an operand is not at least 2-D or inner extents differ
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError(f"matmul: incompatible batch shapes {a.shape} and {b.shape}")
    av, bv = a.values, b.values

    def vjp(g):
        return g @ np.swapaxes(bv, -1, -2), np.swapaxes(av, -1, -2) @ g

    return _record("matmul", av @ bv, (a, b), vjp)


def transpose(x: ArrayLike) -> Tensor:
    """Swap the last two axes."""
    x = as_tensor(x)
    if x.ndim < 2:
        raise DimensionError(f"transpose: needs at least 2 axes, got shape {x.shape}")
    return _record("transpose", np.swapaxes(x.values, -1, -2), (x,),
                   lambda g: (np.swapaxes(g, -1, -2),))


def reshape(x: ArrayLike, shape: Tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    try:
        values = x.values.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view shape {x.shape} as {shape}")
    original = x.shape
    return _record("reshape", values, (x,), lambda g: (g.reshape(original),))


def sum(x: ArrayLike, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    shape = x.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _record("sum", x.values.sum(axis=axis, keepdims=keepdims), (x,), vjp)


def mean(x: ArrayLike, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    count = x.size if axis is None else x.shape[axis]
    if count == 0:
        raise DimensionError(f"mean: empty reduction over shape {x.shape}")
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def relu(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    active = x.values > 0
    return _record("relu", np.where(active, x.values, 0.0), (x,), lambda g: (g * active,))


def exp(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.values)
    return _record("exp", y, (x,), lambda g: (g * y,))


def log(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    xv = x.values
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(xv)
    return _record("log", y, (x,), lambda g: (g / xv,))


def sqrt(x: ArrayLike) -> Tensor:
    """Square root whose gradient is taken as zero where the output is zero."""
    x = as_tensor(x)
    y = np.sqrt(np.maximum(x.values, 0.0))

    def vjp(g):
        safe = np.where(y > 0, y, 1.0)
        return (np.where(y > 0, g / (2.0 * safe), 0.0),)

    return _record("sqrt", y, (x,), vjp)


def softmax(x: ArrayLike, scale: float = 1.0, axis: int = -1) -> Tensor:
    """
    Max-stabilized softmax of ``scale * x`` along an axis.

    Raises:
        DimensionError: If the axis is empty
        ContractError: If scale is not positive
    """
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[axis] == 0:
        raise DimensionError(f"softmax: empty input of shape {x.shape}")
    if not scale > 0:
        raise ContractError(f"softmax: scale must be positive, got {scale}")
    z = scale * x.values
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (scale * y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _record("softmax", y, (x,), vjp)


def log_softmax(x: ArrayLike, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[axis] == 0:
        raise DimensionError(f"log_softmax: empty input of shape {x.shape}")
    z = x.values - x.values.max(axis=axis, keepdims=True)
    y = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))
    probs = np.exp(y)

    def vjp(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return _record("log_softmax", y, (x,), vjp)


def concat(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    """
    Concatenate tensors along an axis.

    Raises:
        DimensionError: If the list is empty or the other extents disagree
    """
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat: nothing to concatenate")
    try:
        values = np.concatenate([t.values for t in tensors], axis=axis)
    except (ValueError, IndexError):
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat: incompatible shapes {shapes} along axis {axis}")
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _record("concat", values, tensors, vjp)


def slice_axis(x: ArrayLike, axis: int, start: int, stop: int) -> Tensor:
    """
    Take ``x[start:stop]`` along one axis.

    Raises:
        DimensionError: If the range is empty or out of bounds
    """
    x = as_tensor(x)
    extent = x.shape[axis]
    if not 0 <= start < stop <= extent:
        raise DimensionError(f"slice: range [{start}, {stop}) invalid for extent {extent}")
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    shape = x.shape

    def vjp(g):
        full = np.zeros(shape)
        full[index] = g
        return (full,)

    return _record("slice", x.values[index], (x,), vjp)


def pick(x: ArrayLike, indices: Union[int, Sequence[int], np.ndarray]) -> Tensor:
    """
    Select one entry of the last axis per row.

    A 1-D input with an integer index yields a scalar; an (n, c) input with n
    indices yields an n-vector.
    """
    x = as_tensor(x)
    shape = x.shape
    if x.ndim == 1:
        index = (int(indices),)
    elif x.ndim == 2:
        indices = np.asarray(indices, dtype=int)
        if indices.shape != (shape[0],):
            raise DimensionError(f"pick: indices of shape {indices.shape} for input {shape}")
        index = (np.arange(shape[0]), indices)
    else:
        raise DimensionError(f"pick: expects 1-D or 2-D input, got shape {shape}")

    def vjp(g):
        full = np.zeros(shape)
        np.add.at(full, index, g)
        return (full,)

    return _record("pick", x.values[index], (x,), vjp)


def numerical_gradient(fn: Callable[[], Tensor], tensor: Tensor, step: float = 1e-5) -> np.ndarray:
    """
    Central finite-difference gradient of a scalar function w.r.t. one tensor.

    The tensor's values are perturbed in place and restored afterwards.

    Args:
        fn: Zero-argument callable recomputing the scalar loss
        tensor: Tensor whose entries are perturbed
        step: Perturbation size

    Returns:
        Array of the tensor's shape holding the estimated gradient
    """
    values = tensor.values
    grad = np.zeros_like(values)
    flat = values.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        upper = fn().item()
        flat[i] = original - step
        lower = fn().item()
        flat[i] = original
        out[i] = (upper - lower) / (2.0 * step)
    return grad
