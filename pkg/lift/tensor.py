"""
Dense tensor values and the reverse-mode gradient tape.

A ``Tensor`` is an immutable wrapper around a row-major numpy buffer stored
in the precision selected by ``lift.config``. Primitive operations (see
``lift.ops``) record themselves on the innermost active ``GradTape`` when at
least one input requires a gradient:

    with GradTape() as tape:
        w = tape.watch(Tensor(weights))
        loss = ops.sum(ops.matmul(x, w))
    grad_w = tape.gradient(loss, w)

Tapes are single-threaded; independent tapes may run on different threads.
"""

from __future__ import annotations

import threading
from collections.abc import Callable, Iterator, Mapping, Sequence
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, overload

import numpy as np

from lift._compat import to_numpy
from lift.config import config
from lift.errors import LiftError, NonFiniteError

# Backward rule: output cotangent -> one cotangent (or None) per input.
BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tensor:
    """
    Immutable dense tensor.

    Attributes:
        data: Read-only numpy buffer in the configured precision.
        requires_grad: True when the value is watched by a tape or was
            computed from a watched value.
        name: Optional label used in diagnostics.
    """

    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data: Any, *, name: str | None = None) -> None:
        arr = np.array(to_numpy(data), dtype=config.dtype, copy=True, order="C")
        if config.check_finite and not np.all(np.isfinite(arr)):
            raise NonFiniteError(
                "tensor contains NaN or Inf",
                operation="Tensor",
                argument=name,
                actual=tuple(arr.shape),
            )
        arr.flags.writeable = False
        self.data: np.ndarray = arr
        self.requires_grad = False
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray, name: str | None = None) -> Tensor:
        """Adopt a freshly computed buffer without copying or checking it."""
        out = cls.__new__(cls)
        buf = np.ascontiguousarray(arr, dtype=config.dtype)
        buf.flags.writeable = False
        out.data = buf
        out.requires_grad = False
        out.name = name
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype[Any]:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        """Return a writable copy of the buffer."""
        return np.array(self.data)

    def item(self) -> float:
        if self.data.size != 1:
            raise LiftError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __len__(self) -> int:
        return self.shape[0] if self.shape else 1

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    # Operator sugar; the rules live in lift.ops.
    def __add__(self, other: Any) -> Tensor:
        from lift import ops

        return ops.add(self, other)

    def __sub__(self, other: Any) -> Tensor:
        from lift import ops

        return ops.sub(self, other)

    def __mul__(self, other: Any) -> Tensor:
        from lift import ops

        if isinstance(other, (int, float)):
            return ops.scale(self, float(other))
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> Tensor:
        from lift import ops

        return ops.scale(self, -1.0)

    def __matmul__(self, other: Any) -> Tensor:
        from lift import ops

        return ops.matmul(self, other)


def as_tensor(x: Any, name: str | None = None) -> Tensor:
    """Return ``x`` if it already is a Tensor, else wrap a copy of it."""
    if isinstance(x, Tensor):
        if x.dtype == config.dtype or x.requires_grad:
            return x
        return Tensor._wrap(x.data, name=x.name)
    return Tensor(x, name=name)


@dataclass
class _Node:
    output: Tensor
    inputs: tuple[Tensor, ...]
    backward: BackwardFn
    op: str


_state = threading.local()


def _tape_stack() -> list[GradTape]:
    stack = getattr(_state, "tapes", None)
    if stack is None:
        stack = []
        _state.tapes = stack
    return stack


def active_tape() -> GradTape | None:
    """The innermost tape of the current thread, if any."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class GradTape:
    """
    Records primitive applications for one backward pass.

    Nodes are appended in creation order, which is a topological order of
    the computation; ``gradient`` walks them once in reverse.
    """

    def __init__(self) -> None:
        self._nodes: list[_Node] = []
        self._closed = False

    def __enter__(self) -> GradTape:
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type: Any, exc_val: Any, exc_tb: Any) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        self._closed = True

    def __len__(self) -> int:
        return len(self._nodes)

    def watch(self, x: Any, name: str | None = None) -> Tensor:
        """Return a tensor sharing ``x``'s values that gradients flow back to."""
        src = as_tensor(x, name=name)
        out = Tensor._wrap(src.data, name=name or src.name)
        out.requires_grad = True
        return out

    def record(
        self, output: Tensor, inputs: tuple[Tensor, ...], backward: BackwardFn, op: str
    ) -> None:
        output.requires_grad = True
        self._nodes.append(_Node(output, inputs, backward, op))

    @overload
    def gradient(self, target: Tensor, sources: Tensor) -> np.ndarray: ...

    @overload
    def gradient(
        self, target: Tensor, sources: Mapping[str, Tensor]
    ) -> dict[str, np.ndarray]: ...

    @overload
    def gradient(self, target: Tensor, sources: Sequence[Tensor]) -> list[np.ndarray]: ...

    def gradient(self, target: Tensor, sources: Any) -> Any:
        """
        Gradient of a scalar ``target`` with respect to each source.

        Sources that ``target`` does not depend on get an all-zero gradient.
        The result mirrors the structure of ``sources``.
        """
        if target.size != 1:
            raise LiftError(
                "gradient target must be a scalar",
                operation="GradTape.gradient",
                actual=target.shape,
            )
        grads: dict[int, np.ndarray] = {
            id(target): np.ones(target.shape, dtype=target.dtype)
        }
        for node in reversed(self._nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            for inp, gi in zip(node.inputs, node.backward(g), strict=True):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = np.asarray(gi, dtype=inp.dtype).reshape(inp.shape)

        def lookup(src: Tensor) -> np.ndarray:
            g = grads.get(id(src))
            if g is None:
                return np.zeros(src.shape, dtype=src.dtype)
            return np.array(g, dtype=src.dtype).reshape(src.shape)

        if isinstance(sources, Tensor):
            return lookup(sources)
        if isinstance(sources, Mapping):
            return {key: lookup(src) for key, src in sources.items()}
        return [lookup(src) for src in sources]


def record(
    op: str, out: np.ndarray, inputs: tuple[Tensor, ...], backward: BackwardFn
) -> Tensor:
    """Wrap ``out`` and register its backward rule on the active tape if needed."""
    result = Tensor._wrap(out)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape.record(result, inputs, backward, op)
    return result


@contextmanager
def float64_mode() -> Iterator[None]:
    """Evaluate in 64-bit precision; used for gradient verification."""
    with config.override(precision="float64"):
        yield
