"""
Shape contracts for model, pooling and probe entry points.

A contract maps argument names to shape specs built from ints, ``Dim``s,
``None`` wildcards and at most one ``...``:

    @expects(frames=(T, D))
    def time_variance(frames): ...

Violations raise ``DimensionError`` subclasses naming the function, the
argument, the expected spec, the actual shape and the bindings so far.
"""

from __future__ import annotations

import functools
import inspect
from collections.abc import Callable
from typing import Any, TypeVar

from lift._compat import get_shape, is_array
from lift.core import Batch, Dim, UnificationContext
from lift.errors import DimensionError, RankError

F = TypeVar("F", bound=Callable[..., Any])

ShapeSpec = tuple[Any, ...]

# Dimension names shared across the package.
N = Batch("N")  # videos / rows
T = Dim("T")  # frames
D = Dim("D")  # input feature width
Dl = Dim("d")  # latent width
S = Dim("S")  # tokens


def _is_ellipsis(item: Any) -> bool:
    return item is ...


def _split_ellipsis(spec: ShapeSpec) -> tuple[ShapeSpec, ShapeSpec] | None:
    """Split a spec at its ellipsis; None when the spec has none."""
    positions = [i for i, s in enumerate(spec) if _is_ellipsis(s)]
    if len(positions) > 1:
        raise ValueError("Shape spec cannot contain more than one ellipsis")
    if not positions:
        return None
    idx = positions[0]
    return spec[:idx], spec[idx + 1 :]


def format_spec(spec: ShapeSpec) -> str:
    """Format a shape spec for display in error messages."""

    def fmt(d: Any) -> str:
        if d is None:
            return "*"
        if _is_ellipsis(d):
            return "..."
        if isinstance(d, Dim):
            return d.name
        return str(d)

    return "(" + ", ".join(fmt(d) for d in spec) + ")"


def _match_dim(
    actual_dim: int,
    spec_dim: Any,
    index: int,
    actual: tuple[int, ...],
    spec: ShapeSpec,
    ctx: UnificationContext,
    source: str,
) -> None:
    if spec_dim is None:
        return
    if isinstance(spec_dim, Dim):
        ctx.bind(spec_dim, actual_dim, f"{source}[{index}]")
    elif isinstance(spec_dim, int):
        if actual_dim != spec_dim:
            reason = f"dim[{index}] expected {spec_dim}, got {actual_dim}"
            raise DimensionError(
                reason,
                expected=format_spec(spec),
                actual=actual,
                reason=reason,
                bindings=ctx.format_bindings(),
            )
    else:
        raise TypeError(
            f"Invalid spec element at position {index}: {spec_dim!r} "
            f"(expected int, Dim, None, or ...)"
        )


def match_shape(
    actual: tuple[int, ...],
    spec: ShapeSpec,
    ctx: UnificationContext,
    source: str,
) -> None:
    """
    Match an actual shape against a spec, binding symbolic dimensions.

    Raises:
        RankError: If the number of axes doesn't match
        DimensionError: If a concrete extent doesn't match
        UnificationError: If a symbolic dimension conflicts with a prior binding
    """
    parts = _split_ellipsis(spec)
    if parts is not None:
        before, after = parts
        required = len(before) + len(after)
        if len(actual) < required:
            raise RankError(
                expected_rank=f"{required}+",
                actual_rank=len(actual),
                expected_shape=format_spec(spec),
                actual_shape=actual,
                bindings=ctx.format_bindings(),
            )
        for i, spec_dim in enumerate(before):
            _match_dim(actual[i], spec_dim, i, actual, spec, ctx, source)
        offset = len(actual) - len(after)
        for i, spec_dim in enumerate(after):
            _match_dim(actual[offset + i], spec_dim, offset + i, actual, spec, ctx, source)
        return

    if len(actual) != len(spec):
        raise RankError(
            expected_rank=len(spec),
            actual_rank=len(actual),
            expected_shape=format_spec(spec),
            actual_shape=actual,
            bindings=ctx.format_bindings(),
        )
    for i, spec_dim in enumerate(spec):
        _match_dim(actual[i], spec_dim, i, actual, spec, ctx, source)


def check_shape(
    x: Any,
    spec: ShapeSpec,
    name: str = "array",
    *,
    ctx: UnificationContext | None = None,
    operation: str | None = None,
) -> UnificationContext:
    """
    Check that an array's shape matches a spec outside of a decorator.

    Returns:
        The unification context, so several checks can share bindings.

    Example:
        ```python
        ctx = check_shape(frames, (T, D), "frames")
        check_shape(weight, (D, Dl), "weight", ctx=ctx)
        ```
    """
    if ctx is None:
        ctx = UnificationContext()
    try:
        match_shape(get_shape(x), spec, ctx, name)
    except DimensionError as e:
        e.argument = name
        if operation is not None:
            e.operation = operation
        raise
    return ctx


def expects(**shape_specs: ShapeSpec) -> Callable[[F], F]:
    """
    Decorator validating argument shapes on function entry.

    Arguments that are not arrays (e.g. ``None`` for an optional model) are
    skipped. Bindings are shared across all arguments of one call.

    Example:
        ```python
        @expects(frames=(T, D))
        def resample(frames, count): ...
        ```
    """

    def decorator(fn: F) -> F:
        sig = inspect.signature(fn)
        fn_name = fn.__qualname__
        param_names = set(sig.parameters)
        for arg_name in shape_specs:
            if arg_name not in param_names:
                raise ValueError(
                    f"@expects: '{arg_name}' is not a parameter of {fn_name}. "
                    f"Valid parameters: {sorted(param_names)}"
                )

        @functools.wraps(fn)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            try:
                bound = sig.bind(*args, **kwargs)
            except TypeError:
                return fn(*args, **kwargs)
            ctx = UnificationContext()
            for arg_name, spec in shape_specs.items():
                value = bound.arguments.get(arg_name)
                if value is None or not is_array(value):
                    continue
                try:
                    match_shape(get_shape(value), spec, ctx, arg_name)
                except DimensionError as e:
                    e.operation = fn_name
                    if e.argument is None:
                        e.argument = arg_name
                    if e.bindings is None:
                        e.bindings = ctx.format_bindings()
                    raise
            return fn(*args, **kwargs)

        wrapper.__lift_specs__ = shape_specs  # type: ignore[attr-defined]
        return wrapper  # type: ignore[return-value]

    return decorator


def ensures(*, result: ShapeSpec) -> Callable[[F], F]:
    """
    Decorator validating the shape of a single-array return value.

    Example:
        ```python
        @ensures(result=(T, D))
        def resample_frames(seq, count): ...
        ```
    """

    def decorator(fn: F) -> F:
        fn_name = fn.__qualname__

        @functools.wraps(fn)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            output = fn(*args, **kwargs)
            if is_array(output):
                try:
                    match_shape(get_shape(output), result, UnificationContext(), "result")
                except DimensionError as e:
                    e.operation = fn_name
                    e.argument = "result"
                    raise
            return output

        wrapper.__lift_result_spec__ = result  # type: ignore[attr-defined]
        return wrapper  # type: ignore[return-value]

    return decorator
