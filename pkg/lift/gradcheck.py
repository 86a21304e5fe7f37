"""
Finite-difference verification of tape gradients.
"""

from __future__ import annotations

from collections.abc import Callable, Mapping
from typing import Any

import numpy as np

from lift._compat import to_numpy
from lift.errors import LiftError, NonFiniteError
from lift.tensor import GradTape, Tensor, float64_mode


def _scalar(value: Tensor, where: str) -> float:
    if not isinstance(value, Tensor) or value.size != 1:
        raise LiftError(
            "checked function must return a scalar Tensor",
            operation="grad_check",
            actual=getattr(value, "shape", type(value).__name__),
        )
    out = value.item()
    if not np.isfinite(out):
        raise NonFiniteError(f"function value is not finite at {where}", operation="grad_check")
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |analytic - numeric| / max(1, |analytic|) over all coordinates."""
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(1.0, np.abs(analytic))
    return float(np.max(np.abs(analytic - numeric) / denom))


def numeric_gradient(
    f: Callable[[Tensor], Tensor],
    x: np.ndarray,
    h: float = 1e-3,
    coords: np.ndarray | None = None,
) -> np.ndarray:
    """
    Central-difference gradient of ``f`` at ``x``.

    Only the flat positions in ``coords`` are evaluated when given; the
    other entries are left at zero.
    """
    base = np.array(x, dtype=np.float64)
    grad = np.zeros(base.size)
    flat = base.reshape(-1)
    positions = range(base.size) if coords is None else coords
    for i in positions:
        orig = flat[i]
        flat[i] = orig + h
        plus = _scalar(f(Tensor(base)), f"coordinate {i} + h")
        flat[i] = orig - h
        minus = _scalar(f(Tensor(base)), f"coordinate {i} - h")
        flat[i] = orig
        grad[i] = (plus - minus) / (2.0 * h)
    return grad.reshape(base.shape)


def grad_check(f: Callable[[Tensor], Tensor], x: Any, h: float = 1e-3) -> float:
    """
    Compare the tape gradient of a scalar function with central differences.

    Evaluation runs in 64-bit mode.

    Returns:
        max over coordinates of |analytic - numeric| / max(1, |analytic|)

    Raises:
        NonFiniteError: If ``f(x)`` is not finite.

    Example:
        ```python
        err = grad_check(lambda t: ops.sum(ops.mul(t, t)), np.array([1.0, 2.0, 3.0]))
        assert err < 1e-8
        ```
    """
    with float64_mode():
        x64 = np.array(to_numpy(x), dtype=np.float64)
        with GradTape() as tape:
            xt = tape.watch(Tensor(x64))
            y = f(xt)
        _scalar(y, "x")
        analytic = tape.gradient(y, xt)
        numeric = numeric_gradient(f, x64, h)
    return relative_error(analytic, numeric)


def grad_check_params(
    f: Callable[[dict[str, Tensor]], Tensor],
    params: Mapping[str, Any],
    h: float = 1e-3,
    max_entries: int | None = None,
    seed: int = 0,
) -> dict[str, float]:
    """
    Gradient check of a scalar function of several named tensors.

    ``max_entries`` caps the number of coordinates probed per tensor; the
    probed positions are drawn with ``seed``.

    Returns:
        Relative error per parameter name.
    """
    rng = np.random.default_rng(seed)
    errors: dict[str, float] = {}
    with float64_mode():
        base = {name: np.array(to_numpy(v), dtype=np.float64) for name, v in params.items()}
        with GradTape() as tape:
            watched = {name: tape.watch(Tensor(v), name=name) for name, v in base.items()}
            y = f(watched)
        _scalar(y, "params")
        analytic = tape.gradient(y, watched)

        for name, value in base.items():
            coords = None
            if max_entries is not None and value.size > max_entries:
                coords = np.sort(rng.choice(value.size, size=max_entries, replace=False))

            def partial(t: Tensor, name: str = name) -> Tensor:
                inputs = {k: Tensor(v) for k, v in base.items() if k != name}
                inputs[name] = t
                return f(inputs)

            numeric = numeric_gradient(partial, value, h, coords)
            a = analytic[name]
            if coords is not None:
                errors[name] = relative_error(a.reshape(-1)[coords], numeric.reshape(-1)[coords])
            else:
                errors[name] = relative_error(a, numeric)
    return errors
