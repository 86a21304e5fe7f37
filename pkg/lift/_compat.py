"""
Array interop helpers.

Shape extraction and numpy conversion that work the same for numpy arrays,
``lift.tensor.Tensor`` values and JAX arrays, without importing JAX.
"""

from __future__ import annotations

from typing import Any

import numpy as np


def get_shape(x: Any) -> tuple[int, ...]:
    """
    Extract shape from any array-like object.

    Raises:
        TypeError: If x doesn't have a shape attribute
    """
    if not hasattr(x, "shape"):
        raise TypeError(
            f"Cannot get shape from {type(x).__name__!r}: object has no 'shape' attribute"
        )
    return tuple(int(d) for d in x.shape)


def is_array(x: Any) -> bool:
    """True for objects exposing both ``.shape`` and ``.dtype``."""
    return hasattr(x, "shape") and hasattr(x, "dtype")


def to_numpy(x: Any, dtype: Any = None) -> np.ndarray:
    """
    Convert a Tensor, JAX array, numpy array or nested list to numpy.

    Tensors expose their buffer through ``.data``; everything else goes
    through ``np.asarray``.
    """
    data = getattr(x, "data", None)
    if isinstance(data, np.ndarray) and hasattr(x, "requires_grad"):
        x = data
    return np.asarray(x, dtype=dtype)
