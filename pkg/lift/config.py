"""
Global runtime configuration.
"""

from __future__ import annotations

import os
from collections.abc import Iterator
from contextlib import contextmanager
from typing import Any, Literal

import numpy as np

from lift.errors import ConfigError

Precision = Literal["float32", "float64"]

SEED_ENV_VAR = "LIFT_SEED"


class Config:
    """
    Global runtime configuration.

    Attributes:
        precision: Storage dtype of every ``Tensor`` created from now on.
            - "float32": normal operation (default)
            - "float64": gradient verification only
        check_finite: Reject NaN/Inf when a ``Tensor`` is constructed.

    Example:
        ```python
        from lift import config

        with config.override(precision="float64"):
            err = grad_check(f, x)
        ```
    """

    __slots__ = ("_precision", "_check_finite")

    def __init__(self) -> None:
        self._precision: Precision = "float32"
        self._check_finite = True

    @property
    def precision(self) -> Precision:
        """Get current storage precision."""
        return self._precision

    @precision.setter
    def precision(self, value: Precision) -> None:
        valid = ("float32", "float64")
        if value not in valid:
            raise ValueError(f"Invalid precision: {value!r}. Must be one of: {valid}")
        self._precision = value

    @property
    def check_finite(self) -> bool:
        """Whether tensor construction rejects non-finite values."""
        return self._check_finite

    @check_finite.setter
    def check_finite(self, value: bool) -> None:
        if not isinstance(value, bool):
            raise ValueError(f"check_finite must be a bool, got {type(value).__name__}")
        self._check_finite = value

    @property
    def dtype(self) -> np.dtype[Any]:
        """numpy dtype matching ``precision``."""
        return np.dtype(self._precision)

    @contextmanager
    def override(self, **values: Any) -> Iterator[Config]:
        """Temporarily change settings, restoring the previous ones on exit."""
        for name in values:
            if name not in ("precision", "check_finite"):
                raise ValueError(f"Unknown config field: {name!r}")
        previous = {name: getattr(self, name) for name in values}
        try:
            for name, value in values.items():
                setattr(self, name, value)
            yield self
        finally:
            for name, value in previous.items():
                setattr(self, name, value)

    def __repr__(self) -> str:
        return f"Config(precision={self._precision!r}, check_finite={self._check_finite!r})"


def resolve_seed(seed: int | None) -> int:
    """
    Pick the seed for a run: the explicit value, else ``$LIFT_SEED``, else 0.

    Raises:
        ConfigError: If the environment variable is not an integer.
    """
    if seed is not None:
        return int(seed)
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or raw.strip() == "":
        return 0
    try:
        return int(raw)
    except ValueError as err:
        raise ConfigError(
            f"{SEED_ENV_VAR} must be an integer, got {raw!r}", argument=SEED_ENV_VAR
        ) from err


# Global singleton instance
config = Config()
