"""
Error types with rich diagnostic information.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from lift.core import Dim


class LiftError(Exception):
    """
    Base exception for every failure raised by the toolkit.

    Carries optional diagnostic fields so a failure can be understood
    without re-running the pipeline that produced it.
    """

    kind = "LiftError"

    def __init__(
        self,
        message: str,
        *,
        operation: str | None = None,
        argument: str | None = None,
        expected: Any = None,
        actual: Any = None,
        reason: str | None = None,
        bindings: str | None = None,
    ) -> None:
        self.message = message
        self.operation = operation
        self.argument = argument
        self.expected = expected
        self.actual = actual
        self.reason = reason
        self.bindings = bindings
        super().__init__(message)

    def _detail_lines(self) -> list[str]:
        lines = []
        if self.operation:
            lines.append(f"  operation: {self.operation}")
        if self.argument:
            lines.append(f"  argument:  {self.argument}")
        if self.expected is not None:
            lines.append(f"  expected:  {self._format_shape(self.expected)}")
        if self.actual is not None:
            lines.append(f"  actual:    {self._format_shape(self.actual)}")
        if self.reason:
            lines.append(f"  reason:    {self.reason}")
        if self.bindings:
            lines.append(f"  bindings:  {self.bindings}")
        return lines

    def __str__(self) -> str:
        details = self._detail_lines()
        if not details:
            return f"{self.kind}: {self.message}"
        if self.reason is None:
            details.insert(0, f"  message:   {self.message}")
        return "\n".join([f"{self.kind}:", *details])

    @staticmethod
    def _format_shape(shape: Any) -> str:
        """Format a shape spec or tuple for display."""
        if isinstance(shape, tuple):
            return "(" + ", ".join(str(d) for d in shape) + ")"
        return str(shape)


class DimensionError(LiftError):
    """Raised when an array's shape violates a contract."""

    kind = "DimensionError"


class RankError(DimensionError):
    """Raised when array rank (number of axes) doesn't match the contract."""

    kind = "RankError"

    def __init__(
        self,
        *,
        operation: str | None = None,
        argument: str | None = None,
        expected_rank: int | str,
        actual_rank: int,
        expected_shape: Any,
        actual_shape: tuple[int, ...],
        bindings: str | None = None,
    ) -> None:
        reason = f"expected rank {expected_rank}, got rank {actual_rank}"
        super().__init__(
            reason,
            operation=operation,
            argument=argument,
            expected=expected_shape,
            actual=actual_shape,
            reason=reason,
            bindings=bindings,
        )


class UnificationError(DimensionError):
    """
    Raised when a symbolic dimension is bound to two different extents.

    Happens when the same Dim object appears in several arguments whose
    concrete sizes disagree, e.g. frames with D=64 fed to a model built for D=384.
    """

    kind = "UnificationError"

    def __init__(
        self,
        dim: Dim,
        expected_value: int,
        expected_source: str,
        actual_value: int,
        actual_source: str,
    ) -> None:
        self.dim = dim
        self.expected_value = expected_value
        self.expected_source = expected_source
        self.actual_value = actual_value
        self.actual_source = actual_source

        reason = (
            f"dimension '{dim.name}' bound to {expected_value} from {expected_source}, "
            f"but got {actual_value} from {actual_source}"
        )
        super().__init__(reason, reason=reason)


class ConfigError(LiftError):
    """Raised when a hyperparameter set is internally inconsistent."""

    kind = "ConfigError"


class ValidationError(LiftError):
    """
    Raised when input data violates a documented precondition.

    ``line`` is the 1-based line of the offending record when the data
    came from a text file.
    """

    kind = "ValidationError"

    def __init__(self, message: str, *, line: int | None = None, **kwargs: Any) -> None:
        self.line = line
        super().__init__(message, **kwargs)

    def _detail_lines(self) -> list[str]:
        lines = super()._detail_lines()
        if self.line is not None:
            lines.append(f"  line:      {self.line}")
        return lines


class FormatError(LiftError):
    """Raised when a binary or JSON file does not follow its format."""

    kind = "FormatError"

    def __init__(
        self,
        message: str,
        *,
        path: str | None = None,
        offset: int | None = None,
        **kwargs: Any,
    ) -> None:
        self.path = path
        self.offset = offset
        super().__init__(message, **kwargs)

    def __str__(self) -> str:
        where = []
        if self.path is not None:
            where.append(str(self.path))
        if self.offset is not None:
            where.append(f"offset {self.offset}")
        suffix = f" ({', '.join(where)})" if where else ""
        return f"{self.kind}: {self.message}{suffix}"


class NonFiniteError(LiftError):
    """Raised when NaN or Inf shows up where only finite values are allowed."""

    kind = "NonFiniteError"


class ProbeError(ValidationError):
    """Raised when a probe cannot be trained on the data it was given."""

    kind = "ProbeError"
