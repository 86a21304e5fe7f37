"""
Pooling a (T, D) feature sequence into one fixed-length descriptor.

Time-insensitive baselines (single frame, mean), time-sensitive ones
(frame concatenation, centred time weighting) and the learned descriptor
share one entry point, ``pool_descriptor``.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from typing import Any, Literal

import numpy as np

from lift.contracts import D, T, expects
from lift.errors import ConfigError, ValidationError
from lift.featureio import FeatureSequence, resample_frames
from lift.model import LiftParams, encode, encode_batch

logger = logging.getLogger("lift.pooling")

PoolingKind = Literal[
    "single_frame", "k_frame_concat", "mean", "time_weighted", "full_concat", "lift_descriptor"
]
POOLING_KINDS = (
    "single_frame",
    "k_frame_concat",
    "mean",
    "time_weighted",
    "full_concat",
    "lift_descriptor",
)


@dataclass(frozen=True)
class PoolingSpec:
    """
    How to turn frames into a descriptor.

    ``indices`` are 1-based frame positions used by ``single_frame`` (one
    index) and ``k_frame_concat`` (one or more). Upper bounds are checked
    against T when pooling.
    """

    kind: PoolingKind
    indices: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in POOLING_KINDS:
            raise ConfigError(f"unknown pooling kind {self.kind!r}; expected {POOLING_KINDS}")
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        if self.kind == "single_frame" and len(self.indices) != 1:
            raise ConfigError("single_frame pooling takes exactly one index")
        if self.kind == "k_frame_concat" and not self.indices:
            raise ConfigError("k_frame_concat pooling needs at least one index")
        if any(i < 1 for i in self.indices):
            raise ValidationError(
                f"frame indices are 1-based, got {list(self.indices)}",
                operation="PoolingSpec",
                argument="indices",
            )

    @classmethod
    def single_frame(cls, index: int) -> PoolingSpec:
        return cls("single_frame", (index,))

    @classmethod
    def k_frame_concat(cls, indices: Sequence[int]) -> PoolingSpec:
        return cls("k_frame_concat", tuple(indices))

    @classmethod
    def parse(cls, text: str) -> PoolingSpec:
        """
        Parse a command-line pooling name.

        Accepted: ``mean``, ``time_weighted``, ``full_concat``, ``lift``
        (or ``lift_descriptor``), ``single:<i>``, ``frames:<i>,<j>,...``.
        """
        name, _, arg = text.strip().partition(":")
        if name == "lift":
            name = "lift_descriptor"
        if name in ("single", "single_frame"):
            return cls.single_frame(_parse_int(arg, text))
        if name in ("frames", "k_frame_concat"):
            return cls.k_frame_concat([_parse_int(a, text) for a in arg.split(",") if a.strip()])
        if arg:
            raise ConfigError(f"pooling {name!r} takes no argument (got {text!r})")
        return cls(name)  # type: ignore[arg-type]

    @property
    def label(self) -> str:
        if self.indices:
            return f"{self.kind}:{','.join(str(i) for i in self.indices)}"
        return self.kind

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "indices": list(self.indices)}

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> PoolingSpec:
        return cls(payload["kind"], tuple(payload.get("indices", ())))


def _parse_int(value: str, text: str) -> int:
    try:
        return int(value)
    except ValueError as err:
        raise ConfigError(f"bad frame index in pooling {text!r}") from err


def time_weights(num_frames: int) -> np.ndarray:
    """Centred linear weights t − (T+1)/2, scaled to unit ℓ1 norm (all zero for T=1)."""
    w = np.arange(1, num_frames + 1, dtype=np.float64) - (num_frames + 1) / 2.0
    total = np.abs(w).sum()
    return w / total if total > 0 else w


def output_dim(spec: PoolingSpec, num_frames: int, width: int, latent: int | None = None) -> int:
    """Descriptor length produced by ``spec`` for (T, D) inputs."""
    if spec.kind in ("single_frame", "mean"):
        return width
    if spec.kind == "k_frame_concat":
        return len(spec.indices) * width
    if spec.kind == "time_weighted":
        return 2 * width
    if spec.kind == "full_concat":
        return num_frames * width
    if latent is None:
        raise ConfigError("lift_descriptor size depends on the model latent width")
    return 2 * latent


@expects(frames=(T, D))
def pool_descriptor(
    frames: np.ndarray, spec: PoolingSpec, model: LiftParams | None = None
) -> np.ndarray:
    """
    Pool one (T, D) sequence.

    Returns:
        A float32 vector: D for single_frame/mean, k·D for k_frame_concat,
        2D for time_weighted (mean then weighted sum), T·D for full_concat,
        2d for lift_descriptor.

    Raises:
        ValidationError: If an index exceeds T, or lift_descriptor is asked
            for without a model.
    """
    x = np.asarray(frames, dtype=np.float32)
    num_frames = x.shape[0]
    if any(i > num_frames for i in spec.indices):
        raise ValidationError(
            f"frame index out of range 1..{num_frames}: {list(spec.indices)}",
            operation="pool_descriptor",
            argument="indices",
        )
    if spec.kind == "single_frame":
        return x[spec.indices[0] - 1].copy()
    if spec.kind == "k_frame_concat":
        return np.concatenate([x[i - 1] for i in spec.indices])
    if spec.kind == "mean":
        return x.astype(np.float64).mean(axis=0).astype(np.float32)
    if spec.kind == "time_weighted":
        x64 = x.astype(np.float64)
        dynamic = time_weights(num_frames) @ x64
        return np.concatenate([x64.mean(axis=0), dynamic]).astype(np.float32)
    if spec.kind == "full_concat":
        return x.reshape(-1).copy()
    if model is None:
        raise ValidationError(
            "lift_descriptor pooling needs a trained model", operation="pool_descriptor"
        )
    return encode(model, x).vector()


def pool_sequences(
    sequences: Iterable[FeatureSequence],
    spec: PoolingSpec,
    num_frames: int = 16,
    model: LiftParams | None = None,
    workers: int = 1,
) -> tuple[list[str], np.ndarray]:
    """
    Pool many videos after resampling each to a common length.

    ``lift_descriptor`` resamples to the model's T and encodes in batches;
    the other kinds use ``num_frames``.

    Returns:
        Video ids and an (N, dim) float32 matrix in input order.
    """
    seqs = list(sequences)
    ids = [s.video_id for s in seqs]
    if spec.kind == "lift_descriptor":
        if model is None:
            raise ValidationError(
                "lift_descriptor pooling needs a trained model", operation="pool_sequences"
            )
        if not seqs:
            return ids, np.zeros((0, 2 * model.config.d), dtype=np.float32)
        stack = np.stack([resample_frames(s, model.config.T) for s in seqs])
        return ids, encode_batch(model, stack, workers=workers)
    if not seqs:
        return ids, np.zeros((0, 0), dtype=np.float32)
    rows = [pool_descriptor(resample_frames(s, num_frames), spec) for s in seqs]
    logger.debug("pooled %d videos with %s", len(rows), spec.label)
    return ids, np.stack(rows).astype(np.float32)


def concat_descriptors(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    Concatenate descriptors along the last axis, ``a`` first.

    Works on single vectors and on row-aligned (N, ·) matrices.
    """
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    if a.ndim != b.ndim or a.shape[:-1] != b.shape[:-1]:
        raise ValidationError(
            "descriptors to concatenate must share leading dimensions",
            operation="concat_descriptors",
            expected=a.shape[:-1],
            actual=b.shape[:-1],
        )
    return np.concatenate([a, b], axis=-1)


__all__ = [
    "PoolingSpec",
    "POOLING_KINDS",
    "time_weights",
    "output_dim",
    "pool_descriptor",
    "pool_sequences",
    "concat_descriptors",
]
