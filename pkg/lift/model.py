"""
The linearized feature-trajectory autoencoder.

Encoder: per-frame projection D→d, sinusoidal frame-index encoding, two
learnable tokens prepended, pre-LayerNorm transformer, then one
linear+LayerNorm head per token giving the static and dynamic vectors.

Decoder: the latent for frame t is z_s + (t/T)·z_d; an MLP with two
GeLU+LayerNorm hidden stages maps it back to R^D.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from lift import ops
from lift.contracts import D, Dl, T, check_shape, ensures, expects
from lift.errors import ConfigError, NonFiniteError, ValidationError
from lift.featureio import Checkpoint
from lift.tensor import Tensor

logger = logging.getLogger("lift.model")

PE_BASE = 10_000.0
TOKEN_INIT_STD = 0.02


@dataclass(frozen=True)
class LiftConfig:
    """
    Architecture hyperparameters.

    Attributes:
        D: Input feature width.
        d: Latent width.
        layers: Transformer depth.
        heads: Attention heads per layer; must divide ``d``.
        ffn_mult: Feed-forward expansion factor.
        T: Nominal number of frames per video.
        lambda_orth: Weight of the orthogonality term.
    """

    D: int = 384
    d: int = 384
    layers: int = 4
    heads: int = 8
    ffn_mult: int = 4
    T: int = 16
    lambda_orth: float = 0.1

    def __post_init__(self) -> None:
        for name in ("D", "d", "layers", "heads", "ffn_mult", "T"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.d % self.heads != 0:
            raise ConfigError(
                f"latent width d={self.d} is not divisible by heads={self.heads}",
                reason=f"d % heads = {self.d % self.heads}",
            )
        if not self.lambda_orth >= 0:
            raise ConfigError(f"lambda_orth must be >= 0, got {self.lambda_orth!r}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> LiftConfig:
        known = {f: payload[f] for f in cls.__dataclass_fields__ if f in payload}
        return cls(**known)


def param_shapes(config: LiftConfig) -> dict[str, tuple[int, ...]]:
    """Name → shape of every trainable tensor, in initialization order."""
    dd, d2, hidden = config.d, 2 * config.d, config.ffn_mult * config.d
    shapes: dict[str, tuple[int, ...]] = {
        "proj.weight": (config.D, dd),
        "proj.bias": (dd,),
        "token.static": (dd,),
        "token.dynamic": (dd,),
    }
    for i in range(config.layers):
        p = f"layers.{i}"
        shapes.update(
            {
                f"{p}.ln1.gain": (dd,),
                f"{p}.ln1.bias": (dd,),
                f"{p}.attn.wq": (dd, dd),
                f"{p}.attn.bq": (dd,),
                f"{p}.attn.wk": (dd, dd),
                f"{p}.attn.bk": (dd,),
                f"{p}.attn.wv": (dd, dd),
                f"{p}.attn.bv": (dd,),
                f"{p}.attn.wo": (dd, dd),
                f"{p}.attn.bo": (dd,),
                f"{p}.ln2.gain": (dd,),
                f"{p}.ln2.bias": (dd,),
                f"{p}.ffn.w1": (dd, hidden),
                f"{p}.ffn.b1": (hidden,),
                f"{p}.ffn.w2": (hidden, dd),
                f"{p}.ffn.b2": (dd,),
            }
        )
    for head in ("head_static", "head_dynamic"):
        shapes.update(
            {
                f"{head}.weight": (dd, dd),
                f"{head}.bias": (dd,),
                f"{head}.ln.gain": (dd,),
                f"{head}.ln.bias": (dd,),
            }
        )
    shapes.update(
        {
            "decoder.fc1.weight": (dd, d2),
            "decoder.fc1.bias": (d2,),
            "decoder.ln1.gain": (d2,),
            "decoder.ln1.bias": (d2,),
            "decoder.fc2.weight": (d2, d2),
            "decoder.fc2.bias": (d2,),
            "decoder.ln2.gain": (d2,),
            "decoder.ln2.bias": (d2,),
            "decoder.out.weight": (d2, config.D),
            "decoder.out.bias": (config.D,),
        }
    )
    return shapes


def count_params(config: LiftConfig) -> int:
    """Exact number of trainable scalars implied by ``config``."""
    return sum(math.prod(shape) for shape in param_shapes(config).values())


def _init_kind(name: str) -> str:
    if name.startswith("token."):
        return "token"
    if ".ln" in name:
        return "gain" if name.endswith(".gain") else "zero"
    last = name.rsplit(".", 1)[-1]
    if last in ("weight", "wq", "wk", "wv", "wo", "w1", "w2"):
        return "xavier"
    return "zero"


@dataclass
class LiftParams:
    """
    All trainable tensors of one model plus optional input standardization.

    ``standardization`` holds per-dimension (mean, std) applied to frames
    before the projection when the model was trained on standardized
    features.
    """

    config: LiftConfig
    tensors: dict[str, np.ndarray]
    standardization: tuple[np.ndarray, np.ndarray] | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def count(self) -> int:
        return sum(int(a.size) for a in self.tensors.values())

    def copy(self) -> LiftParams:
        std = None
        if self.standardization is not None:
            std = (self.standardization[0].copy(), self.standardization[1].copy())
        return LiftParams(
            self.config,
            {k: v.copy() for k, v in self.tensors.items()},
            std,
            dict(self.metadata),
        )

    def to_checkpoint(self, metadata: Mapping[str, Any] | None = None) -> Checkpoint:
        meta = dict(self.metadata)
        meta.update(metadata or {})
        if self.standardization is not None:
            meta["standardization"] = {
                "mean": [float(v) for v in self.standardization[0]],
                "std": [float(v) for v in self.standardization[1]],
            }
        return Checkpoint(config=self.config, tensors=dict(self.tensors), metadata=meta)

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> LiftParams:
        if ckpt.config is None:
            raise ValidationError("checkpoint carries no model configuration")
        ckpt.validate()
        meta = dict(ckpt.metadata)
        std = None
        stats = meta.pop("standardization", None)
        if stats is not None:
            std = (
                np.asarray(stats["mean"], dtype=np.float32),
                np.asarray(stats["std"], dtype=np.float32),
            )
        tensors = {k: np.asarray(v, dtype=np.float32) for k, v in ckpt.tensors.items()}
        return cls(ckpt.config, tensors, std, meta)


def init_params(config: LiftConfig, seed: int) -> LiftParams:
    """
    Deterministic initialization from (config, seed).

    Linear weights are Xavier-uniform, biases zero, the two learnable tokens
    normal(0, 0.02), LayerNorm gains one and biases zero.
    """
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(config).items():
        kind = _init_kind(name)
        if kind == "xavier":
            fan_in, fan_out = shape
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            value = rng.uniform(-limit, limit, size=shape)
        elif kind == "token":
            value = rng.normal(0.0, TOKEN_INIT_STD, size=shape)
        elif kind == "gain":
            value = np.ones(shape)
        else:
            value = np.zeros(shape)
        tensors[name] = value.astype(np.float32)
    return LiftParams(config, tensors)


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------


def position_encoding(num_frames: int, width: int) -> np.ndarray:
    """
    Interleaved sinusoidal encoding of frame indices 1..num_frames.

    Column 2i holds sin(t / 10000^(2i/width)), column 2i+1 the matching cos.
    """
    t = np.arange(1, num_frames + 1, dtype=np.float64)[:, None]
    freq = np.exp(-math.log(PE_BASE) * np.arange(0, width, 2, dtype=np.float64) / width)
    pe = np.zeros((num_frames, width), dtype=np.float64)
    pe[:, 0::2] = np.sin(t * freq)
    pe[:, 1::2] = np.cos(t * freq)[:, : width // 2]
    return pe


def time_coefficients(num_frames: int) -> np.ndarray:
    """t/T for t = 1..T."""
    return np.arange(1, num_frames + 1, dtype=np.float64) / num_frames


def _layer_norm(x: Tensor, p: Mapping[str, Tensor], prefix: str) -> Tensor:
    return ops.layer_norm(x, p[f"{prefix}.gain"], p[f"{prefix}.bias"])


def _transformer_block(x: Tensor, p: Mapping[str, Tensor], i: int, heads: int) -> Tensor:
    pre = f"layers.{i}"
    h = _layer_norm(x, p, f"{pre}.ln1")
    weights = ops.AttentionWeights(
        *(p[f"{pre}.attn.{n}"] for n in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"))
    )
    x = ops.add(x, ops.multi_head_attention(h, h, h, heads, weights))
    h = _layer_norm(x, p, f"{pre}.ln2")
    h = ops.gelu(ops.linear(h, p[f"{pre}.ffn.w1"], p[f"{pre}.ffn.b1"]))
    return ops.add(x, ops.linear(h, p[f"{pre}.ffn.w2"], p[f"{pre}.ffn.b2"]))


def _token_rows(token: Tensor, n: int) -> Tensor:
    """Repeat a (d,) token into an (n, 1, d) block."""
    rows = ops.take(ops.reshape(token, (1, -1)), [0] * n, axis=0)
    return ops.reshape(rows, (n, 1, token.shape[0]))


def encode_graph(
    p: Mapping[str, Tensor], frames: np.ndarray | Tensor, config: LiftConfig
) -> tuple[Tensor, Tensor]:
    """
    Encoder on a (N, T, D) batch, recorded on the active tape.

    Returns:
        (z_s, z_d), each (N, d).
    """
    x = frames if isinstance(frames, Tensor) else Tensor(frames)
    n, t, _ = x.shape
    h = ops.linear(x, p["proj.weight"], p["proj.bias"])
    pe = np.broadcast_to(position_encoding(t, config.d), h.shape)
    h = ops.add(h, Tensor(pe))
    seq = ops.concat(
        [_token_rows(p["token.static"], n), _token_rows(p["token.dynamic"], n), h], axis=1
    )
    for i in range(config.layers):
        seq = _transformer_block(seq, p, i, config.heads)

    outs = []
    for idx, head in ((0, "head_static"), (1, "head_dynamic")):
        tok = ops.reshape(ops.take(seq, [idx], axis=1), (n, config.d))
        z = ops.linear(tok, p[f"{head}.weight"], p[f"{head}.bias"])
        outs.append(_layer_norm(z, p, f"{head}.ln"))
    return outs[0], outs[1]


def decoder_graph(p: Mapping[str, Tensor], latent: Tensor) -> Tensor:
    """Decoder MLP on latent points (..., d) → (..., D)."""
    h = ops.gelu(ops.linear(latent, p["decoder.fc1.weight"], p["decoder.fc1.bias"]))
    h = _layer_norm(h, p, "decoder.ln1")
    h = ops.gelu(ops.linear(h, p["decoder.fc2.weight"], p["decoder.fc2.bias"]))
    h = _layer_norm(h, p, "decoder.ln2")
    return ops.linear(h, p["decoder.out.weight"], p["decoder.out.bias"])


def reconstruct_graph(
    p: Mapping[str, Tensor], z_s: Tensor, z_d: Tensor, num_frames: int
) -> Tensor:
    """Decode every frame of the latent line: (N, d) pair → (N, T, D)."""
    return decoder_graph(p, ops.latent_line(z_s, z_d, time_coefficients(num_frames)))


def as_tensors(params: LiftParams) -> dict[str, Tensor]:
    return {name: Tensor._wrap(value, name=name) for name, value in params.tensors.items()}


def _prepare(params: LiftParams, frames: np.ndarray) -> np.ndarray:
    x = np.asarray(frames, dtype=np.float32)
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("frames contain NaN or Inf", operation="encode")
    if params.standardization is not None:
        mean, std = params.standardization
        x = ((x - mean) / std).astype(np.float32)
    return x


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Descriptor:
    """Static and dynamic latent vectors of one video."""

    z_s: np.ndarray
    z_d: np.ndarray

    def __post_init__(self) -> None:
        zs = np.asarray(self.z_s, dtype=np.float32)
        zd = np.asarray(self.z_d, dtype=np.float32)
        if zs.shape != zd.shape or zs.ndim != 1:
            raise ValidationError(
                "z_s and z_d must be vectors of equal length",
                operation="Descriptor",
                expected=zs.shape,
                actual=zd.shape,
            )
        if not (np.all(np.isfinite(zs)) and np.all(np.isfinite(zd))):
            raise NonFiniteError("descriptor contains NaN or Inf", operation="Descriptor")
        object.__setattr__(self, "z_s", zs)
        object.__setattr__(self, "z_d", zd)

    @property
    def dim(self) -> int:
        return int(self.z_s.shape[0])

    def vector(self) -> np.ndarray:
        """Concatenation (z_s, z_d) of length 2d."""
        return np.concatenate([self.z_s, self.z_d])


@expects(frames=(T, D))
def encode(params: LiftParams, frames: np.ndarray) -> Descriptor:
    """
    Encode one (T, D) feature sequence into its descriptor.

    Raises:
        DimensionError: If the feature width differs from ``config.D``.
    """
    check_shape(frames, (None, params.config.D), "frames", operation="encode")
    x = _prepare(params, frames)[None]
    z_s, z_d = encode_graph(as_tensors(params), x, params.config)
    return Descriptor(z_s.data[0], z_d.data[0])


def encode_batch(
    params: LiftParams,
    frames: np.ndarray | Sequence[np.ndarray],
    batch_size: int = 256,
    workers: int = 1,
) -> np.ndarray:
    """
    Descriptors (z_s ⊕ z_d) for a stack of equally long sequences.

    Returns:
        (N, 2d) float32 matrix in input order. Results do not depend on
        ``workers``.
    """
    stack = np.asarray(frames, dtype=np.float32)
    check_shape(stack, (None, None, params.config.D), "frames", operation="encode_batch")
    stack = _prepare(params, stack)
    tensors = as_tensors(params)
    chunks = [stack[i : i + batch_size] for i in range(0, len(stack), batch_size)]

    def run(chunk: np.ndarray) -> np.ndarray:
        z_s, z_d = encode_graph(tensors, chunk, params.config)
        return np.concatenate([z_s.data, z_d.data], axis=1)

    if not chunks:
        return np.zeros((0, 2 * params.config.d), dtype=np.float32)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    logger.debug("encoded %d videos in %d batches", len(stack), len(chunks))
    return np.concatenate(parts, axis=0).astype(np.float32)


def latent_at(desc: Descriptor, t: int, num_frames: int) -> np.ndarray:
    """
    The latent point z_s + (t/T)·z_d fed to the decoder for frame t.

    Raises:
        ValidationError: If t is outside 1..T.
    """
    if num_frames < 1 or not 1 <= t <= num_frames:
        raise ValidationError(
            f"frame index t={t} outside 1..{num_frames}", operation="decode_at", argument="t"
        )
    return ops.latent_line(desc.z_s, desc.z_d, [t / num_frames]).data[0]


@ensures(result=(T, Dl))
def latent_points(desc: Descriptor, num_frames: int) -> np.ndarray:
    """All T latent points of a descriptor, (T, d)."""
    return ops.latent_line(desc.z_s, desc.z_d, time_coefficients(num_frames)).data


def decode_at(params: LiftParams, desc: Descriptor, t: int, num_frames: int) -> np.ndarray:
    """Reconstructed feature vector x̂_t ∈ R^D."""
    check_shape(desc.z_s, (params.config.d,), "desc.z_s", operation="decode_at")
    latent = latent_at(desc, t, num_frames)
    return decoder_graph(as_tensors(params), Tensor(latent[None])).data[0]


@expects(frames=(T, D))
def forward_reconstruct(params: LiftParams, frames: np.ndarray) -> tuple[Descriptor, np.ndarray]:
    """
    Encode then decode every frame.

    Returns:
        The descriptor and the (T, D) reconstruction, in the standardized
        space when the model standardizes its inputs.
    """
    desc = encode(params, frames)
    num_frames = int(np.shape(frames)[0])
    p = as_tensors(params)
    recon = reconstruct_graph(p, Tensor(desc.z_s[None]), Tensor(desc.z_d[None]), num_frames)
    return desc, recon.data[0]


__all__ = [
    "LiftConfig",
    "LiftParams",
    "Descriptor",
    "param_shapes",
    "count_params",
    "init_params",
    "position_encoding",
    "time_coefficients",
    "encode",
    "encode_batch",
    "encode_graph",
    "decoder_graph",
    "reconstruct_graph",
    "latent_at",
    "latent_points",
    "decode_at",
    "forward_reconstruct",
]
