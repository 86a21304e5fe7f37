"""
Training objective and optimization loop.

The per-video objective is

    L = Σ_t ‖x_t − x̂_t‖² + λ · cos(z_s/‖z_s‖, z_d/‖z_d‖)

averaged over the videos of a batch.
"""

from __future__ import annotations

import csv
import logging
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np

from lift import ops
from lift.config import resolve_seed
from lift.errors import ConfigError, DimensionError, ValidationError
from lift.featureio import Checkpoint, FeatureSequence, Manifest, resample_frames
from lift.model import (
    Descriptor,
    LiftConfig,
    LiftParams,
    as_tensors,
    encode_batch,
    encode_graph,
    init_params,
    reconstruct_graph,
)
from lift.optim import AdamState, PlateauScheduler, adam_step
from lift.tensor import GradTape, Tensor, as_tensor

logger = logging.getLogger("lift.training")

OrthPenalty = Literal["cos", "abs", "squared"]
ORTH_PENALTIES = ("cos", "abs", "squared")


@dataclass(frozen=True)
class TrainConfig:
    """
    Optimization settings.

    ``lambda_orth=None`` uses the model configuration's λ. ``data_fraction``
    keeps a seeded subset of the training videos.

    ``orth_penalty`` picks the orthogonality term:

    - ``"cos"``: the signed cosine of the two tokens. It is smallest at
      cos = -1, so it pushes the drift token anti-parallel to the static
      token rather than orthogonal to it. Harmless for small λ; with a
      large λ use ``"abs"`` or ``"squared"``.
    - ``"abs"``: ``|cos|``, smallest at orthogonality.
    - ``"squared"``: ``cos²``, smallest at orthogonality and smooth there.
    """

    epochs: int = 500
    batch_size: int = 128
    learning_rate: float = 1e-3
    lambda_orth: float | None = None
    factor: float = 0.5
    patience: int = 10
    min_lr: float = 1e-6
    seed: int | None = None
    standardize: bool = False
    data_fraction: float = 1.0
    orth_penalty: OrthPenalty = "cos"

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if self.learning_rate <= 0 or self.min_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if not 0.0 < self.factor < 1.0:
            raise ConfigError(f"scheduler factor must be in (0, 1), got {self.factor}")
        if self.patience < 1:
            raise ConfigError("scheduler patience must be positive")
        if self.lambda_orth is not None and self.lambda_orth < 0:
            raise ConfigError(f"lambda_orth must be >= 0, got {self.lambda_orth}")
        if not 0.0 < self.data_fraction <= 1.0:
            raise ConfigError(f"data_fraction must be in (0, 1], got {self.data_fraction}")
        if self.orth_penalty not in ORTH_PENALTIES:
            raise ConfigError(f"orth_penalty must be one of {ORTH_PENALTIES}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    l_rec: float
    l_orth: float
    total: float
    lr: float


@dataclass
class TrainLog:
    """One record per completed epoch."""

    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)

    @property
    def l_rec(self) -> list[float]:
        return [r.l_rec for r in self.records]

    @property
    def total(self) -> list[float]:
        return [r.total for r in self.records]

    def write_csv(self, path: str | Path) -> None:
        """Columns: epoch, l_rec, l_orth, lr."""
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "l_rec", "l_orth", "lr"])
            for r in self.records:
                writer.writerow([r.epoch, repr(r.l_rec), repr(r.l_orth), repr(r.lr)])


def _orth_term(cos: Tensor, penalty: OrthPenalty) -> Tensor:
    if penalty == "cos":
        return cos
    if penalty == "squared":
        return ops.mul(cos, cos)
    sign = np.sign(cos.data)
    return ops.mul(cos, Tensor(sign))


def lift_loss(
    frames: Any,
    reconstruction: Any,
    desc: Descriptor | tuple[Any, Any],
    lam: float,
    penalty: OrthPenalty = "cos",
) -> tuple[Tensor, Tensor, Tensor]:
    """
    Total loss, reconstruction term and orthogonality term.

    ``frames`` and ``reconstruction`` are (T, D) for one video or (N, T, D)
    for a batch; terms are averaged over videos. A zero-norm token gives an
    orthogonality term of 0 and a logged warning.

    Returns:
        (total, L_rec, L_orth) as scalar tensors.
    """
    if lam < 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")
    x, x_hat = as_tensor(frames), as_tensor(reconstruction)
    if x.shape != x_hat.shape:
        raise DimensionError(
            "reconstruction shape differs from frames",
            operation="lift_loss",
            expected=x.shape,
            actual=x_hat.shape,
        )
    if isinstance(desc, Descriptor):
        z_s, z_d = as_tensor(desc.z_s[None]), as_tensor(desc.z_d[None])
    else:
        z_s, z_d = as_tensor(desc[0]), as_tensor(desc[1])
        if z_s.ndim == 1:
            z_s, z_d = ops.reshape(z_s, (1, -1)), ops.reshape(z_d, (1, -1))
    videos = x.shape[0] if x.ndim == 3 else 1

    diff = ops.sub(x, x_hat)
    l_rec = ops.scale(ops.sum(ops.mul(diff, diff)), 1.0 / videos)

    norms_s = np.linalg.norm(z_s.data, axis=-1)
    norms_d = np.linalg.norm(z_d.data, axis=-1)
    if np.any(norms_s == 0) or np.any(norms_d == 0):
        logger.warning("zero-norm latent token; orthogonality term set to 0 for that video")
    cos = ops.cosine_similarity(z_s, z_d)
    l_orth = ops.mean(_orth_term(cos, penalty))
    total = ops.add(l_rec, ops.scale(l_orth, lam)) if lam else l_rec
    return total, l_rec, l_orth


def _collect(
    data: Manifest | Iterable[FeatureSequence], num_frames: int
) -> tuple[list[str], np.ndarray]:
    seqs = data.sequences() if isinstance(data, Manifest) else data
    ids: list[str] = []
    stack: list[np.ndarray] = []
    for seq in seqs:
        ids.append(seq.video_id)
        stack.append(resample_frames(seq, num_frames))
    if not stack:
        raise ValidationError("training set is empty", operation="train")
    return ids, np.stack(stack).astype(np.float32)


def standardization_stats(frames: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean/std over all frames of an (N, T, D) stack."""
    flat = frames.reshape(-1, frames.shape[-1]).astype(np.float64)
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    std = np.where(std > 1e-6, std, 1.0)
    return mean.astype(np.float32), std.astype(np.float32)


def select_fraction(count: int, fraction: float, seed: int) -> np.ndarray:
    """Sorted indices of a seeded subset holding ``fraction`` of ``count`` items."""
    if fraction >= 1.0:
        return np.arange(count)
    keep = max(1, int(round(fraction * count)))
    rng = np.random.default_rng([seed, 0x5EED])
    return np.sort(rng.choice(count, size=keep, replace=False))


def train(
    data: Manifest | Sequence[FeatureSequence],
    lift_config: LiftConfig,
    train_config: TrainConfig,
) -> tuple[Checkpoint, TrainLog]:
    """
    Fit the autoencoder.

    Every video is resampled to ``lift_config.T`` frames once. Each epoch
    shuffles with the run seed and walks batches of ``batch_size`` (the last
    may be short); the scheduler sees the epoch-mean total loss.

    Raises:
        ValidationError: If there are no videos.
        DimensionError: If the feature width differs from ``lift_config.D``.
    """
    seed = resolve_seed(train_config.seed)
    lam = lift_config.lambda_orth if train_config.lambda_orth is None else train_config.lambda_orth
    ids, frames = _collect(data, lift_config.T)
    if frames.shape[-1] != lift_config.D:
        raise DimensionError(
            f"features have D={frames.shape[-1]} but the model expects D={lift_config.D}",
            operation="train",
            expected=lift_config.D,
            actual=frames.shape[-1],
        )
    keep = select_fraction(len(ids), train_config.data_fraction, seed)
    frames = frames[keep]

    params = init_params(lift_config, seed)
    if train_config.standardize:
        params.standardization = standardization_stats(frames)
        mean, std = params.standardization
        frames = ((frames - mean) / std).astype(np.float32)

    logger.info(
        "training on %d videos (T=%d, D=%d), d=%d, %d parameters",
        len(frames), lift_config.T, lift_config.D, lift_config.d, params.count(),
    )
    rng = np.random.default_rng(seed)
    state = AdamState.zeros_like(params.tensors)
    scheduler = PlateauScheduler(
        lr=train_config.learning_rate,
        factor=train_config.factor,
        patience=train_config.patience,
        min_lr=train_config.min_lr,
    )
    log = TrainLog()
    lr = train_config.learning_rate
    n = len(frames)
    for epoch in range(1, train_config.epochs + 1):
        order = rng.permutation(n)
        sums = np.zeros(3)
        for start in range(0, n, train_config.batch_size):
            batch = frames[order[start : start + train_config.batch_size]]
            with GradTape() as tape:
                p = {k: tape.watch(v, name=k) for k, v in params.tensors.items()}
                z_s, z_d = encode_graph(p, batch, lift_config)
                recon = reconstruct_graph(p, z_s, z_d, lift_config.T)
                total, l_rec, l_orth = lift_loss(
                    batch, recon, (z_s, z_d), lam, train_config.orth_penalty
                )
            grads = tape.gradient(total, p)
            params.tensors, state = adam_step(params.tensors, grads, state, lr)
            sums += len(batch) * np.array([total.item(), l_rec.item(), l_orth.item()])
        mean_total, mean_rec, mean_orth = (sums / n).tolist()
        log.append(EpochRecord(epoch, mean_rec, mean_orth, mean_total, lr))
        logger.info(
            "epoch %d/%d  l_rec=%.5f  l_orth=%.4f  lr=%.2e",
            epoch, train_config.epochs, mean_rec, mean_orth, lr,
        )
        lr = scheduler.step(mean_total)

    final = log.records[-1]
    ckpt = params.to_checkpoint(
        {
            "epoch": final.epoch,
            "final_loss": final.total,
            "seed": seed,
            "lambda_orth": lam,
            "orth_penalty": train_config.orth_penalty,
            "videos": len(frames),
            "train_config": train_config.to_dict(),
        }
    )
    return ckpt, log


def reconstruction_error(params: LiftParams, frames: np.ndarray, batch_size: int = 256) -> float:
    """Mean per-video Σ_t‖x_t − x̂_t‖² over an (N, T, D) stack."""
    x = np.asarray(frames, dtype=np.float32)
    if params.standardization is not None:
        mean, std = params.standardization
        x = ((x - mean) / std).astype(np.float32)
    tensors = as_tensors(params)
    total = 0.0
    for start in range(0, len(x), batch_size):
        batch = x[start : start + batch_size]
        z_s, z_d = encode_graph(tensors, batch, params.config)
        recon = reconstruct_graph(tensors, z_s, z_d, batch.shape[1]).data
        total += float(((batch.astype(np.float64) - recon) ** 2).sum())
    return total / max(1, len(x))


def token_cosines(params: LiftParams, frames: np.ndarray) -> np.ndarray:
    """cos(z_s, z_d) for every video of an (N, T, D) stack."""
    desc = encode_batch(params, frames)
    d = params.config.d
    return ops.cosine_similarity(desc[:, :d], desc[:, d:]).data.astype(np.float64)
