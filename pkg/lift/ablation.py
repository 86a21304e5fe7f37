"""
Sweeps over latent width, training-data fraction and orthogonality weight.

Every cell trains one model per seed and scores it with the chiral
protocol; a row reports the mean and spread across seeds.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from lift.chiral import ChiralGroup
from lift.errors import ConfigError, ValidationError
from lift.featureio import FeatureSequence, Manifest, resample_frames, write_rows_csv
from lift.model import LiftConfig, LiftParams
from lift.pooling import PoolingSpec
from lift.probes import ProbeSpec, evaluate_chiral
from lift.training import TrainConfig, token_cosines, train

logger = logging.getLogger("lift.ablation")

ABLATION_COLUMNS = (
    "d",
    "data_fraction",
    "lambda_orth",
    "seeds",
    "params",
    "mean_accuracy",
    "std_accuracy",
    "mean_abs_cos",
)


@dataclass(frozen=True)
class AblationSpec:
    """Grid axes; every combination is trained once per seed."""

    latent_dims: tuple[int, ...] = (32,)
    fractions: tuple[float, ...] = (1.0,)
    lambdas: tuple[float, ...] = (0.1,)
    seeds: tuple[int, ...] = (0,)

    def __post_init__(self) -> None:
        for name in ("latent_dims", "fractions", "lambdas", "seeds"):
            values = getattr(self, name)
            object.__setattr__(self, name, tuple(values))
            if not values:
                raise ConfigError(f"ablation axis {name!r} is empty")

    @property
    def cells(self) -> list[tuple[int, float, float]]:
        return [
            (d, f, lam) for d in self.latent_dims for f in self.fractions for lam in self.lambdas
        ]

    def to_dict(self) -> dict[str, Any]:
        return {k: list(v) for k, v in asdict(self).items()}


@dataclass(frozen=True)
class AblationRow:
    d: int
    data_fraction: float
    lambda_orth: float
    seeds: int
    params: int
    mean_accuracy: float | None
    std_accuracy: float | None
    mean_abs_cos: float
    accuracies: tuple[float | None, ...] = field(default=(), compare=False)

    def values(self) -> list[Any]:
        return [getattr(self, c) for c in ABLATION_COLUMNS]


def run_ablation(
    sequences: Manifest | Sequence[FeatureSequence],
    groups: Sequence[ChiralGroup],
    base_model: LiftConfig,
    base_train: TrainConfig,
    ablation: AblationSpec,
    probe: ProbeSpec | None = None,
    workers: int = 1,
    split: str | None = "train",
) -> list[AblationRow]:
    """
    Train and probe every grid cell.

    ``base_model`` and ``base_train`` supply everything the grid does not
    vary. Models train only on videos of ``split`` (all videos when None);
    the chiral groups decide which videos are probed.

    Raises:
        ValidationError: No video belongs to ``split``.
    """
    seqs = list(sequences.sequences()) if isinstance(sequences, Manifest) else list(sequences)
    by_id: Mapping[str, FeatureSequence] = {s.video_id: s for s in seqs}
    train_seqs = [s for s in seqs if split is None or s.split == split]
    if not train_seqs:
        raise ValidationError(f"no {split} videos to train on", operation="run_ablation")
    probe = probe or ProbeSpec.chiral()
    rows = []
    for d, fraction, lam in ablation.cells:
        config = replace(base_model, d=d, lambda_orth=lam)
        accs: list[float | None] = []
        cosines: list[float] = []
        params_count = 0
        for seed in ablation.seeds:
            logger.info("ablation cell d=%d fraction=%g lambda=%g seed=%d", d, fraction, lam, seed)
            settings = replace(base_train, data_fraction=fraction, lambda_orth=lam, seed=seed)
            ckpt, _ = train(train_seqs, config, settings)
            model = LiftParams.from_checkpoint(ckpt)
            params_count = model.count()
            report = evaluate_chiral(
                groups,
                by_id,
                PoolingSpec("lift_descriptor"),
                replace(probe, seed=seed),
                model=model,
                workers=workers,
            )
            accs.append(report.average)
            stack = np.stack([resample_frames(s, config.T) for s in train_seqs])
            cosines.append(float(np.mean(np.abs(token_cosines(model, stack)))))
        scored = [a for a in accs if a is not None]
        rows.append(
            AblationRow(
                d=d,
                data_fraction=fraction,
                lambda_orth=lam,
                seeds=len(ablation.seeds),
                params=params_count,
                mean_accuracy=float(np.mean(scored)) if scored else None,
                std_accuracy=float(np.std(scored)) if scored else None,
                mean_abs_cos=float(np.mean(cosines)),
                accuracies=tuple(accs),
            )
        )
    return rows


def write_ablation_csv(path: str | Path, rows: Sequence[AblationRow]) -> None:
    write_rows_csv(
        path,
        ABLATION_COLUMNS,
        ([("" if v is None else v) for v in row.values()] for row in rows),
    )
