"""
Synthetic feature trajectories with known chiral structure.

Each video follows a straight latent path through R^m,

    p(t) = c_j + s·a·(t/T − (T+1)/(2T))·u_g + ε_t

around cluster centre ``c_j`` along group direction ``u_g``, with sign
s = +1 for ``fwd`` and −1 for ``rev`` videos. Observed frames are
x_t = Ψ(p(t)) for a frozen random tanh network Ψ, so the observations are
curved while the ground truth is linear. The ramp is centred in time:
``fwd`` and ``rev`` visit the same points in opposite order, which leaves
time-insensitive pooling at chance.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from lift.chiral import AntonymConfig, AntonymEntry, NounGroup
from lift.config import resolve_seed
from lift.contracts import D, T, expects
from lift.errors import ConfigError, DimensionError, ValidationError
from lift.featureio import FeatureSequence, write_dataset, write_rows_csv

logger = logging.getLogger("lift.synth")

LABELS = ("fwd", "rev")
PROJECTION_COLUMNS = ("video_id", "frame", "pc1", "pc2", "kind")


@dataclass(frozen=True)
class SynthSpec:
    """Generator settings; ``seed=None`` falls back to ``LIFT_SEED``."""

    n_videos: int = 2000
    T: int = 16
    D: int = 64
    m: int = 8
    clusters: int = 4
    groups: int = 4
    noise: float = 0.05
    depth: int = 2
    amplitude: float = 1.5
    train_fraction: float = 0.8
    seed: int | None = None

    def __post_init__(self) -> None:
        for name in ("n_videos", "T", "D", "m", "clusters", "groups"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.m > self.D:
            raise ConfigError(f"latent dim m={self.m} exceeds feature dim D={self.D}")
        if self.noise < 0:
            raise ConfigError(f"noise must be >= 0, got {self.noise}")
        if self.depth < 0:
            raise ConfigError(f"depth must be >= 0, got {self.depth}")
        if self.amplitude <= 0:
            raise ConfigError(f"amplitude must be positive, got {self.amplitude}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train_fraction must be in (0, 1), got {self.train_fraction}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> SynthSpec:
        return cls(**dict(payload))


@dataclass
class Warp:
    """The frozen map Ψ: ``depth`` affine+tanh layers, then an affine read-out."""

    layers: list[tuple[np.ndarray, np.ndarray]]
    out_weight: np.ndarray
    out_bias: np.ndarray

    def __call__(self, points: np.ndarray) -> np.ndarray:
        h = np.asarray(points, dtype=np.float64)
        for weight, bias in self.layers:
            h = np.tanh(h @ weight + bias)
        return h @ self.out_weight + self.out_bias


def make_warp(spec: SynthSpec, rng: np.random.Generator) -> Warp:
    layers = []
    width = spec.m
    for _ in range(spec.depth):
        weight = rng.normal(0.0, 1.0 / np.sqrt(width), (width, spec.D))
        bias = rng.normal(0.0, 0.1, spec.D)
        layers.append((weight, bias))
        width = spec.D
    out_weight = rng.normal(0.0, 1.0 / np.sqrt(width), (width, spec.D))
    out_bias = rng.normal(0.0, 0.1, spec.D)
    return Warp(layers, out_weight, out_bias)


def group_directions(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    """Unit drift directions, (groups, m); orthonormal when groups ≤ m."""
    raw = rng.normal(size=(spec.m, spec.groups))
    if spec.groups <= spec.m:
        q, _ = np.linalg.qr(raw)
        return q.T.copy()
    return (raw / np.linalg.norm(raw, axis=0, keepdims=True)).T.copy()


def ramp(num_frames: int) -> np.ndarray:
    """Centred time coefficients t/T − (T+1)/(2T) for t = 1..T."""
    t = np.arange(1, num_frames + 1, dtype=np.float64)
    return t / num_frames - (num_frames + 1) / (2.0 * num_frames)


def latent_path(
    center: np.ndarray,
    direction: np.ndarray,
    sign: int,
    spec: SynthSpec,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """(T, m) latent points of one video; noise is drawn from ``rng`` when σ > 0."""
    path = center[None, :] + sign * spec.amplitude * ramp(spec.T)[:, None] * direction[None, :]
    if rng is not None and spec.noise > 0:
        path = path + rng.normal(0.0, spec.noise, path.shape)
    return path


@dataclass
class SynthDataset:
    """Generated sequences plus the ground truth behind them."""

    spec: SynthSpec
    sequences: list[FeatureSequence]
    latents: dict[str, np.ndarray] = field(default_factory=dict)
    centers: np.ndarray | None = None
    directions: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.sequences)

    def cell(self, group: int, label: str, split: str | None = None) -> list[FeatureSequence]:
        verb = f"{label}_g{group}"
        return [
            s for s in self.sequences if s.verb == verb and (split is None or s.split == split)
        ]

    def antonym_config(self) -> AntonymConfig:
        return antonym_config_for(self.spec)

    def write(self, out_dir: str | Path) -> Path:
        """Feature files, ``manifest.jsonl`` and ``antonyms.json`` under ``out_dir``."""
        out = Path(out_dir)
        manifest = write_dataset(self.sequences, out)
        (out / "antonyms.json").write_text(
            json.dumps(self.antonym_config().to_dict(), indent=2) + "\n", encoding="utf-8"
        )
        return manifest


def antonym_config_for(spec: SynthSpec) -> AntonymConfig:
    """One chiral triplet per direction group, spanning all clusters."""
    nouns = tuple(f"c{j}" for j in range(spec.clusters))
    return AntonymConfig(
        tuple(
            AntonymEntry(f"fwd_g{g}", f"rev_g{g}", (NounGroup("all", nouns),))
            for g in range(spec.groups)
        ),
        dataset="synth",
    )


def _assign_splits(
    cells: Mapping[tuple[int, int], list[int]], spec: SynthSpec, seed: int
) -> set[int]:
    rng = np.random.default_rng([seed, 2])
    train: set[int] = set()
    for key in sorted(cells):
        members = cells[key]
        count = len(members)
        keep = int(round(spec.train_fraction * count))
        if count >= 2:
            keep = min(count - 1, max(1, keep))
        order = rng.permutation(count)
        train.update(members[i] for i in order[:keep])
    return train


def gen_synth_dataset(spec: SynthSpec | None = None, workers: int = 1) -> SynthDataset:
    """
    Generate a dataset; identical seeds give bitwise-identical output.

    Video i belongs to cell i mod 2·groups (group, label) and to cluster
    (i div 2·groups) mod clusters, so every (group, label) pair holds
    n/(2·groups) videos up to one. Each video draws its noise from its own
    sub-seed, so ``workers`` does not change the result.
    """
    spec = spec or SynthSpec()
    seed = resolve_seed(spec.seed)
    model_rng = np.random.default_rng([seed, 0])
    centers = model_rng.normal(0.0, 1.0, (spec.clusters, spec.m))
    directions = group_directions(spec, model_rng)
    warp = make_warp(spec, model_rng)

    cells_per_cluster = 2 * spec.groups
    assignment = []
    cells: dict[tuple[int, int], list[int]] = {}
    for i in range(spec.n_videos):
        group, label = divmod(i % cells_per_cluster, 2)
        cluster = (i // cells_per_cluster) % spec.clusters
        assignment.append((group, label, cluster))
        cells.setdefault((group, label), []).append(i)
    train_ids = _assign_splits(cells, spec, seed)
    width = len(str(max(0, spec.n_videos - 1)))

    def make(i: int) -> tuple[FeatureSequence, np.ndarray]:
        group, label, cluster = assignment[i]
        sign = 1 if label == 0 else -1
        rng = np.random.default_rng([seed, 1, i])
        path = latent_path(centers[cluster], directions[group], sign, spec, rng)
        seq = FeatureSequence(
            video_id=f"v{i:0{width}d}",
            frames=warp(path).astype(np.float32),
            verb=f"{LABELS[label]}_g{group}",
            noun=f"c{cluster}",
            split="train" if i in train_ids else "test",
        )
        return seq, path

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            made = list(pool.map(make, range(spec.n_videos)))
    else:
        made = [make(i) for i in range(spec.n_videos)]
    logger.info(
        "generated %d synthetic videos (T=%d, D=%d, m=%d, %d groups, %d clusters)",
        spec.n_videos,
        spec.T,
        spec.D,
        spec.m,
        spec.groups,
        spec.clusters,
    )
    return SynthDataset(
        spec=spec,
        sequences=[seq for seq, _ in made],
        latents={seq.video_id: path for seq, path in made},
        centers=centers,
        directions=directions,
    )


# ---------------------------------------------------------------------------
# Time variance
# ---------------------------------------------------------------------------


@expects(frames=(T, D))
def time_variance(frames: np.ndarray) -> float:
    """
    Population variance over time, averaged over feature dimensions.

    Raises:
        ValidationError: If fewer than two frames are given.
    """
    x = np.asarray(frames, dtype=np.float64)
    if x.shape[0] < 2:
        raise ValidationError(
            f"time variance needs T >= 2, got T={x.shape[0]}", operation="time_variance"
        )
    return float(x.var(axis=0).mean())


def time_variance_by_group(
    sequences: Iterable[FeatureSequence], key: str = "verb"
) -> dict[str, float]:
    """Mean time variance per label value (``verb``, ``noun`` or ``split``)."""
    sums: dict[str, list[float]] = {}
    for seq in sequences:
        label = getattr(seq, key)
        if label is None:
            continue
        sums.setdefault(str(label), []).append(time_variance(seq.frames))
    return {label: float(np.mean(values)) for label, values in sorted(sums.items())}


# ---------------------------------------------------------------------------
# 2-D projection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProjectionRow:
    frame: int
    pc1: float
    pc2: float
    kind: str


def project_2d(original: np.ndarray, reconstructed: np.ndarray) -> list[ProjectionRow]:
    """
    Project both trajectories onto the top two principal components.

    The PCA is fit on the union of both point sets. Component signs are
    fixed so the largest loading is positive. Original rows come first.

    Raises:
        ValidationError: If T < 2.
        DimensionError: If the two inputs differ in shape.
    """
    a = np.asarray(original, dtype=np.float64)
    b = np.asarray(reconstructed, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise DimensionError(
            "original and reconstructed must both be (T, D) with equal shapes",
            operation="project_2d",
            expected=a.shape,
            actual=b.shape,
        )
    if a.shape[0] < 2:
        raise ValidationError(
            f"projection needs T >= 2, got T={a.shape[0]}", operation="project_2d"
        )
    points = np.concatenate([a, b])
    centered = points - points.mean(axis=0, keepdims=True)
    cov = centered.T @ centered / len(points)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:2]
    top = eigvecs[:, order]
    if top.shape[1] < 2:
        top = np.concatenate([top, np.zeros((top.shape[0], 2 - top.shape[1]))], axis=1)
    tol = max(float(eigvals.max(initial=0.0)), 1e-300) * 1e-10
    rank = int((eigvals > tol).sum())
    if rank < 2:
        logger.warning("point set has rank %d; zero-filling the missing components", rank)
    for k in range(2):
        if k >= rank:
            top[:, k] = 0.0
            continue
        pivot = int(np.argmax(np.abs(top[:, k])))
        if top[pivot, k] < 0:
            top[:, k] = -top[:, k]
    coords = centered @ top
    num_frames = a.shape[0]
    return [
        ProjectionRow(
            frame=(i % num_frames) + 1,
            pc1=float(coords[i, 0]),
            pc2=float(coords[i, 1]),
            kind="original" if i < num_frames else "reconstructed",
        )
        for i in range(len(points))
    ]


def write_projection_csv(
    path: str | Path, projections: Mapping[str, Sequence[ProjectionRow]]
) -> None:
    """Columns: video_id, frame, pc1, pc2, kind."""
    write_rows_csv(
        path,
        PROJECTION_COLUMNS,
        (
            (video_id, row.frame, repr(row.pc1), repr(row.pc2), row.kind)
            for video_id, rows in projections.items()
            for row in rows
        ),
    )


__all__ = [
    "SynthSpec",
    "SynthDataset",
    "Warp",
    "ProjectionRow",
    "gen_synth_dataset",
    "antonym_config_for",
    "latent_path",
    "ramp",
    "time_variance",
    "time_variance_by_group",
    "project_2d",
    "write_projection_csv",
]
