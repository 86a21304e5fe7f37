"""
Probe classifiers and the evaluation protocols built on them.

Three probe heads are trained on frozen descriptors with Adam:

- ``linear``: one affine layer.
- ``mlp``: one ReLU hidden layer with dropout (training only).
- ``attentive``: a learnable query attends over a variable-length token
  sequence; the pooled vector, optionally concatenated with an auxiliary
  descriptor, feeds an affine layer.

Binary tasks use one logit and predict label 1 only for a strictly
positive logit. Multi-class tasks use one logit per class and argmax.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Any, Literal

import numpy as np

from lift import ops
from lift.config import resolve_seed
from lift.contracts import N, S, check_shape, expects
from lift.errors import ConfigError, DimensionError, LiftError, ProbeError
from lift.featureio import FeatureSequence, Manifest, resample_frames, write_json, write_rows_csv
from lift.optim import AdamState, PlateauScheduler, adam_step
from lift.pooling import PoolingSpec, concat_descriptors, pool_sequences
from lift.tensor import GradTape, Tensor
from lift.training import standardization_stats

if TYPE_CHECKING:
    from lift.chiral import ChiralGroup
    from lift.model import LiftParams

logger = logging.getLogger("lift.probes")

ProbeKind = Literal["linear", "mlp", "attentive"]
PROBE_KINDS = ("linear", "mlp", "attentive")
_MASKED = -1e9

# Published reference figure kept with reports of the learned descriptor.
REFERENCE_RESULTS = {"ssv2_chiral": {"descriptor": "lift", "accuracy": 86.6, "dim": 768}}


@dataclass(frozen=True)
class ProbeSpec:
    """
    Probe architecture and optimizer settings.

    ``batch_size=None`` trains full-batch. ``scheduler="plateau"`` halves
    the rate when the epoch training loss stalls.
    """

    kind: ProbeKind = "linear"
    hidden: int = 512
    dropout: float = 0.1
    learning_rate: float = 1e-3
    epochs: int = 200
    weight_decay: float = 1e-4
    batch_size: int | None = None
    scheduler: Literal["none", "plateau"] = "none"
    seed: int | None = None
    standardize: bool = True

    def __post_init__(self) -> None:
        if self.kind not in PROBE_KINDS:
            raise ConfigError(f"unknown probe kind {self.kind!r}; expected one of {PROBE_KINDS}")
        if self.epochs < 1:
            raise ConfigError(f"probe epochs must be >= 1, got {self.epochs}")
        if self.hidden < 1:
            raise ConfigError(f"hidden width must be >= 1, got {self.hidden}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate must be > 0 and weight_decay >= 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.scheduler not in ("none", "plateau"):
            raise ConfigError(f"unknown scheduler {self.scheduler!r}")

    @classmethod
    def chiral(cls, kind: ProbeKind = "linear", **overrides: Any) -> ProbeSpec:
        """Small-group recipe: lr 1e-3, 200 epochs, weight decay 1e-4, full batch."""
        return cls(kind=kind, **overrides)

    @classmethod
    def standard(cls, kind: ProbeKind = "linear", **overrides: Any) -> ProbeSpec:
        """Action-recognition recipe: lr 1e-5, 100 epochs, plateau scheduler."""
        base: dict[str, Any] = {
            "learning_rate": 1e-5,
            "epochs": 100,
            "weight_decay": 0.0,
            "batch_size": 256,
            "scheduler": "plateau",
        }
        base.update(overrides)
        return cls(kind=kind, **base)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> ProbeSpec:
        return cls(**dict(payload))


# ---------------------------------------------------------------------------
# Parameters and forward graphs
# ---------------------------------------------------------------------------


def _init_affine(
    rng: np.random.Generator, fan_in: int, fan_out: int, prefix: str
) -> dict[str, np.ndarray]:
    bound = 1.0 / math.sqrt(max(1, fan_in))
    return {
        f"{prefix}.weight": rng.uniform(-bound, bound, (fan_in, fan_out)).astype(np.float32),
        f"{prefix}.bias": np.zeros(fan_out, dtype=np.float32),
    }


def _init_params(
    spec: ProbeSpec, in_dim: int, outputs: int, rng: np.random.Generator, aux_dim: int = 0
) -> dict[str, np.ndarray]:
    if spec.kind == "linear":
        return _init_affine(rng, in_dim, outputs, "head")
    if spec.kind == "mlp":
        return {
            **_init_affine(rng, in_dim, spec.hidden, "hidden"),
            **_init_affine(rng, spec.hidden, outputs, "head"),
        }
    bound = 1.0 / math.sqrt(in_dim)
    return {
        "query": rng.uniform(-bound, bound, in_dim).astype(np.float32),
        **_init_affine(rng, in_dim, in_dim, "key"),
        **_init_affine(rng, in_dim + aux_dim, outputs, "head"),
    }


def _vector_graph(
    p: Mapping[str, Tensor],
    x: np.ndarray,
    spec: ProbeSpec,
    rng: np.random.Generator | None = None,
) -> Tensor:
    inputs = Tensor._wrap(x)
    if spec.kind == "linear":
        return ops.linear(inputs, p["head.weight"], p["head.bias"])
    h = ops.relu(ops.linear(inputs, p["hidden.weight"], p["hidden.bias"]))
    if rng is not None and spec.dropout > 0:
        keep = (rng.random(h.shape) >= spec.dropout) / (1.0 - spec.dropout)
        h = ops.mul(h, Tensor._wrap(keep.astype(h.dtype)))
    return ops.linear(h, p["head.weight"], p["head.bias"])


def _attention_weights(p: Mapping[str, Tensor], tokens: np.ndarray, mask: np.ndarray) -> Tensor:
    n, s, width = tokens.shape
    keys = ops.linear(Tensor._wrap(tokens), p["key.weight"], p["key.bias"])
    scores = ops.matmul(keys, ops.reshape(p["query"], (width, 1)))
    scores = ops.scale(ops.reshape(scores, (n, s)), 1.0 / math.sqrt(width))
    scores = ops.add(scores, Tensor._wrap(np.where(mask, 0.0, _MASKED).astype(tokens.dtype)))
    return ops.softmax(scores)


def _attentive_graph(
    p: Mapping[str, Tensor], tokens: np.ndarray, mask: np.ndarray, aux: np.ndarray | None
) -> tuple[Tensor, Tensor]:
    n, s, width = tokens.shape
    alpha = _attention_weights(p, tokens, mask)
    pooled = ops.matmul(ops.reshape(alpha, (n, 1, s)), Tensor._wrap(tokens))
    pooled = ops.reshape(pooled, (n, width))
    head_in = pooled if aux is None else ops.concat([pooled, Tensor._wrap(aux)], axis=-1)
    return ops.linear(head_in, p["head.weight"], p["head.bias"]), pooled


def _loss(logits: Tensor, targets: np.ndarray, classes: int) -> Tensor:
    if classes == 2:
        return ops.sigmoid_cross_entropy(ops.reshape(logits, (-1,)), targets)
    return ops.softmax_cross_entropy(logits, targets)


def _fit(
    spec: ProbeSpec,
    params: dict[str, np.ndarray],
    count: int,
    loss_fn: Callable[[Mapping[str, Tensor], np.ndarray, np.random.Generator], Tensor],
    rng: np.random.Generator,
) -> tuple[dict[str, np.ndarray], float]:
    state = AdamState.zeros_like(params)
    scheduler = PlateauScheduler(spec.learning_rate) if spec.scheduler == "plateau" else None
    lr = spec.learning_rate
    batch = count if spec.batch_size is None else min(spec.batch_size, count)
    epoch_loss = math.nan
    for _ in range(spec.epochs):
        order = rng.permutation(count) if batch < count else np.arange(count)
        total = 0.0
        for start in range(0, count, batch):
            idx = order[start : start + batch]
            with GradTape() as tape:
                p = {k: tape.watch(v, name=k) for k, v in params.items()}
                loss = loss_fn(p, idx, rng)
            grads = tape.gradient(loss, p)
            params, state = adam_step(params, grads, state, lr, spec.weight_decay)
            total += loss.item() * len(idx)
        epoch_loss = total / count
        if scheduler is not None:
            lr = scheduler.step(epoch_loss)
    return params, epoch_loss


def _label_index(labels: Sequence[Any]) -> tuple[list[Any], np.ndarray]:
    values = sorted(set(labels), key=lambda v: (str(type(v)), v))
    if len(values) < 2:
        raise ProbeError(
            f"probe training set has a single class ({values})",
            operation="train_probe",
            reason="both labels must be present",
        )
    lookup = {v: i for i, v in enumerate(values)}
    return values, np.array([lookup[v] for v in labels], dtype=np.int64)


# ---------------------------------------------------------------------------
# Classifiers
# ---------------------------------------------------------------------------


@dataclass
class _Classifier:
    spec: ProbeSpec
    params: dict[str, np.ndarray]
    labels: list[Any]
    train_loss: float = math.nan

    @property
    def classes(self) -> int:
        return len(self.labels)

    def _decide(self, logits: np.ndarray) -> np.ndarray:
        if self.classes == 2:
            idx = (logits.reshape(-1) > 0).astype(np.int64)
        else:
            idx = np.argmax(logits, axis=-1)
        return np.array([self.labels[i] for i in idx])

    def _tensors(self) -> dict[str, Tensor]:
        return {k: Tensor._wrap(v) for k, v in self.params.items()}


@dataclass
class ProbeClassifier(_Classifier):
    """A linear or MLP probe over fixed-length descriptors."""

    mean: np.ndarray | None = None
    std: np.ndarray | None = None

    def _inputs(self, features: np.ndarray) -> np.ndarray:
        x = np.asarray(features, dtype=np.float32)
        if x.ndim == 1:
            x = x[None]
        check_shape(x, (None, self.width), "features", operation="ProbeClassifier")
        if self.mean is not None and self.std is not None:
            x = ((x - self.mean) / self.std).astype(np.float32)
        return x

    @property
    def width(self) -> int:
        first = "head.weight" if self.spec.kind == "linear" else "hidden.weight"
        return int(self.params[first].shape[0])

    def logits(self, features: np.ndarray) -> np.ndarray:
        """Raw scores; dropout is off."""
        return _vector_graph(self._tensors(), self._inputs(features), self.spec).data

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self._decide(self.logits(features))

    def accuracy(self, features: np.ndarray, labels: Sequence[Any]) -> float:
        labels = np.asarray(labels)
        if len(labels) == 0:
            raise ProbeError("cannot score an empty set", operation="accuracy")
        return float(np.mean(self.predict(features) == labels))


@dataclass
class AttentiveProbe(_Classifier):
    """Single-query attention pooling over tokens, then an affine head."""

    token_mean: np.ndarray | None = None
    token_std: np.ndarray | None = None
    aux_mean: np.ndarray | None = None
    aux_std: np.ndarray | None = None

    @property
    def width(self) -> int:
        return int(self.params["query"].shape[0])

    @property
    def aux_dim(self) -> int:
        return int(self.params["head.weight"].shape[0]) - self.width

    def _tokens(self, tokens: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
        padded, mask = pad_tokens(tokens)
        ctx = check_shape(padded, (N, S, self.width), "tokens", operation="AttentiveProbe")
        check_shape(mask, (N, S), "mask", ctx=ctx, operation="AttentiveProbe")
        if self.token_mean is not None and self.token_std is not None:
            padded = _standardize_tokens(padded, mask, self.token_mean, self.token_std)
        return padded, mask

    def _aux(self, aux: np.ndarray | None, rows: int) -> np.ndarray | None:
        if not self.aux_dim:
            return None
        if aux is None:
            raise DimensionError(
                f"probe was trained with a {self.aux_dim}-dim auxiliary descriptor",
                operation="AttentiveProbe",
                argument="aux",
            )
        arr = np.asarray(aux, dtype=np.float32).reshape(rows, -1)
        check_shape(arr, (None, self.aux_dim), "aux", operation="AttentiveProbe")
        if self.aux_mean is not None and self.aux_std is not None:
            arr = ((arr - self.aux_mean) / self.aux_std).astype(np.float32)
        return arr

    def pool(self, tokens: Sequence[np.ndarray]) -> np.ndarray:
        """Attention-weighted token averages (N, width), in standardized space."""
        padded, mask = self._tokens(tokens)
        n, s, width = padded.shape
        alpha = _attention_weights(self._tensors(), padded, mask)
        pooled = ops.matmul(ops.reshape(alpha, (n, 1, s)), Tensor._wrap(padded))
        return ops.reshape(pooled, (n, width)).data

    def logits(self, tokens: Sequence[np.ndarray], aux: np.ndarray | None = None) -> np.ndarray:
        padded, mask = self._tokens(tokens)
        extra = self._aux(aux, len(padded))
        return _attentive_graph(self._tensors(), padded, mask, extra)[0].data

    def predict(self, tokens: Sequence[np.ndarray], aux: np.ndarray | None = None) -> np.ndarray:
        return self._decide(self.logits(tokens, aux))

    def accuracy(
        self, tokens: Sequence[np.ndarray], labels: Sequence[Any], aux: np.ndarray | None = None
    ) -> float:
        labels = np.asarray(labels)
        if len(labels) == 0:
            raise ProbeError("cannot score an empty set", operation="accuracy")
        return float(np.mean(self.predict(tokens, aux) == labels))


def _standardize_tokens(
    padded: np.ndarray, mask: np.ndarray, mean: np.ndarray, std: np.ndarray
) -> np.ndarray:
    return np.where(mask[..., None], (padded - mean) / std, 0.0).astype(np.float32)


def pad_tokens(tokens: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """
    Stack variable-length (S_i, width) sequences.

    Returns:
        Zero-padded (N, S_max, width) tokens and an (N, S_max) mask of
        real positions.

    Raises:
        ProbeError: If a sequence is empty.
        DimensionError: If token widths differ.
    """
    seqs = [np.asarray(t, dtype=np.float32) for t in tokens]
    if not seqs:
        raise ProbeError("no token sequences given", operation="pad_tokens")
    widths = set()
    for i, seq in enumerate(seqs):
        if seq.ndim != 2 or seq.shape[0] == 0:
            raise ProbeError(f"token sequence {i} is empty", operation="pad_tokens")
        widths.add(seq.shape[1])
    if len(widths) != 1:
        raise DimensionError(
            f"token sequences have different widths {sorted(widths)}", operation="pad_tokens"
        )
    width = widths.pop()
    longest = max(seq.shape[0] for seq in seqs)
    padded = np.zeros((len(seqs), longest, width), dtype=np.float32)
    mask = np.zeros((len(seqs), longest), dtype=bool)
    for i, seq in enumerate(seqs):
        padded[i, : len(seq)] = seq
        mask[i, : len(seq)] = True
    return padded, mask


# ---------------------------------------------------------------------------
# Training entry points
# ---------------------------------------------------------------------------


def _train_vector_probe(
    features: np.ndarray, labels: Sequence[Any], spec: ProbeSpec
) -> ProbeClassifier:
    x = np.asarray(features, dtype=np.float32)
    if len(x) != len(labels):
        raise DimensionError(
            "features and labels differ in length",
            operation="train_probe",
            expected=len(x),
            actual=len(labels),
        )
    values, targets = _label_index(list(labels))
    mean = std = None
    if spec.standardize:
        mean, std = standardization_stats(x)
        x = ((x - mean) / std).astype(np.float32)
    rng = np.random.default_rng(resolve_seed(spec.seed))
    outputs = 1 if len(values) == 2 else len(values)
    params = _init_params(spec, x.shape[1], outputs, rng)

    def loss_fn(p: Mapping[str, Tensor], idx: np.ndarray, r: np.random.Generator) -> Tensor:
        return _loss(_vector_graph(p, x[idx], spec, r), targets[idx], len(values))

    params, final = _fit(spec, params, len(x), loss_fn, rng)
    logger.debug("%s probe: %d samples, final loss %.4f", spec.kind, len(x), final)
    return ProbeClassifier(spec, params, values, final, mean=mean, std=std)


@expects(features=(N, None))
def train_linear_probe(
    features: np.ndarray, labels: Sequence[Any], spec: ProbeSpec | None = None
) -> ProbeClassifier:
    """
    Fit a logistic-regression probe with Adam.

    Standardization statistics (when enabled) come from ``features`` only.

    Raises:
        ProbeError: If ``labels`` hold a single class.
    """
    spec = replace(spec or ProbeSpec.chiral(), kind="linear")
    return _train_vector_probe(features, labels, spec)


@expects(features=(N, None))
def train_mlp_probe(
    features: np.ndarray, labels: Sequence[Any], spec: ProbeSpec | None = None
) -> ProbeClassifier:
    """Fit a one-hidden-layer ReLU probe; dropout is active only while training."""
    spec = replace(spec or ProbeSpec.chiral("mlp"), kind="mlp")
    return _train_vector_probe(features, labels, spec)


def train_attentive_probe(
    tokens: Sequence[np.ndarray],
    labels: Sequence[Any],
    spec: ProbeSpec | None = None,
    aux: np.ndarray | None = None,
) -> AttentiveProbe:
    """
    Fit a learnable-query attention probe over token sequences.

    Sequences may differ in length but share their width. ``aux`` (N, A)
    is concatenated with the pooled vector before the head.

    Raises:
        ProbeError: On an empty sequence or a single-class label set.
    """
    spec = replace(spec or ProbeSpec.chiral("attentive"), kind="attentive")
    padded, mask = pad_tokens(tokens)
    if len(padded) != len(labels):
        raise DimensionError(
            "tokens and labels differ in length",
            operation="train_attentive_probe",
            expected=len(padded),
            actual=len(labels),
        )
    values, targets = _label_index(list(labels))
    aux_arr = None if aux is None else np.asarray(aux, dtype=np.float32).reshape(len(padded), -1)
    probe = AttentiveProbe(spec, {}, values)
    if spec.standardize:
        probe.token_mean, probe.token_std = standardization_stats(padded[mask])
        padded = _standardize_tokens(padded, mask, probe.token_mean, probe.token_std)
        if aux_arr is not None:
            probe.aux_mean, probe.aux_std = standardization_stats(aux_arr)
            aux_arr = ((aux_arr - probe.aux_mean) / probe.aux_std).astype(np.float32)
    rng = np.random.default_rng(resolve_seed(spec.seed))
    outputs = 1 if len(values) == 2 else len(values)
    aux_dim = 0 if aux_arr is None else aux_arr.shape[1]
    params = _init_params(spec, padded.shape[2], outputs, rng, aux_dim=aux_dim)

    def loss_fn(p: Mapping[str, Tensor], idx: np.ndarray, r: np.random.Generator) -> Tensor:
        sub_aux = None if aux_arr is None else aux_arr[idx]
        logits, _ = _attentive_graph(p, padded[idx], mask[idx], sub_aux)
        return _loss(logits, targets[idx], len(values))

    probe.params, probe.train_loss = _fit(spec, params, len(padded), loss_fn, rng)
    return probe


def train_probe(
    features: np.ndarray | Sequence[np.ndarray],
    labels: Sequence[Any],
    spec: ProbeSpec,
    aux: np.ndarray | None = None,
) -> ProbeClassifier | AttentiveProbe:
    """Dispatch on ``spec.kind``; vector probes concatenate ``aux`` onto the features."""
    if spec.kind == "attentive":
        return train_attentive_probe(features, labels, spec, aux=aux)
    x = np.asarray(features, dtype=np.float32)
    if aux is not None:
        x = concat_descriptors(x, aux)
    if spec.kind == "mlp":
        return train_mlp_probe(x, labels, spec)
    return train_linear_probe(x, labels, spec)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GroupResult:
    """Outcome of one probe; ``accuracy`` is None when the group was skipped."""

    group: str
    n_train: int
    n_test: int
    accuracy: float | None
    train_accuracy: float | None = None
    skipped: str | None = None


@dataclass
class ProbeReport:
    """Per-group test accuracies and their unweighted mean."""

    results: list[GroupResult]
    descriptor_dim: int
    spec: dict[str, Any] = field(default_factory=dict)
    annotations: dict[str, Any] = field(default_factory=dict)

    @property
    def evaluated(self) -> list[GroupResult]:
        return [r for r in self.results if r.accuracy is not None]

    @property
    def skipped(self) -> list[GroupResult]:
        return [r for r in self.results if r.accuracy is None]

    @property
    def average(self) -> float | None:
        accs = [r.accuracy for r in self.evaluated if r.accuracy is not None]
        return float(np.mean(accs)) if accs else None

    def to_dict(self) -> dict[str, Any]:
        return {
            "average_accuracy": self.average,
            "descriptor_dim": self.descriptor_dim,
            "groups": [asdict(r) for r in self.results],
            "spec": self.spec,
            "annotations": self.annotations,
        }

    def write_json(self, path: str | Path) -> None:
        write_json(path, self.to_dict())

    def write_csv(self, path: str | Path) -> None:
        """Columns: group, n_train, n_test, accuracy (blank when skipped)."""
        write_rows_csv(
            path,
            ("group", "n_train", "n_test", "accuracy"),
            (
                (r.group, r.n_train, r.n_test, "" if r.accuracy is None else repr(r.accuracy))
                for r in self.results
            ),
        )


# ---------------------------------------------------------------------------
# Protocols
# ---------------------------------------------------------------------------


def group_seed(seed: int, index: int) -> int:
    """Independent probe seed for group ``index``."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _probe_one(
    index: int,
    group: ChiralGroup,
    features: Mapping[str, np.ndarray],
    aux: Mapping[str, np.ndarray] | None,
    spec: ProbeSpec,
    seed: int,
) -> GroupResult:
    n_train, n_test = len(group.train), len(group.test)
    try:
        if group.labels("train") != {0, 1}:
            raise ProbeError("train split lacks one of the two labels")
        if not group.test:
            raise ProbeError("test split is empty")
        missing = [v for v, _ in group.train + group.test if v not in features]
        if missing:
            raise ProbeError(f"no descriptor for {len(missing)} videos (e.g. {missing[0]!r})")

        def gather(members: list[tuple[str, int]]) -> tuple[Any, np.ndarray | None, list[int]]:
            ids = [v for v, _ in members]
            x: Any = [features[v] for v in ids]
            if spec.kind != "attentive":
                x = np.stack(x)
            extra = None if aux is None else np.stack([aux[v] for v in ids])
            return x, extra, [y for _, y in members]

        x_tr, a_tr, y_tr = gather(group.train)
        x_te, a_te, y_te = gather(group.test)
        probe = train_probe(x_tr, y_tr, replace(spec, seed=group_seed(seed, index)), aux=a_tr)
        if isinstance(probe, AttentiveProbe):
            acc = probe.accuracy(x_te, y_te, a_te)
            train_acc = probe.accuracy(x_tr, y_tr, a_tr)
        else:
            if a_te is not None:
                x_te, x_tr = concat_descriptors(x_te, a_te), concat_descriptors(x_tr, a_tr)
            acc = probe.accuracy(x_te, y_te)
            train_acc = probe.accuracy(x_tr, y_tr)
    except (LiftError, KeyError) as err:
        reason = err.message if isinstance(err, LiftError) else f"missing auxiliary {err}"
        logger.warning("skipping chiral group %s: %s", group.key, reason)
        return GroupResult(group.key, n_train, n_test, None, skipped=reason)
    logger.debug("group %s: test accuracy %.3f", group.key, acc)
    return GroupResult(group.key, n_train, n_test, acc, train_acc)


def _descriptor_dim(
    features: Mapping[str, np.ndarray], aux: Mapping[str, np.ndarray] | None
) -> int:
    first = next(iter(features.values()), None)
    dim = 0 if first is None else int(np.shape(first)[-1])
    if aux:
        dim += int(np.shape(next(iter(aux.values())))[-1])
    return dim


def evaluate_chiral_features(
    groups: Sequence[ChiralGroup],
    features: Mapping[str, np.ndarray],
    spec: ProbeSpec | None = None,
    *,
    aux: Mapping[str, np.ndarray] | None = None,
    workers: int = 1,
) -> ProbeReport:
    """
    One independent probe per group over precomputed descriptors.

    ``features`` maps video ids to vectors (or to (S, width) token
    sequences for attentive probes). Groups that cannot be probed are kept
    as skipped entries with a reason. Results do not depend on ``workers``.
    """
    spec = spec or ProbeSpec.chiral()
    seed = resolve_seed(spec.seed)

    def run(item: tuple[int, ChiralGroup]) -> GroupResult:
        return _probe_one(item[0], item[1], features, aux, spec, seed)

    items = list(enumerate(groups))
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, items))
    else:
        results = [run(item) for item in items]
    report = ProbeReport(
        results, _descriptor_dim(features, aux), spec={"probe": {**spec.to_dict(), "seed": seed}}
    )
    logger.info(
        "chiral probes: %d evaluated, %d skipped, mean accuracy %s",
        len(report.evaluated),
        len(report.skipped),
        "n/a" if report.average is None else f"{report.average:.4f}",
    )
    return report


def _sequences_for(
    source: Manifest | Mapping[str, FeatureSequence] | Sequence[FeatureSequence],
    ids: Sequence[str] | None = None,
) -> list[FeatureSequence]:
    if isinstance(source, Manifest):
        wanted = source.ids if ids is None else [v for v in ids if v in source]
        return [source.read(v) for v in wanted]
    if isinstance(source, Mapping):
        keys = list(source) if ids is None else [v for v in ids if v in source]
        return [source[v] for v in keys]
    seqs = list(source)
    if ids is None:
        return seqs
    wanted_set = set(ids)
    return [s for s in seqs if s.video_id in wanted_set]


def describe(
    sequences: Sequence[FeatureSequence],
    pooling: PoolingSpec | None,
    spec: ProbeSpec,
    *,
    model: LiftParams | None = None,
    num_frames: int = 16,
    workers: int = 1,
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray] | None]:
    """
    Probe inputs for a set of videos.

    Vector probes get the pooled descriptor. Attentive probes get the
    resampled frames as tokens and the pooled descriptor (if any) as the
    auxiliary input.
    """
    pooled: dict[str, np.ndarray] | None = None
    if pooling is not None:
        ids, matrix = pool_sequences(sequences, pooling, num_frames, model=model, workers=workers)
        pooled = dict(zip(ids, matrix, strict=True))
    if spec.kind != "attentive":
        if pooled is None:
            raise ConfigError("linear and MLP probes need a pooling")
        return pooled, None
    tokens = {s.video_id: resample_frames(s, num_frames) for s in sequences}
    return tokens, pooled


def evaluate_chiral(
    groups: Sequence[ChiralGroup],
    source: Manifest | Mapping[str, FeatureSequence] | Sequence[FeatureSequence],
    pooling: PoolingSpec | None,
    spec: ProbeSpec | None = None,
    *,
    model: LiftParams | None = None,
    aux: Mapping[str, np.ndarray] | None = None,
    num_frames: int = 16,
    workers: int = 1,
) -> ProbeReport:
    """
    Run the chiral protocol: pool every grouped video, then probe each group.

    ``aux`` descriptors are concatenated (⊕) onto the pooled ones.
    """
    spec = spec or ProbeSpec.chiral()
    ids = sorted({v for g in groups for v, _ in g.train + g.test})
    sequences = _sequences_for(source, ids)
    features, pooled_aux = describe(
        sequences, pooling, spec, model=model, num_frames=num_frames, workers=workers
    )
    if spec.kind != "attentive" and aux is not None:
        features = {
            v: concat_descriptors(x, aux[v]) for v, x in features.items() if v in aux
        }
        extra = None
    else:
        extra = _merge_aux(pooled_aux, aux)
    report = evaluate_chiral_features(groups, features, spec, aux=extra, workers=workers)
    report.spec["pooling"] = None if pooling is None else pooling.to_dict()
    report.spec["num_frames"] = num_frames
    if pooling is not None and pooling.kind == "lift_descriptor":
        report.annotations["reference"] = REFERENCE_RESULTS
    return report


def _merge_aux(
    first: Mapping[str, np.ndarray] | None, second: Mapping[str, np.ndarray] | None
) -> dict[str, np.ndarray] | None:
    if first is None and second is None:
        return None
    if first is None or second is None:
        return dict(first or second or {})
    return {v: concat_descriptors(x, second[v]) for v, x in first.items() if v in second}


def evaluate_standard(
    source: Manifest | Mapping[str, FeatureSequence] | Sequence[FeatureSequence],
    pooling: PoolingSpec | None,
    spec: ProbeSpec | None = None,
    *,
    label: Literal["verb", "noun", "action"] = "verb",
    model: LiftParams | None = None,
    aux: Mapping[str, np.ndarray] | None = None,
    num_frames: int = 16,
    workers: int = 1,
) -> ProbeReport:
    """
    Multi-class action recognition on a labelled train/test split.

    ``label`` picks the class: the verb, the noun or their pair. Test
    videos whose class never occurs in training count as errors.
    """
    spec = spec or ProbeSpec.standard()
    sequences = [s for s in _sequences_for(source) if _class_of(s, label) is not None]
    features, pooled_aux = describe(
        sequences, pooling, spec, model=model, num_frames=num_frames, workers=workers
    )
    extra = _merge_aux(pooled_aux, aux) if spec.kind == "attentive" else None
    if spec.kind != "attentive" and aux is not None:
        features = {v: concat_descriptors(x, aux[v]) for v, x in features.items()}
    train = [s for s in sequences if s.split == "train"]
    test = [s for s in sequences if s.split == "test"]
    name = f"standard:{label}"

    def gather(seqs: list[FeatureSequence]) -> tuple[Any, np.ndarray | None, list[str]]:
        x: Any = [features[s.video_id] for s in seqs]
        if spec.kind != "attentive":
            x = np.stack(x)
        a = None if extra is None else np.stack([extra[s.video_id] for s in seqs])
        return x, a, [str(_class_of(s, label)) for s in seqs]

    if not train or not test:
        raise ProbeError(
            "standard evaluation needs both train and test videos", operation="evaluate_standard"
        )
    x_tr, a_tr, y_tr = gather(train)
    x_te, a_te, y_te = gather(test)
    probe = train_probe(x_tr, y_tr, replace(spec, seed=resolve_seed(spec.seed)), aux=a_tr)
    if isinstance(probe, AttentiveProbe):
        acc, train_acc = probe.accuracy(x_te, y_te, a_te), probe.accuracy(x_tr, y_tr, a_tr)
    else:
        acc, train_acc = probe.accuracy(x_te, y_te), probe.accuracy(x_tr, y_tr)
    report = ProbeReport(
        [GroupResult(name, len(train), len(test), acc, train_acc)],
        _descriptor_dim(features, extra),
        spec={
            "probe": spec.to_dict(),
            "pooling": None if pooling is None else pooling.to_dict(),
            "label": label,
            "classes": probe.classes,
            "num_frames": num_frames,
        },
    )
    logger.info("%s: %d classes, test accuracy %.4f", name, probe.classes, acc)
    return report


def _class_of(seq: FeatureSequence, label: str) -> str | None:
    if label == "verb":
        return seq.verb
    if label == "noun":
        return seq.noun
    if seq.verb is None or seq.noun is None:
        return None
    return f"{seq.verb}|{seq.noun}"


__all__ = [
    "ProbeSpec",
    "ProbeClassifier",
    "AttentiveProbe",
    "GroupResult",
    "ProbeReport",
    "REFERENCE_RESULTS",
    "pad_tokens",
    "train_linear_probe",
    "train_mlp_probe",
    "train_attentive_probe",
    "train_probe",
    "group_seed",
    "describe",
    "evaluate_chiral",
    "evaluate_chiral_features",
    "evaluate_standard",
]
