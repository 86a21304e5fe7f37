"""
Feature-sequence storage, manifests, frame resampling and checkpoints.

File formats (all little-endian):

- Feature file: ``b"LFT1" | u32 version=1 | u32 T_raw | u32 D`` followed by
  ``T_raw·D`` float32 values, row-major.
- Manifest: JSON Lines, one object per video with keys ``video_id, path,
  frames, dim, verb, noun, split``; ``path`` is relative to the manifest.
- Checkpoint: ``b"LCK1" | u32 header_length | JSON header`` followed by the
  raw float32 payloads listed in the header's tensor directory.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from lift.contracts import D, T, ensures
from lift.errors import FormatError, NonFiniteError, ValidationError

if TYPE_CHECKING:
    from lift.model import LiftConfig

logger = logging.getLogger("lift.featureio")

FEATURE_MAGIC = b"LFT1"
FEATURE_VERSION = 1
FEATURE_HEADER_BYTES = 16
CHECKPOINT_MAGIC = b"LCK1"

SPLITS = ("train", "test")
MANIFEST_KEYS = ("video_id", "path", "frames", "dim", "verb", "noun", "split")


# ---------------------------------------------------------------------------
# Feature sequences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureSequence:
    """
    One video's per-frame features plus identity and labels.

    ``frames`` is a read-only float32 array of shape (T_raw, D).
    """

    video_id: str
    frames: np.ndarray
    verb: str | None = None
    noun: str | None = None
    split: str = "train"

    def __post_init__(self) -> None:
        arr = np.array(self.frames, dtype=np.float32, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(
                f"frames for {self.video_id!r} must be a non-empty (T, D) matrix",
                operation="FeatureSequence",
                actual=tuple(arr.shape),
            )
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(
                f"frames for {self.video_id!r} contain NaN or Inf", operation="FeatureSequence"
            )
        if self.split not in SPLITS:
            raise ValidationError(
                f"split must be one of {SPLITS}, got {self.split!r}", operation="FeatureSequence"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "frames", arr)

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def dim(self) -> int:
        return int(self.frames.shape[1])


def encode_feature_bytes(frames: np.ndarray) -> bytes:
    """Serialize a (T, D) matrix in the LFT1 layout."""
    t, d = frames.shape
    header = FEATURE_MAGIC + np.array([FEATURE_VERSION, t, d], dtype="<u4").tobytes()
    return header + np.ascontiguousarray(frames, dtype="<f4").tobytes()


def decode_feature_bytes(raw: bytes, path: str | None = None) -> np.ndarray:
    """
    Parse LFT1 bytes into a (T, D) float32 matrix.

    Raises:
        FormatError: On bad magic, unknown version, empty dims or truncation,
            with the byte offset of the problem.
    """
    if len(raw) < 4 or raw[:4] != FEATURE_MAGIC:
        raise FormatError(f"bad magic {raw[:4]!r}, expected {FEATURE_MAGIC!r}", path=path, offset=0)
    if len(raw) < FEATURE_HEADER_BYTES:
        raise FormatError("truncated header", path=path, offset=len(raw))
    version, t, d = (int(v) for v in np.frombuffer(raw, dtype="<u4", count=3, offset=4))
    if version != FEATURE_VERSION:
        raise FormatError(f"unsupported version {version}", path=path, offset=4)
    if t < 1:
        raise FormatError("frame count must be at least 1", path=path, offset=8)
    if d < 1:
        raise FormatError("feature dimension must be at least 1", path=path, offset=12)
    expected = FEATURE_HEADER_BYTES + 4 * t * d
    if len(raw) < expected:
        raise FormatError(
            f"truncated payload: expected {expected} bytes, found {len(raw)}",
            path=path,
            offset=len(raw),
        )
    if len(raw) > expected:
        raise FormatError(
            f"{len(raw) - expected} trailing bytes after payload", path=path, offset=expected
        )
    values = np.frombuffer(raw, dtype="<f4", count=t * d, offset=FEATURE_HEADER_BYTES)
    return values.astype(np.float32).reshape(t, d)


def read_feature_header(path: str | Path) -> tuple[int, int]:
    """Read (T_raw, D) from a feature file without loading its payload."""
    with open(path, "rb") as fh:
        head = fh.read(FEATURE_HEADER_BYTES)
    if head[:4] != FEATURE_MAGIC:
        raise FormatError(f"bad magic {head[:4]!r}", path=str(path), offset=0)
    if len(head) < FEATURE_HEADER_BYTES:
        raise FormatError("truncated header", path=str(path), offset=len(head))
    _, t, d = (int(v) for v in np.frombuffer(head, dtype="<u4", count=3, offset=4))
    return t, d


def write_feature_file(seq: FeatureSequence, path: str | Path) -> None:
    """Write a sequence's frames in the LFT1 format."""
    Path(path).write_bytes(encode_feature_bytes(seq.frames))


def read_feature_file(
    path: str | Path,
    video_id: str | None = None,
    verb: str | None = None,
    noun: str | None = None,
    split: str = "train",
) -> FeatureSequence:
    """
    Read an LFT1 file. The file stores frames only; identity and labels
    come from the caller (usually a manifest record) and default to the
    file stem.
    """
    frames = decode_feature_bytes(Path(path).read_bytes(), path=str(path))
    return FeatureSequence(
        video_id=video_id if video_id is not None else Path(path).stem,
        frames=frames,
        verb=verb,
        noun=noun,
        split=split,
    )


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------


def resample_indices(num_raw: int, count: int) -> list[int]:
    """
    Endpoint-inclusive linear frame indices.

    Index i is round(i·(T_raw−1)/(T−1)) with halves rounded up; a single
    requested frame picks the middle one.
    """
    if count < 1 or num_raw < 1:
        raise ValidationError(
            f"need count >= 1 and T_raw >= 1, got count={count}, T_raw={num_raw}",
            operation="resample_frames",
        )
    if count == 1:
        return [(num_raw - 1) // 2]
    step = (num_raw - 1) / (count - 1)
    return [min(num_raw - 1, int(math.floor(i * step + 0.5))) for i in range(count)]


@ensures(result=(T, D))
def resample_frames(seq: FeatureSequence | np.ndarray, count: int) -> np.ndarray:
    """
    Select ``count`` frames linearly over the sequence (copies, (count, D)).

    Sampling more frames than exist repeats indices.
    """
    frames = seq.frames if isinstance(seq, FeatureSequence) else np.asarray(seq)
    idx = resample_indices(int(frames.shape[0]), count)
    return np.array(frames[idx], dtype=np.float32)


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ManifestRecord:
    """One manifest line."""

    video_id: str
    path: str
    frames: int
    dim: int
    verb: str | None = None
    noun: str | None = None
    split: str = "train"

    def to_dict(self) -> dict[str, Any]:
        return {key: getattr(self, key) for key in MANIFEST_KEYS}


def _parse_record(payload: Any, line: int) -> ManifestRecord:
    if not isinstance(payload, dict):
        raise ValidationError("manifest line is not a JSON object", line=line)
    missing = [k for k in ("video_id", "path", "frames", "dim") if k not in payload]
    if missing:
        raise ValidationError(f"manifest line misses keys {missing}", line=line)
    try:
        frames, dim = int(payload["frames"]), int(payload["dim"])
    except (TypeError, ValueError) as err:
        raise ValidationError("frames/dim must be integers", line=line) from err
    if frames < 1 or dim < 1:
        raise ValidationError("frames and dim must be at least 1", line=line)
    split = payload.get("split") or "train"
    if split not in SPLITS:
        raise ValidationError(f"split must be one of {SPLITS}, got {split!r}", line=line)
    return ManifestRecord(
        video_id=str(payload["video_id"]),
        path=str(payload["path"]),
        frames=frames,
        dim=dim,
        verb=payload.get("verb"),
        noun=payload.get("noun"),
        split=split,
    )


@dataclass
class Manifest:
    """
    Ordered set of feature-file records.

    Header agreement between a record and its file is checked when the
    file is first read (or all at once through ``validate_files``).
    """

    records: list[ManifestRecord]
    root: Path = field(default_factory=Path)
    _checked: set[str] = field(default_factory=set, repr=False)

    def __post_init__(self) -> None:
        seen: set[str] = set()
        dupes: list[str] = []
        for rec in self.records:
            if rec.video_id in seen and rec.video_id not in dupes:
                dupes.append(rec.video_id)
            seen.add(rec.video_id)
        if dupes:
            raise ValidationError(
                f"duplicate video_id: {', '.join(dupes)}", operation="load_manifest"
            )
        self._index = {rec.video_id: i for i, rec in enumerate(self.records)}

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ManifestRecord]:
        return iter(self.records)

    def __contains__(self, video_id: object) -> bool:
        return video_id in self._index

    @property
    def ids(self) -> list[str]:
        return [rec.video_id for rec in self.records]

    def get(self, video_id: str) -> ManifestRecord:
        try:
            return self.records[self._index[video_id]]
        except KeyError as err:
            raise ValidationError(f"unknown video_id {video_id!r}") from err

    def file_path(self, rec: ManifestRecord) -> Path:
        return self.root / rec.path

    def _check_header(self, rec: ManifestRecord) -> None:
        if rec.video_id in self._checked:
            return
        path = self.file_path(rec)
        if not path.exists():
            raise ValidationError(
                f"feature file for {rec.video_id!r} does not exist: {path}",
                operation="load_manifest",
            )
        t, d = read_feature_header(path)
        if (t, d) != (rec.frames, rec.dim):
            raise ValidationError(
                f"header of {path} says (T={t}, D={d}) but the manifest says "
                f"(T={rec.frames}, D={rec.dim})",
                operation="load_manifest",
                argument=rec.video_id,
            )
        self._checked.add(rec.video_id)

    def read(self, video_id: str) -> FeatureSequence:
        """Load one video's features, validating its header on first access."""
        rec = self.get(video_id)
        self._check_header(rec)
        return read_feature_file(
            self.file_path(rec),
            video_id=rec.video_id,
            verb=rec.verb,
            noun=rec.noun,
            split=rec.split,
        )

    def sequences(self) -> Iterator[FeatureSequence]:
        for rec in self.records:
            yield self.read(rec.video_id)

    def validate_files(self) -> None:
        """Check every record's file exists and its header matches."""
        for rec in self.records:
            self._check_header(rec)

    def subset(self, video_ids: Iterable[str]) -> Manifest:
        """A manifest restricted to ``video_ids``, keeping manifest order."""
        keep = set(video_ids)
        return Manifest([r for r in self.records if r.video_id in keep], root=self.root)

    def split(self, name: str) -> Manifest:
        return Manifest([r for r in self.records if r.split == name], root=self.root)


def load_manifest(path: str | Path) -> Manifest:
    """
    Parse a JSONL manifest; one record per non-blank line, input order kept.

    Raises:
        ValidationError: On malformed lines (with line number) or duplicate ids.
    """
    path = Path(path)
    records: list[ManifestRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                payload = json.loads(raw)
            except json.JSONDecodeError as err:
                raise ValidationError(f"malformed JSON: {err.msg}", line=lineno) from err
            records.append(_parse_record(payload, lineno))
    return Manifest(records, root=path.parent)


def write_manifest(path: str | Path, records: Iterable[ManifestRecord]) -> None:
    """Write records as JSON Lines with a fixed key order."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=False) + "\n")


def write_dataset(
    sequences: Iterable[FeatureSequence], out_dir: str | Path, manifest_name: str = "manifest.jsonl"
) -> Path:
    """
    Write every sequence to ``out_dir/features/<video_id>.lft`` plus a manifest.

    Returns:
        Path of the written manifest.
    """
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    records = []
    for seq in sequences:
        rel = f"features/{seq.video_id}.lft"
        write_feature_file(seq, out / rel)
        records.append(
            ManifestRecord(
                video_id=seq.video_id,
                path=rel,
                frames=seq.num_frames,
                dim=seq.dim,
                verb=seq.verb,
                noun=seq.noun,
                split=seq.split,
            )
        )
    manifest_path = out / manifest_name
    write_manifest(manifest_path, records)
    return manifest_path


# ---------------------------------------------------------------------------
# Descriptor tables
# ---------------------------------------------------------------------------


def write_descriptor_table(
    path: str | Path, video_ids: Sequence[str], matrix: np.ndarray, fmt: str = "binary"
) -> list[Path]:
    """
    Store one descriptor row per video.

    ``binary`` writes an LFT1 matrix (rows = videos) plus ``<stem>.index.csv``
    mapping rows to ids; ``csv`` writes a wide table with a header row.

    Returns:
        The written paths.
    """
    path = Path(path)
    matrix = np.asarray(matrix, dtype=np.float32)
    if matrix.ndim != 2 or matrix.shape[0] != len(video_ids):
        raise ValidationError(
            "descriptor matrix must have one row per video id",
            operation="write_descriptor_table",
            expected=(len(video_ids), "*"),
            actual=tuple(matrix.shape),
        )
    if fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["video_id", *[f"f{j}" for j in range(matrix.shape[1])]])
            for vid, row in zip(video_ids, matrix, strict=True):
                writer.writerow([vid, *[repr(float(v)) for v in row]])
        return [path]
    if fmt != "binary":
        raise ValidationError(f"unknown descriptor format {fmt!r}")
    path.write_bytes(encode_feature_bytes(matrix))
    index = path.with_suffix(".index.csv")
    with open(index, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["video_id", "row"])
        for i, vid in enumerate(video_ids):
            writer.writerow([vid, i])
    return [path, index]


def read_descriptor_table(path: str | Path) -> dict[str, np.ndarray]:
    """Load a descriptor table written by ``write_descriptor_table``."""
    path = Path(path)
    if path.suffix == ".csv":
        table: dict[str, np.ndarray] = {}
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            next(reader, None)
            for row in reader:
                table[row[0]] = np.array([float(v) for v in row[1:]], dtype=np.float32)
        return table
    matrix = decode_feature_bytes(path.read_bytes(), path=str(path))
    with open(path.with_suffix(".index.csv"), encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        return {row["video_id"]: matrix[int(row["row"])] for row in reader}


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


@dataclass
class Checkpoint:
    """
    A model configuration, its named tensors and training metadata.

    ``config`` may be None for a free-form tensor bundle whose names are not
    checked against a model.
    """

    config: LiftConfig | None
    tensors: dict[str, np.ndarray]
    metadata: dict[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        """
        Check the tensor set is exactly the one implied by ``config``.

        Raises:
            ValidationError: Naming the first missing, unknown or misshapen tensor.
        """
        if self.config is None:
            return
        from lift.model import param_shapes

        expected = param_shapes(self.config)
        for name in expected:
            if name not in self.tensors:
                raise ValidationError(f"checkpoint is missing tensor {name!r}", argument=name)
        for name, arr in self.tensors.items():
            if name not in expected:
                raise ValidationError(f"unknown tensor name {name!r}", argument=name)
            if tuple(arr.shape) != expected[name]:
                raise ValidationError(
                    f"tensor {name!r} has the wrong shape",
                    argument=name,
                    expected=expected[name],
                    actual=tuple(arr.shape),
                )


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    """Write a checkpoint in the LCK1 layout (bit-exact float32 payloads)."""
    ckpt.validate()
    directory = []
    payloads = []
    offset = 0
    for name, arr in ckpt.tensors.items():
        buf = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        directory.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(buf)}
        )
        payloads.append(buf)
        offset += len(buf)
    header = {
        "config": ckpt.config.to_dict() if ckpt.config is not None else None,
        "metadata": ckpt.metadata,
        "tensors": directory,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(np.array([len(head)], dtype="<u4").tobytes())
        fh.write(head)
        for buf in payloads:
            fh.write(buf)


def _tensor_table(
    header: Any, raw_len: int, body: int, where: str
) -> list[tuple[str, tuple[int, ...], int, int]]:
    """Validated (name, shape, start, nbytes) spans, in file order and non-overlapping."""
    if not isinstance(header, dict):
        raise FormatError(
            f"checkpoint header must be a JSON object, got {type(header).__name__}",
            path=where,
            offset=8,
        )
    entries = header.get("tensors", [])
    if not isinstance(entries, list):
        raise FormatError("checkpoint 'tensors' must be a list", path=where, offset=8)
    spans = []
    cursor = 0
    for i, entry in enumerate(entries):
        try:
            name = str(entry["name"])
            shape = tuple(int(s) for s in entry["shape"])
            offset = int(entry["offset"])
            nbytes = int(entry["nbytes"])
        except (KeyError, TypeError, ValueError) as err:
            raise FormatError(f"malformed tensor entry {i}: {err!r}", path=where, offset=8) from err
        if offset < 0 or nbytes < 0 or any(s < 0 for s in shape):
            raise FormatError(
                f"tensor {name!r} has a negative offset, size or extent", path=where, offset=8
            )
        if offset < cursor:
            raise FormatError(
                f"tensor {name!r} overlaps or precedes the previous tensor",
                path=where,
                offset=body + offset,
            )
        start = body + offset
        if start + nbytes > raw_len:
            raise FormatError(f"truncated payload for tensor {name!r}", path=where, offset=raw_len)
        count = int(np.prod(shape)) if shape else 1
        if count * 4 != nbytes:
            raise FormatError(
                f"tensor {name!r} byte size disagrees with its shape", path=where, offset=start
            )
        spans.append((name, shape, start, nbytes))
        cursor = offset + nbytes
    return spans


def load_checkpoint(path: str | Path) -> Checkpoint:
    """
    Read an LCK1 checkpoint.

    Raises:
        FormatError: Bad magic, unreadable header, malformed tensor table or
            truncated payload.
        ValidationError: Tensor names or shapes inconsistent with the config.
    """
    from lift.model import LiftConfig

    raw = Path(path).read_bytes()
    where = str(path)
    if raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(
            f"bad magic {raw[:4]!r}, expected {CHECKPOINT_MAGIC!r}", path=where, offset=0
        )
    if len(raw) < 8:
        raise FormatError("truncated header length", path=where, offset=len(raw))
    head_len = int(np.frombuffer(raw, dtype="<u4", count=1, offset=4)[0])
    body = 8 + head_len
    if len(raw) < body:
        raise FormatError("truncated JSON header", path=where, offset=len(raw))
    try:
        header = json.loads(raw[8:body].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise FormatError(f"unreadable JSON header: {err}", path=where, offset=8) from err

    tensors: dict[str, np.ndarray] = {}
    for name, shape, start, nbytes in _tensor_table(header, len(raw), body, where):
        values = np.frombuffer(raw, dtype="<f4", count=nbytes // 4, offset=start)
        tensors[name] = values.astype(np.float32).reshape(shape)

    cfg = header.get("config")
    metadata = header.get("metadata", {})
    if (cfg is not None and not isinstance(cfg, dict)) or not isinstance(metadata, dict):
        raise FormatError(
            "checkpoint config and metadata must be JSON objects", path=where, offset=8
        )
    ckpt = Checkpoint(
        config=LiftConfig.from_dict(cfg) if cfg is not None else None,
        tensors=tensors,
        metadata=metadata,
    )
    ckpt.validate()
    return ckpt


def write_rows_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """Write a CSV table with a header row."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(header))
        for row in rows:
            writer.writerow(list(row))


def write_json(path: str | Path, payload: Mapping[str, Any]) -> None:
    """Write JSON with sorted keys and a trailing newline."""
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
