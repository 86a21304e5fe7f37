"""
Chiral benchmark construction.

A chiral group is a triplet (verb⁺, verb⁻, noun group) defining one binary
task: videos whose verb is verb⁺ get label 1, those with verb⁻ label 0,
restricted to the group's nouns. Train/test membership follows the split
of the source annotations.
"""

from __future__ import annotations

import json
import logging
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from lift.errors import FormatError, ValidationError
from lift.featureio import Manifest, ManifestRecord, write_rows_csv

logger = logging.getLogger("lift.chiral")

STATS_COLUMNS = (
    "dataset",
    "groups",
    "train_videos",
    "test_videos",
    "total_videos",
    "mean_videos_per_group",
)


def normalize_term(term: str) -> str:
    """Case-folded, whitespace-trimmed form used for all verb/noun matching."""
    return term.strip().casefold()


@dataclass(frozen=True)
class NounGroup:
    group_name: str
    nouns: tuple[str, ...]


@dataclass(frozen=True)
class AntonymEntry:
    verb_pos: str
    verb_neg: str
    noun_groups: tuple[NounGroup, ...]


@dataclass(frozen=True)
class AntonymConfig:
    """Curated antonym verb pairs, each with its groups of similar nouns."""

    entries: tuple[AntonymEntry, ...]
    dataset: str = "dataset"

    def __post_init__(self) -> None:
        seen: set[tuple[str, str, str]] = set()
        for entry in self.entries:
            pos, neg = normalize_term(entry.verb_pos), normalize_term(entry.verb_neg)
            if not pos or not neg:
                raise ValidationError("verbs must be non-empty", operation="AntonymConfig")
            if pos == neg:
                raise ValidationError(
                    f"self-antonym {entry.verb_pos!r}: verb_pos equals verb_neg",
                    operation="AntonymConfig",
                )
            if not entry.noun_groups:
                raise ValidationError(
                    f"verb pair {entry.verb_pos!r}/{entry.verb_neg!r} has no noun groups",
                    operation="AntonymConfig",
                )
            for group in entry.noun_groups:
                if not group.nouns:
                    raise ValidationError(
                        f"noun group {group.group_name!r} of {entry.verb_pos!r}/"
                        f"{entry.verb_neg!r} has an empty noun list",
                        operation="AntonymConfig",
                    )
                key = (pos, neg, normalize_term(group.group_name))
                if key in seen:
                    raise ValidationError(
                        f"duplicate chiral triplet {entry.verb_pos!r}/{entry.verb_neg!r}"
                        f"[{group.group_name}]",
                        operation="AntonymConfig",
                    )
                seen.add(key)

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset": self.dataset,
            "entries": [
                {
                    "verb_pos": e.verb_pos,
                    "verb_neg": e.verb_neg,
                    "noun_groups": [
                        {"group_name": g.group_name, "nouns": list(g.nouns)}
                        for g in e.noun_groups
                    ],
                }
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, payload: Any) -> AntonymConfig:
        if isinstance(payload, list):
            payload = {"entries": payload}
        if not isinstance(payload, Mapping) or not isinstance(payload.get("entries"), list):
            raise ValidationError("antonym config needs an 'entries' list")
        entries = []
        for i, raw in enumerate(payload["entries"]):
            try:
                groups = tuple(
                    NounGroup(str(g["group_name"]), tuple(str(n) for n in g["nouns"]))
                    for g in raw["noun_groups"]
                )
                entries.append(AntonymEntry(str(raw["verb_pos"]), str(raw["verb_neg"]), groups))
            except (KeyError, TypeError) as err:
                raise ValidationError(f"entry {i} is malformed: missing {err}") from err
        return cls(tuple(entries), dataset=str(payload.get("dataset", "dataset")))


def load_antonym_config(path: str | Path) -> AntonymConfig:
    """
    Read and validate a JSON antonym configuration.

    Raises:
        FormatError: If the file is not JSON.
        ValidationError: Self-antonyms, empty noun lists, duplicate triplets.
    """
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise FormatError(f"invalid JSON: {err.msg}", path=str(path), offset=err.pos) from err
    return AntonymConfig.from_dict(payload)


@dataclass
class ChiralGroup:
    """
    One binary chiral task with its own train/test lists.

    Each list holds (video_id, label) pairs sorted by video_id; label 1
    means ``verb_pos``.
    """

    verb_pos: str
    verb_neg: str
    group_name: str
    train: list[tuple[str, int]] = field(default_factory=list)
    test: list[tuple[str, int]] = field(default_factory=list)
    dataset: str = "dataset"

    @property
    def key(self) -> str:
        return f"{self.verb_pos}/{self.verb_neg}[{self.group_name}]"

    @property
    def slug(self) -> str:
        return re.sub(r"[^a-z0-9]+", "_", self.key.casefold()).strip("_")

    @property
    def num_videos(self) -> int:
        return len(self.train) + len(self.test)

    def labels(self, split: str) -> set[int]:
        return {label for _, label in (self.train if split == "train" else self.test)}

    def to_rows(self) -> list[dict[str, Any]]:
        rows = [{"video_id": v, "label": y, "split": "train"} for v, y in self.train]
        rows += [{"video_id": v, "label": y, "split": "test"} for v, y in self.test]
        return rows

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset": self.dataset,
            "verb_pos": self.verb_pos,
            "verb_neg": self.verb_neg,
            "group_name": self.group_name,
            "file": f"{self.slug}.jsonl",
        }


def build_chiral_groups(
    manifest: Manifest | Iterable[ManifestRecord], config: AntonymConfig
) -> list[ChiralGroup]:
    """
    Assign videos to chiral groups.

    A video joins (v⁺, v⁻, G) when its verb equals v⁺ or v⁻ and its noun is
    one of G's nouns (case-folded, trimmed, no stemming). A video matching
    several entries joins each of them. Groups without both labels in their
    train split are dropped with a logged reason. Output follows config
    order; members are sorted by video_id.
    """
    records = list(manifest)
    groups: list[ChiralGroup] = []
    for entry in config.entries:
        pos, neg = normalize_term(entry.verb_pos), normalize_term(entry.verb_neg)
        for noun_group in entry.noun_groups:
            nouns = {normalize_term(n) for n in noun_group.nouns}
            group = ChiralGroup(
                entry.verb_pos, entry.verb_neg, noun_group.group_name, dataset=config.dataset
            )
            for rec in records:
                if rec.verb is None or rec.noun is None:
                    continue
                verb = normalize_term(rec.verb)
                if verb not in (pos, neg) or normalize_term(rec.noun) not in nouns:
                    continue
                member = (rec.video_id, 1 if verb == pos else 0)
                (group.train if rec.split == "train" else group.test).append(member)
            group.train.sort()
            group.test.sort()
            if group.labels("train") != {0, 1}:
                logger.warning(
                    "dropping chiral group %s: train split has labels %s, need both",
                    group.key,
                    sorted(group.labels("train")),
                )
                continue
            groups.append(group)
    logger.info("built %d chiral groups", len(groups))
    return groups


def group_stats(groups: Sequence[ChiralGroup]) -> list[dict[str, Any]]:
    """
    Per-dataset counts: groups, train/test/total videos, mean videos per group.

    Rows are sorted by dataset name, so group order does not matter.
    """
    per: dict[str, list[ChiralGroup]] = {}
    for group in groups:
        per.setdefault(group.dataset, []).append(group)
    rows = []
    for dataset in sorted(per):
        members = per[dataset]
        train = sum(len(g.train) for g in members)
        test = sum(len(g.test) for g in members)
        rows.append(
            {
                "dataset": dataset,
                "groups": len(members),
                "train_videos": train,
                "test_videos": test,
                "total_videos": train + test,
                "mean_videos_per_group": (train + test) / len(members),
            }
        )
    return rows


def write_groups(groups: Sequence[ChiralGroup], out_dir: str | Path) -> list[Path]:
    """
    Write one ``<slug>.jsonl`` per group, ``groups.json`` and ``stats.csv``.

    Returns:
        Paths of the per-group files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for group in groups:
        path = out / f"{group.slug}.jsonl"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for row in group.to_rows():
                fh.write(json.dumps(row) + "\n")
        paths.append(path)
    index = {"groups": [g.to_dict() for g in groups]}
    (out / "groups.json").write_text(json.dumps(index, indent=2) + "\n", encoding="utf-8")
    write_rows_csv(
        out / "stats.csv",
        STATS_COLUMNS,
        ([row[c] for c in STATS_COLUMNS] for row in group_stats(groups)),
    )
    return paths


def load_groups(out_dir: str | Path) -> list[ChiralGroup]:
    """
    Read groups back from a directory written by ``write_groups``.

    Raises:
        FormatError: ``groups.json`` is not a readable group index.
        ValidationError: A member line is malformed (carries the line number).
    """
    out = Path(out_dir)
    index_path = out / "groups.json"
    try:
        index = json.loads(index_path.read_text(encoding="utf-8"))
        metas = [
            (m["verb_pos"], m["verb_neg"], m["group_name"], m["dataset"], m["file"])
            for m in index["groups"]
        ]
    except (json.JSONDecodeError, KeyError, TypeError) as err:
        raise FormatError(f"unreadable group index: {err!r}", path=str(index_path)) from err
    groups = []
    for verb_pos, verb_neg, group_name, dataset, file in metas:
        group = ChiralGroup(verb_pos, verb_neg, group_name, dataset=dataset)
        with open(out / file, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                if not raw.strip():
                    continue
                try:
                    row = json.loads(raw)
                    member = (str(row["video_id"]), int(row["label"]))
                    split = row["split"]
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
                    raise ValidationError(
                        f"malformed group line in {file}: {err!r}", line=lineno
                    ) from err
                (group.train if split == "train" else group.test).append(member)
        groups.append(group)
    return groups
