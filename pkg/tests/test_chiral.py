"""
Tests for lift.chiral: antonym configs, group construction and stats.
"""

import csv
import json
import logging
from pathlib import Path

import pytest

from lift.chiral import (
    AntonymConfig,
    AntonymEntry,
    ChiralGroup,
    NounGroup,
    build_chiral_groups,
    group_stats,
    load_antonym_config,
    load_groups,
    normalize_term,
    write_groups,
)
from lift.errors import FormatError, ValidationError
from lift.featureio import ManifestRecord, load_manifest

DATA = Path(__file__).parent / "data"


@pytest.fixture
def toy_manifest():
    return load_manifest(DATA / "toy_annotations.jsonl")


@pytest.fixture
def toy_config():
    return load_antonym_config(DATA / "toy_antonyms.json")


def _entry(pos, neg, *groups):
    return AntonymEntry(pos, neg, tuple(NounGroup(name, tuple(nouns)) for name, nouns in groups))


def _record(video_id, verb, noun, split="train"):
    return ManifestRecord(video_id, f"{video_id}.lft", 1, 1, verb=verb, noun=noun, split=split)


class TestAntonymConfig:
    """Tests for loading and validating antonym configs."""

    def test_single_entry(self, tmp_path):
        path = tmp_path / "a.json"
        path.write_text(
            json.dumps(
                [
                    {
                        "verb_pos": "opening",
                        "verb_neg": "closing",
                        "noun_groups": [
                            {"group_name": "doors", "nouns": ["door", "cupboard", "drawer"]}
                        ],
                    }
                ]
            ),
            encoding="utf-8",
        )
        config = load_antonym_config(path)
        assert len(config.entries) == 1
        assert len(config.entries[0].noun_groups) == 1
        assert config.entries[0].noun_groups[0].nouns == ("door", "cupboard", "drawer")

    def test_self_antonym(self):
        with pytest.raises(ValidationError, match="self-antonym"):
            AntonymConfig((_entry("fold", "fold", ("paper", ["paper"])),))

    def test_self_antonym_after_case_folding(self):
        with pytest.raises(ValidationError, match="self-antonym"):
            AntonymConfig((_entry("Fold", " fold ", ("paper", ["paper"])),))

    def test_empty_noun_list(self):
        with pytest.raises(ValidationError, match="empty noun list"):
            AntonymConfig((_entry("open", "close", ("doors", [])),))

    def test_no_noun_groups(self):
        with pytest.raises(ValidationError, match="no noun groups"):
            AntonymConfig((AntonymEntry("open", "close", ()),))

    def test_duplicate_triplet(self):
        entries = (
            _entry("open", "close", ("doors", ["door"])),
            _entry("Open", "close", ("DOORS", ["drawer"])),
        )
        with pytest.raises(ValidationError, match="duplicate"):
            AntonymConfig(entries)

    def test_same_pair_different_groups_allowed(self):
        config = AntonymConfig((_entry("open", "close", ("doors", ["door"]), ("jars", ["jar"])),))
        assert len(config.entries[0].noun_groups) == 2

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"entries": [', encoding="utf-8")
        with pytest.raises(FormatError) as exc_info:
            load_antonym_config(path)
        assert exc_info.value.path == str(path)

    def test_malformed_entry(self):
        with pytest.raises(ValidationError, match="entry 0"):
            AntonymConfig.from_dict({"entries": [{"verb_pos": "a"}]})

    def test_dict_round_trip(self, toy_config):
        assert AntonymConfig.from_dict(toy_config.to_dict()) == toy_config
        assert toy_config.dataset == "toy"

    def test_normalize_term(self):
        assert normalize_term("  Opening ") == "opening"


class TestBuildChiralGroups:
    """Tests for build_chiral_groups."""

    def test_toy_fixture(self, toy_manifest, toy_config):
        groups = build_chiral_groups(toy_manifest, toy_config)
        assert [g.key for g in groups] == ["opening/closing[doors]"]
        group = groups[0]
        assert group.train == [("t01", 1), ("t02", 0), ("t03", 1), ("t04", 0)]
        assert group.test == [("t05", 1), ("t06", 0), ("t07", 1), ("t08", 0)]
        assert group.dataset == "toy"

    def test_unlisted_noun_excluded(self, toy_manifest, toy_config):
        members = {v for g in build_chiral_groups(toy_manifest, toy_config) for v, _ in g.train}
        assert "t09" not in members

    def test_single_class_group_dropped(self, toy_manifest, toy_config, caplog):
        with caplog.at_level(logging.WARNING, logger="lift.chiral"):
            groups = build_chiral_groups(toy_manifest, toy_config)
        assert all(g.group_name != "paper" for g in groups)
        assert "folding/unfolding[paper]" in caplog.text

    def test_order_independent(self, toy_manifest, toy_config):
        forward = build_chiral_groups(toy_manifest, toy_config)
        backward = build_chiral_groups(list(reversed(toy_manifest.records)), toy_config)
        assert [(g.train, g.test) for g in forward] == [(g.train, g.test) for g in backward]

    def test_members_satisfy_predicate(self, toy_manifest, toy_config):
        groups = build_chiral_groups(toy_manifest, toy_config)
        entry = toy_config.entries[0]
        nouns = set(entry.noun_groups[0].nouns)
        for vid, label in groups[0].train + groups[0].test:
            rec = toy_manifest.get(vid)
            expected = entry.verb_pos if label == 1 else entry.verb_neg
            assert normalize_term(rec.verb) == expected
            assert normalize_term(rec.noun) in nouns

    def test_splits_disjoint(self, toy_manifest, toy_config):
        group = build_chiral_groups(toy_manifest, toy_config)[0]
        assert not {v for v, _ in group.train} & {v for v, _ in group.test}

    def test_video_joins_every_matching_group(self):
        records = [
            _record("a", "open", "jar"),
            _record("b", "close", "jar"),
        ]
        config = AntonymConfig(
            (_entry("open", "close", ("containers", ["jar"]), ("glass", ["jar", "bottle"])),)
        )
        groups = build_chiral_groups(records, config)
        assert [g.group_name for g in groups] == ["containers", "glass"]
        assert groups[0].train == groups[1].train

    def test_records_without_labels_ignored(self):
        records = [
            _record("a", None, "jar"), _record("b", "open", "jar"), _record("c", "close", "jar")
        ]
        config = AntonymConfig((_entry("open", "close", ("g", ["jar"])),))
        groups = build_chiral_groups(records, config)
        assert groups[0].train == [("b", 1), ("c", 0)]

    def test_empty_result(self):
        config = AntonymConfig((_entry("open", "close", ("g", ["jar"])),))
        assert build_chiral_groups([], config) == []


class TestGroupStats:
    """Tests for group_stats."""

    def test_empty(self):
        assert group_stats([]) == []

    def test_toy_totals(self, toy_manifest, toy_config):
        (row,) = group_stats(build_chiral_groups(toy_manifest, toy_config))
        assert row == {
            "dataset": "toy",
            "groups": 1,
            "train_videos": 4,
            "test_videos": 4,
            "total_videos": 8,
            "mean_videos_per_group": 8.0,
        }

    def test_permutation_invariant(self):
        groups = [
            ChiralGroup("a", "b", "g1", train=[("1", 0), ("2", 1)], test=[("3", 1)]),
            ChiralGroup("c", "d", "g2", train=[("4", 0), ("5", 1)]),
            ChiralGroup("e", "f", "g3", train=[("6", 0), ("7", 1)], dataset="other"),
        ]
        assert group_stats(groups) == group_stats(groups[::-1])
        assert [r["dataset"] for r in group_stats(groups)] == ["dataset", "other"]


class TestWriteGroups:
    """Tests for the on-disk group files."""

    def test_matches_golden(self, tmp_path, toy_manifest, toy_config):
        groups = build_chiral_groups(toy_manifest, toy_config)
        paths = write_groups(groups, tmp_path)
        assert [p.name for p in paths] == ["opening_closing_doors.jsonl"]
        for name in ("opening_closing_doors.jsonl", "groups.json"):
            assert (tmp_path / name).read_bytes() == (DATA / "golden" / name).read_bytes()

    def test_stats_csv(self, tmp_path, toy_manifest, toy_config):
        write_groups(build_chiral_groups(toy_manifest, toy_config), tmp_path)
        with open(tmp_path / "stats.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows == [
            {
                "dataset": "toy",
                "groups": "1",
                "train_videos": "4",
                "test_videos": "4",
                "total_videos": "8",
                "mean_videos_per_group": "8.0",
            }
        ]

    def test_round_trip(self, tmp_path, toy_manifest, toy_config):
        groups = build_chiral_groups(toy_manifest, toy_config)
        write_groups(groups, tmp_path)
        back = load_groups(tmp_path)
        assert [(g.key, g.train, g.test, g.dataset) for g in back] == [
            (g.key, g.train, g.test, g.dataset) for g in groups
        ]

    @pytest.mark.parametrize(
        "index",
        ['{"groups": [{"verb_pos": "a"}]}', "[1, 2]", '{"other": []}', "{broken"],
    )
    def test_unreadable_index(self, tmp_path, index):
        (tmp_path / "groups.json").write_text(index)
        with pytest.raises(FormatError, match="group index"):
            load_groups(tmp_path)

    @pytest.mark.parametrize(
        "line",
        [
            '{"video_id": "t1", "split": "train"}',
            '{"video_id": "t1", "label": "x", "split": "test"}',
        ],
    )
    def test_malformed_member_line(self, tmp_path, toy_manifest, toy_config, line):
        groups = build_chiral_groups(toy_manifest, toy_config)
        (path,) = write_groups(groups, tmp_path)
        path.write_text(path.read_text() + line + "\n")
        with pytest.raises(ValidationError) as exc_info:
            load_groups(tmp_path)
        assert exc_info.value.line == 9

    def test_slug(self):
        group = ChiralGroup("Put Down", "pick-up", "Small items")
        assert group.slug == "put_down_pick_up_small_items"
