"""
Tests for lift.featureio: feature files, manifests, resampling, checkpoints.
"""

import json

import numpy as np
import pytest

from lift.errors import DimensionError, FormatError, NonFiniteError, ValidationError
from lift.featureio import (
    FEATURE_HEADER_BYTES,
    Checkpoint,
    FeatureSequence,
    ManifestRecord,
    decode_feature_bytes,
    encode_feature_bytes,
    load_checkpoint,
    load_manifest,
    read_descriptor_table,
    read_feature_file,
    read_feature_header,
    resample_frames,
    resample_indices,
    save_checkpoint,
    write_dataset,
    write_descriptor_table,
    write_feature_file,
    write_manifest,
)
from lift.model import LiftConfig, LiftParams, encode, init_params


def _write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")


class TestFeatureSequence:
    """Tests for the FeatureSequence value type."""

    def test_frames_are_read_only_float32(self):
        seq = FeatureSequence("v", np.ones((2, 3), dtype=np.float64))
        assert seq.frames.dtype == np.float32
        assert (seq.num_frames, seq.dim) == (2, 3)
        with pytest.raises(ValueError):
            seq.frames[0, 0] = 2.0

    def test_rejects_empty(self):
        with pytest.raises(ValidationError):
            FeatureSequence("v", np.zeros((0, 3)))

    def test_rejects_vector(self):
        with pytest.raises(ValidationError):
            FeatureSequence("v", np.zeros(3))

    def test_rejects_non_finite(self):
        with pytest.raises(NonFiniteError):
            FeatureSequence("v", np.array([[1.0, np.nan]]))

    def test_rejects_unknown_split(self):
        with pytest.raises(ValidationError, match="split"):
            FeatureSequence("v", np.ones((1, 1)), split="val")


class TestFeatureFile:
    """Tests for the LFT1 feature file."""

    def test_zero_sequence_layout(self, tmp_path):
        seq = FeatureSequence("zeros", np.zeros((2, 3)))
        path = tmp_path / "zeros.lft"
        write_feature_file(seq, path)
        raw = path.read_bytes()
        assert len(raw) == 16 + 24
        assert raw[:4] == b"LFT1"
        back = read_feature_file(path)
        assert back.video_id == "zeros"
        assert back.frames.tobytes() == seq.frames.tobytes()

    def test_random_round_trip_bit_exact(self, tmp_path, rng):
        seq = FeatureSequence("r", rng.normal(size=(16, 384)))
        path = tmp_path / "r.lft"
        write_feature_file(seq, path)
        assert read_feature_file(path).frames.tobytes() == seq.frames.tobytes()
        assert read_feature_header(path) == (16, 384)

    @pytest.mark.parametrize("shape", [(1, 1), (3, 7), (31, 2)])
    def test_bytes_round_trip(self, rng, shape):
        frames = rng.normal(size=shape).astype(np.float32)
        np.testing.assert_array_equal(decode_feature_bytes(encode_feature_bytes(frames)), frames)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.lft"
        path.write_bytes(b"XXXX" + bytes(12))
        with pytest.raises(FormatError) as exc_info:
            read_feature_file(path)
        assert exc_info.value.offset == 0
        assert "offset 0" in str(exc_info.value)

    def test_unknown_version(self):
        raw = bytearray(encode_feature_bytes(np.zeros((1, 1), dtype=np.float32)))
        raw[4] = 2
        with pytest.raises(FormatError, match="version") as exc_info:
            decode_feature_bytes(bytes(raw))
        assert exc_info.value.offset == 4

    def test_truncated_payload(self):
        raw = encode_feature_bytes(np.zeros((2, 2), dtype=np.float32))
        with pytest.raises(FormatError, match="truncated") as exc_info:
            decode_feature_bytes(raw[:-3])
        assert exc_info.value.offset == len(raw) - 3

    def test_truncated_header(self):
        with pytest.raises(FormatError, match="header"):
            decode_feature_bytes(b"LFT1" + bytes(4))

    def test_trailing_bytes(self):
        raw = encode_feature_bytes(np.zeros((1, 2), dtype=np.float32))
        with pytest.raises(FormatError, match="trailing") as exc_info:
            decode_feature_bytes(raw + b"\x00")
        assert exc_info.value.offset == FEATURE_HEADER_BYTES + 8

    def test_randomized_round_trips(self, tmp_path):
        """Random shapes and magnitudes survive a file round trip bit for bit."""
        rng = np.random.default_rng(2024)
        for i in range(1000):
            t, d = (int(v) for v in rng.integers(1, 33, size=2))
            scale = 10.0 ** rng.uniform(-6, 6)
            frames = (rng.normal(size=(t, d)) * scale).astype(np.float32)
            path = tmp_path / f"{i}.lft"
            write_feature_file(FeatureSequence(str(i), frames), path)
            back = read_feature_file(path)
            assert back.frames.shape == (t, d)
            assert back.frames.tobytes() == frames.tobytes()

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_non_finite_payload_rejected(self, tmp_path, bad):
        rng = np.random.default_rng(7)
        for i in range(20):
            t, d = (int(v) for v in rng.integers(1, 9, size=2))
            frames = rng.normal(size=(t, d)).astype(np.float32)
            frames[rng.integers(t), rng.integers(d)] = bad
            path = tmp_path / f"{i}.lft"
            path.write_bytes(encode_feature_bytes(frames))
            with pytest.raises(NonFiniteError):
                read_feature_file(path)


class TestResample:
    """Tests for resample_indices and resample_frames."""

    def test_identity(self):
        assert resample_indices(16, 16) == list(range(16))

    def test_downsample(self):
        assert resample_indices(31, 16) == list(range(0, 31, 2))

    def test_upsample_single_frame(self):
        frames = np.array([[1.0, 2.0]])
        out = resample_frames(frames, 4)
        np.testing.assert_array_equal(out, np.tile(frames, (4, 1)))

    def test_single_target_takes_middle(self):
        assert resample_indices(5, 1) == [2]
        assert resample_indices(4, 1) == [1]

    @pytest.mark.parametrize("raw,count", [(2, 5), (7, 3), (100, 16), (16, 31)])
    def test_monotone_and_covers_endpoints(self, raw, count):
        idx = resample_indices(raw, count)
        assert len(idx) == count
        assert idx[0] == 0 and idx[-1] == raw - 1
        assert all(a <= b for a, b in zip(idx, idx[1:]))

    def test_output_is_a_copy(self, make_sequence):
        seq = make_sequence(frames=4, dim=3)
        out = resample_frames(seq, 4)
        out[0, 0] = 99.0
        assert seq.frames[0, 0] != 99.0

    def test_invalid_count(self):
        with pytest.raises(ValidationError):
            resample_indices(4, 0)


class TestManifest:
    """Tests for manifest parsing and validation."""

    def test_empty_file(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text("", encoding="utf-8")
        assert len(load_manifest(path)) == 0

    def test_records_in_input_order(self, tmp_path, make_sequence):
        seqs = [make_sequence(video_id=v, verb="open", noun="door") for v in ("b", "a", "c")]
        manifest = load_manifest(write_dataset(seqs, tmp_path))
        assert manifest.ids == ["b", "a", "c"]
        assert manifest.get("a").verb == "open"
        back = manifest.read("c")
        assert back.frames.tobytes() == seqs[2].frames.tobytes()
        assert back.noun == "door"

    def test_duplicate_id(self, tmp_path):
        row = {"video_id": "v1", "path": "a.lft", "frames": 1, "dim": 1}
        path = tmp_path / "m.jsonl"
        _write_jsonl(path, [row, dict(row, path="b.lft")])
        with pytest.raises(ValidationError, match="v1"):
            load_manifest(path)

    def test_malformed_line_number(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text(
            '{"video_id": "a", "path": "a.lft", "frames": 1, "dim": 1}\n{not json\n',
            encoding="utf-8",
        )
        with pytest.raises(ValidationError) as exc_info:
            load_manifest(path)
        assert exc_info.value.line == 2

    def test_missing_keys(self, tmp_path):
        path = tmp_path / "m.jsonl"
        _write_jsonl(path, [{"video_id": "a"}])
        with pytest.raises(ValidationError, match="misses keys"):
            load_manifest(path)

    def test_header_checked_lazily(self, tmp_path, make_sequence):
        """A wrong frame count is only reported when the file is read."""
        seq = make_sequence(video_id="x", frames=3, dim=2)
        write_feature_file(seq, tmp_path / "x.lft")
        path = tmp_path / "m.jsonl"
        write_manifest(path, [ManifestRecord("x", "x.lft", frames=5, dim=2)])
        manifest = load_manifest(path)
        assert len(manifest) == 1
        with pytest.raises(ValidationError, match="header"):
            manifest.read("x")

    def test_missing_file(self, tmp_path):
        path = tmp_path / "m.jsonl"
        write_manifest(path, [ManifestRecord("x", "nowhere.lft", frames=1, dim=1)])
        with pytest.raises(ValidationError, match="does not exist"):
            load_manifest(path).validate_files()

    def test_split_and_subset(self, tmp_path, make_sequence):
        seqs = [
            make_sequence(video_id="a", split="train"),
            make_sequence(video_id="b", split="test"),
            make_sequence(video_id="c", split="train"),
        ]
        manifest = load_manifest(write_dataset(seqs, tmp_path))
        assert manifest.split("train").ids == ["a", "c"]
        assert manifest.subset(["c", "b"]).ids == ["b", "c"]
        assert "b" in manifest and "z" not in manifest


class TestDescriptorTable:
    """Tests for descriptor table export."""

    def test_binary(self, tmp_path, rng):
        matrix = rng.normal(size=(3, 4)).astype(np.float32)
        paths = write_descriptor_table(tmp_path / "desc.lft", ["a", "b", "c"], matrix)
        assert [p.name for p in paths] == ["desc.lft", "desc.index.csv"]
        table = read_descriptor_table(tmp_path / "desc.lft")
        np.testing.assert_array_equal(table["b"], matrix[1])

    def test_csv(self, tmp_path, rng):
        matrix = rng.normal(size=(2, 3)).astype(np.float32)
        write_descriptor_table(tmp_path / "desc.csv", ["a", "b"], matrix, fmt="csv")
        table = read_descriptor_table(tmp_path / "desc.csv")
        np.testing.assert_array_equal(table["a"], matrix[0])

    def test_row_count_mismatch(self, tmp_path):
        with pytest.raises(ValidationError):
            write_descriptor_table(tmp_path / "d.lft", ["a"], np.zeros((2, 3)))


class TestCheckpoint:
    """Tests for checkpoint serialization."""

    @pytest.fixture
    def small_config(self):
        return LiftConfig(D=8, d=32, layers=1, heads=4, ffn_mult=2, T=4)

    def test_round_trip_preserves_forward(self, tmp_path, rng, small_config):
        params = init_params(small_config, seed=5)
        path = tmp_path / "model.lck"
        save_checkpoint(params.to_checkpoint({"epoch": 3}), path)
        loaded = LiftParams.from_checkpoint(load_checkpoint(path))
        for name, value in params.tensors.items():
            assert loaded.tensors[name].tobytes() == value.tobytes()
        frames = rng.normal(size=(4, 8)).astype(np.float32)
        a, b = encode(params, frames), encode(loaded, frames)
        assert a.vector().tobytes() == b.vector().tobytes()
        assert loaded.metadata["epoch"] == 3

    def test_standardization_round_trip(self, tmp_path, small_config):
        params = init_params(small_config, seed=0)
        params.standardization = (np.full(8, 0.5, np.float32), np.full(8, 2.0, np.float32))
        path = tmp_path / "model.lck"
        save_checkpoint(params.to_checkpoint(), path)
        loaded = LiftParams.from_checkpoint(load_checkpoint(path))
        np.testing.assert_array_equal(loaded.standardization[1], np.full(8, 2.0))
        assert "standardization" not in loaded.metadata

    def test_missing_tensor_named(self, tmp_path, monkeypatch, small_config):
        tensors = dict(init_params(small_config, seed=0).tensors)
        del tensors["decoder.out.bias"]
        ckpt = Checkpoint(small_config, tensors)
        with pytest.raises(ValidationError, match="decoder.out.bias"):
            save_checkpoint(ckpt, tmp_path / "a.lck")

        monkeypatch.setattr(Checkpoint, "validate", lambda self: None)
        save_checkpoint(ckpt, tmp_path / "a.lck")
        monkeypatch.undo()
        with pytest.raises(ValidationError, match="decoder.out.bias"):
            load_checkpoint(tmp_path / "a.lck")

    def test_wrong_shape(self, small_config):
        tensors = dict(init_params(small_config, seed=0).tensors)
        tensors["proj.bias"] = np.zeros(3, dtype=np.float32)
        with pytest.raises(ValidationError) as exc_info:
            Checkpoint(small_config, tensors).validate()
        assert exc_info.value.expected == (32,)

    def test_unknown_tensor(self, small_config):
        tensors = dict(init_params(small_config, seed=0).tensors)
        tensors["extra"] = np.zeros(1, dtype=np.float32)
        with pytest.raises(ValidationError, match="unknown tensor"):
            Checkpoint(small_config, tensors).validate()

    def test_empty_bundle(self, tmp_path):
        path = tmp_path / "empty.lck"
        save_checkpoint(Checkpoint(None, {}, {"note": "empty"}), path)
        back = load_checkpoint(path)
        assert back.config is None
        assert back.tensors == {}
        assert back.metadata == {"note": "empty"}

    def test_truncated_payload(self, tmp_path, small_config):
        path = tmp_path / "t.lck"
        save_checkpoint(init_params(small_config, seed=0).to_checkpoint(), path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-10])
        with pytest.raises(FormatError, match="truncated"):
            load_checkpoint(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.lck"
        path.write_bytes(b"NOPE" + bytes(8))
        with pytest.raises(FormatError) as exc_info:
            load_checkpoint(path)
        assert exc_info.value.offset == 0

    def test_encode_rejects_wrong_width(self, small_config):
        params = init_params(small_config, seed=0)
        with pytest.raises(DimensionError):
            encode(params, np.zeros((4, 9), dtype=np.float32))

    def test_randomized_configs_round_trip(self, tmp_path):
        """Checkpoints of random architectures reload bit for bit."""
        rng = np.random.default_rng(11)
        for i in range(20):
            heads = int(rng.integers(1, 3))
            config = LiftConfig(
                D=int(rng.integers(1, 7)),
                d=heads * int(rng.integers(1, 5)),
                layers=int(rng.integers(1, 3)),
                heads=heads,
                ffn_mult=int(rng.integers(1, 4)),
                T=int(rng.integers(1, 6)),
                lambda_orth=float(rng.uniform(0.0, 1.0)),
            )
            params = init_params(config, seed=i)
            path = tmp_path / f"{i}.lck"
            save_checkpoint(params.to_checkpoint({"seed": i}), path)
            back = load_checkpoint(path)
            assert back.config == config
            assert back.metadata["seed"] == i
            assert set(back.tensors) == set(params.tensors)
            for name, value in params.tensors.items():
                assert back.tensors[name].tobytes() == value.tobytes()


def _raw_checkpoint(path, header, payload=bytes(8)):
    head = json.dumps(header).encode("utf-8")
    path.write_bytes(b"LCK1" + np.array([len(head)], dtype="<u4").tobytes() + head + payload)
    return path


class TestCheckpointTable:
    """Tests for rejecting malformed tensor tables."""

    @pytest.mark.parametrize(
        "entry",
        [
            {"name": "w", "shape": [2], "nbytes": 8},
            {"shape": [2], "offset": 0, "nbytes": 8},
            {"name": "w", "shape": 2, "offset": 0, "nbytes": 8},
            {"name": "w", "shape": [2], "offset": "zero", "nbytes": 8},
            "w",
        ],
    )
    def test_malformed_entry(self, tmp_path, entry):
        path = _raw_checkpoint(tmp_path / "c.lck", {"config": None, "tensors": [entry]})
        with pytest.raises(FormatError, match="malformed tensor entry 0") as exc_info:
            load_checkpoint(path)
        assert exc_info.value.offset == 8

    @pytest.mark.parametrize("header", [[], "tensors", 3])
    def test_header_not_an_object(self, tmp_path, header):
        path = _raw_checkpoint(tmp_path / "c.lck", header)
        with pytest.raises(FormatError, match="JSON object"):
            load_checkpoint(path)

    def test_tensor_list_required(self, tmp_path):
        path = _raw_checkpoint(tmp_path / "c.lck", {"tensors": {"w": 0}})
        with pytest.raises(FormatError, match="must be a list"):
            load_checkpoint(path)

    @pytest.mark.parametrize(
        "entry",
        [
            {"name": "w", "shape": [1], "offset": -4, "nbytes": 4},
            {"name": "w", "shape": [0], "offset": 0, "nbytes": -4},
            {"name": "w", "shape": [-1], "offset": 0, "nbytes": 4},
        ],
    )
    def test_negative_fields(self, tmp_path, entry):
        path = _raw_checkpoint(tmp_path / "c.lck", {"tensors": [entry]})
        with pytest.raises(FormatError, match="negative"):
            load_checkpoint(path)

    def test_overlapping_spans(self, tmp_path):
        tensors = [
            {"name": "a", "shape": [2], "offset": 0, "nbytes": 8},
            {"name": "b", "shape": [1], "offset": 4, "nbytes": 4},
        ]
        path = _raw_checkpoint(tmp_path / "c.lck", {"tensors": tensors})
        with pytest.raises(FormatError, match="overlaps"):
            load_checkpoint(path)

    def test_out_of_order_spans(self, tmp_path):
        tensors = [
            {"name": "a", "shape": [1], "offset": 4, "nbytes": 4},
            {"name": "b", "shape": [1], "offset": 0, "nbytes": 4},
        ]
        path = _raw_checkpoint(tmp_path / "c.lck", {"tensors": tensors})
        with pytest.raises(FormatError, match="precedes"):
            load_checkpoint(path)

    def test_adjacent_spans_load(self, tmp_path):
        tensors = [
            {"name": "a", "shape": [1], "offset": 0, "nbytes": 4},
            {"name": "b", "shape": [1], "offset": 4, "nbytes": 4},
        ]
        payload = np.array([1.5, -2.0], dtype="<f4").tobytes()
        path = _raw_checkpoint(tmp_path / "c.lck", {"tensors": tensors}, payload)
        back = load_checkpoint(path)
        assert back.tensors["a"].tolist() == [1.5]
        assert back.tensors["b"].tolist() == [-2.0]

    def test_metadata_must_be_object(self, tmp_path):
        path = _raw_checkpoint(tmp_path / "c.lck", {"tensors": [], "metadata": [1]})
        with pytest.raises(FormatError, match="metadata"):
            load_checkpoint(path)
