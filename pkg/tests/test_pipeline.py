"""
End-to-end runs on the default synthetic chiral suite.

These train full models and take minutes; deselect with ``-m "not slow"``.
"""

from dataclasses import replace

import numpy as np
import pytest

from lift.chiral import build_chiral_groups
from lift.featureio import load_manifest, resample_frames, resample_indices
from lift.model import LiftConfig, LiftParams
from lift.pooling import PoolingSpec
from lift.probes import ProbeSpec, evaluate_chiral
from lift.synth import SynthSpec, gen_synth_dataset
from lift.training import TrainConfig, token_cosines, train

pytestmark = pytest.mark.slow

MODEL = LiftConfig(D=64, d=32, T=16)
SETTINGS = TrainConfig(epochs=200, batch_size=128, seed=0)


@pytest.fixture(scope="module")
def suite(tmp_path_factory):
    data = gen_synth_dataset(SynthSpec(seed=0))
    manifest = load_manifest(data.write(tmp_path_factory.mktemp("suite")))
    groups = build_chiral_groups(manifest, data.antonym_config())
    return data, manifest, groups


@pytest.fixture(scope="module")
def trained(suite):
    data, _, _ = suite
    train_videos = [s for s in data.sequences if s.split == "train"]
    models = {}
    for lam in (0.0, 0.1):
        ckpt, _ = train(train_videos, replace(MODEL, lambda_orth=lam), SETTINGS)
        models[lam] = LiftParams.from_checkpoint(ckpt)
    return models


def _accuracy(suite, pooling, model=None):
    _, manifest, groups = suite
    report = evaluate_chiral(groups, manifest, pooling, ProbeSpec.chiral(seed=0), model=model)
    assert not report.skipped
    return report.average


class TestSyntheticChiral:
    """Time-sensitive descriptors separate mirrored actions; the mean cannot."""

    def test_learned_descriptor(self, suite, trained):
        assert _accuracy(suite, PoolingSpec("lift_descriptor"), trained[0.1]) >= 0.95

    def test_mean_pooling_at_chance(self, suite):
        assert _accuracy(suite, PoolingSpec("mean")) <= 0.60

    def test_concatenation_beats_mean(self, suite):
        mean = _accuracy(suite, PoolingSpec("mean"))
        assert _accuracy(suite, PoolingSpec("full_concat")) >= mean + 0.15

    def test_more_frames_never_hurt(self, suite):
        """k-frame concatenation accuracy is non-decreasing in k, within 2%."""
        accs = []
        for k in (1, 2, 4, 8, 16):
            indices = [i + 1 for i in resample_indices(16, k)]
            accs.append(_accuracy(suite, PoolingSpec.k_frame_concat(indices)))
        for before, after in zip(accs, accs[1:]):
            assert after >= before - 0.02


class TestOrthogonality:
    """The orthogonality term decorrelates the two tokens without costing accuracy."""

    def test_tokens_less_aligned(self, suite, trained):
        data, _, _ = suite
        stack = np.stack([resample_frames(s, 16) for s in data.sequences])
        with_term = np.mean(np.abs(token_cosines(trained[0.1], stack)))
        without = np.mean(np.abs(token_cosines(trained[0.0], stack)))
        assert with_term < without

    def test_accuracy_kept(self, suite, trained):
        with_term = _accuracy(suite, PoolingSpec("lift_descriptor"), trained[0.1])
        without = _accuracy(suite, PoolingSpec("lift_descriptor"), trained[0.0])
        assert with_term >= without - 0.01
