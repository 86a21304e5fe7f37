"""
lift: linearized feature trajectories for time-aware video descriptors.

Basic usage:
    from lift import LiftConfig, LiftParams, SynthSpec, TrainConfig
    from lift import encode, gen_synth_dataset, train

    data = gen_synth_dataset(SynthSpec(n_videos=400, seed=0))
    ckpt, log = train(data.sequences, LiftConfig(D=64, d=32, T=16), TrainConfig(epochs=50))
    model = LiftParams.from_checkpoint(ckpt)
    desc = encode(model, data.sequences[0].frames)

Chiral benchmark:
    from lift import PoolingSpec, build_chiral_groups, evaluate_chiral

    groups = build_chiral_groups(manifest, load_antonym_config("antonyms.json"))
    report = evaluate_chiral(groups, manifest, PoolingSpec("lift_descriptor"), model=model)
    report.average

Shape contracts (see ``lift.contracts``):
    from lift.contracts import T, D, expects

    @expects(frames=(T, D))
    def summarize(frames): ...
"""

__version__ = "0.1.0"

from lift.chiral import (  # noqa: E402
    AntonymConfig,
    ChiralGroup,
    build_chiral_groups,
    group_stats,
    load_antonym_config,
)
from lift.config import config  # noqa: E402
from lift.contracts import check_shape, ensures, expects  # noqa: E402
from lift.core import Batch, Dim, UnificationContext  # noqa: E402
from lift.errors import (  # noqa: E402
    ConfigError,
    DimensionError,
    FormatError,
    LiftError,
    NonFiniteError,
    ProbeError,
    ValidationError,
)
from lift.featureio import (  # noqa: E402
    Checkpoint,
    FeatureSequence,
    Manifest,
    load_checkpoint,
    load_manifest,
    save_checkpoint,
)
from lift.model import (  # noqa: E402
    Descriptor,
    LiftConfig,
    LiftParams,
    count_params,
    decode_at,
    encode,
    encode_batch,
    forward_reconstruct,
    init_params,
)
from lift.pooling import PoolingSpec, concat_descriptors, pool_descriptor  # noqa: E402
from lift.probes import (  # noqa: E402
    ProbeReport,
    ProbeSpec,
    evaluate_chiral,
    evaluate_standard,
    train_attentive_probe,
    train_linear_probe,
    train_mlp_probe,
)
from lift.synth import (  # noqa: E402
    SynthSpec,
    gen_synth_dataset,
    project_2d,
    time_variance,
)
from lift.tensor import GradTape, Tensor  # noqa: E402
from lift.training import TrainConfig, train  # noqa: E402

__all__ = [
    # Tensors and gradients
    "Tensor",
    "GradTape",
    # Data
    "FeatureSequence",
    "Manifest",
    "load_manifest",
    "Checkpoint",
    "load_checkpoint",
    "save_checkpoint",
    # Model
    "LiftConfig",
    "LiftParams",
    "Descriptor",
    "init_params",
    "count_params",
    "encode",
    "encode_batch",
    "decode_at",
    "forward_reconstruct",
    # Training
    "TrainConfig",
    "train",
    # Chiral benchmark
    "AntonymConfig",
    "ChiralGroup",
    "load_antonym_config",
    "build_chiral_groups",
    "group_stats",
    # Probes
    "PoolingSpec",
    "pool_descriptor",
    "concat_descriptors",
    "ProbeSpec",
    "ProbeReport",
    "train_linear_probe",
    "train_mlp_probe",
    "train_attentive_probe",
    "evaluate_chiral",
    "evaluate_standard",
    # Synthetic lab
    "SynthSpec",
    "gen_synth_dataset",
    "time_variance",
    "project_2d",
    # Shape contracts
    "Dim",
    "Batch",
    "UnificationContext",
    "expects",
    "ensures",
    "check_shape",
    # Configuration
    "config",
    # Errors
    "LiftError",
    "DimensionError",
    "ConfigError",
    "ValidationError",
    "FormatError",
    "NonFiniteError",
    "ProbeError",
]
