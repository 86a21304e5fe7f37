"""
Command-line entry point.

Every subcommand writes a ``run.<subcommand>.json`` next to its outputs
recording the resolved settings and seed, so a run can be repeated exactly. Exit codes: 0 on
success, 1 for invalid input or usage, 2 for I/O and file-format errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any, NoReturn

import numpy as np

from lift import __version__
from lift.ablation import AblationSpec, run_ablation, write_ablation_csv
from lift.chiral import (
    build_chiral_groups,
    group_stats,
    load_antonym_config,
    load_groups,
    write_groups,
)
from lift.config import resolve_seed
from lift.errors import FormatError, LiftError, ValidationError
from lift.featureio import (
    Manifest,
    load_checkpoint,
    load_manifest,
    read_descriptor_table,
    resample_frames,
    save_checkpoint,
    write_descriptor_table,
    write_json,
    write_rows_csv,
)
from lift.model import LiftConfig, LiftParams, count_params, encode_batch, forward_reconstruct
from lift.pooling import PoolingSpec
from lift.probes import ProbeSpec, evaluate_chiral, evaluate_chiral_features, evaluate_standard
from lift.synth import (
    SynthSpec,
    gen_synth_dataset,
    project_2d,
    time_variance,
    time_variance_by_group,
    write_projection_csv,
)
from lift.training import TrainConfig, train

logger = logging.getLogger("lift.cli")


class UsageError(LiftError):
    kind = "UsageError"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def _relative(path: Any, base: Path) -> str | None:
    if path is None:
        return None
    try:
        return Path(path).resolve().relative_to(base.resolve()).as_posix()
    except ValueError:
        return str(path)


def _write_run(
    out_dir: Path,
    command: str,
    settings: dict[str, Any],
    seed: int | None = None,
    **paths: Any,
) -> Path:
    """Record a run as ``run.<command>.json`` in ``out_dir``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"run.{command}.json"
    write_json(
        path,
        {
            "subcommand": command,
            "version": __version__,
            "seed": seed,
            "config": settings,
            "paths": {k: _relative(v, out_dir) for k, v in paths.items()},
        },
    )
    return path


def _model_config_args(p: argparse.ArgumentParser, with_dim: bool) -> None:
    defaults = LiftConfig()
    if with_dim:
        p.add_argument("--D", type=int, default=defaults.D, help="input feature width")
    p.add_argument("--d", type=int, default=defaults.d, help="latent width")
    p.add_argument("--layers", type=int, default=defaults.layers)
    p.add_argument("--heads", type=int, default=defaults.heads)
    p.add_argument("--ffn-mult", type=int, default=defaults.ffn_mult)
    p.add_argument("--T", type=int, default=defaults.T, help="frames per video")
    p.add_argument("--lambda-orth", type=float, default=defaults.lambda_orth)


def _model_config(args: argparse.Namespace, dim: int) -> LiftConfig:
    return LiftConfig(
        D=dim,
        d=args.d,
        layers=args.layers,
        heads=args.heads,
        ffn_mult=args.ffn_mult,
        T=args.T,
        lambda_orth=args.lambda_orth,
    )


def _train_config_args(p: argparse.ArgumentParser) -> None:
    defaults = TrainConfig()
    p.add_argument("--epochs", type=int, default=defaults.epochs)
    p.add_argument("--batch-size", type=int, default=defaults.batch_size)
    p.add_argument("--lr", type=float, default=defaults.learning_rate)
    p.add_argument("--factor", type=float, default=defaults.factor)
    p.add_argument("--patience", type=int, default=defaults.patience)
    p.add_argument("--min-lr", type=float, default=defaults.min_lr)
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--data-fraction", type=float, default=defaults.data_fraction)
    p.add_argument("--orth-penalty", choices=("cos", "abs", "squared"), default="cos")


def _train_config(args: argparse.Namespace, seed: int) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        factor=args.factor,
        patience=args.patience,
        min_lr=args.min_lr,
        seed=seed,
        standardize=args.standardize,
        data_fraction=args.data_fraction,
        orth_penalty=args.orth_penalty,
    )


def _manifest_dim(manifest: Manifest) -> int:
    dims = {rec.dim for rec in manifest}
    if len(dims) != 1:
        raise ValidationError(f"manifest mixes feature widths {sorted(dims)}", operation="train")
    return dims.pop()


def _load_model(path: str | None) -> LiftParams | None:
    return None if path is None else LiftParams.from_checkpoint(load_checkpoint(path))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    seed = resolve_seed(args.seed)
    spec = SynthSpec(
        n_videos=args.n_videos,
        T=args.T,
        D=args.D,
        m=args.m,
        clusters=args.clusters,
        groups=args.groups,
        noise=args.noise,
        depth=args.depth,
        amplitude=args.amplitude,
        seed=seed,
    )
    out = Path(args.out)
    manifest = gen_synth_dataset(spec, workers=args.workers).write(out)
    _write_run(
        out,
        "synth",
        spec.to_dict(),
        seed=seed,
        manifest=manifest,
        antonyms=out / "antonyms.json",
    )
    print(f"wrote {spec.n_videos} videos to {out}", file=sys.stderr)
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    if args.split:
        manifest = manifest.split(args.split)
    seed = resolve_seed(args.seed)
    model_config = _model_config(args, _manifest_dim(manifest))
    train_config = _train_config(args, seed)
    ckpt, log = train(manifest, model_config, train_config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ckpt, out)
    log_path = out.with_suffix(".log.csv")
    log.write_csv(log_path)
    _write_run(
        out.parent,
        "train",
        {"model": model_config.to_dict(), "train": train_config.to_dict(), "split": args.split},
        seed=seed,
        manifest=args.manifest,
        checkpoint=out,
        log=log_path,
    )
    print(f"final loss {log.total[-1]:.6f} after {len(log)} epochs", file=sys.stderr)
    return 0


def cmd_encode(args: argparse.Namespace) -> int:
    model = LiftParams.from_checkpoint(load_checkpoint(args.checkpoint))
    manifest = load_manifest(args.manifest)
    seqs = list(manifest.sequences())
    stack = np.stack([resample_frames(s, model.config.T) for s in seqs])
    matrix = encode_batch(model, stack, batch_size=args.batch_size, workers=args.workers)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    written = write_descriptor_table(out, [s.video_id for s in seqs], matrix, fmt=args.format)
    _write_run(
        out.parent,
        "encode",
        {"format": args.format, "batch_size": args.batch_size, "workers": args.workers},
        checkpoint=args.checkpoint,
        manifest=args.manifest,
        descriptors=written[0],
    )
    print(f"encoded {len(seqs)} videos into {matrix.shape[1]}-dim descriptors", file=sys.stderr)
    return 0


def cmd_mine(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    config = load_antonym_config(args.antonyms)
    groups = build_chiral_groups(manifest, config)
    out = Path(args.out)
    write_groups(groups, out)
    _write_run(out, "mine", config.to_dict(), manifest=args.manifest, antonyms=args.antonyms)
    for row in group_stats(groups):
        print(
            f"{row['dataset']}: {row['groups']} groups, {row['total_videos']} videos "
            f"({row['train_videos']} train / {row['test_videos']} test)",
            file=sys.stderr,
        )
    return 0


def _probe_spec(args: argparse.Namespace, seed: int) -> ProbeSpec:
    base = ProbeSpec.standard if args.recipe == "standard" else ProbeSpec.chiral
    overrides: dict[str, Any] = {"seed": seed, "standardize": not args.no_standardize}
    for flag, name in (
        ("hidden", "hidden"),
        ("dropout", "dropout"),
        ("lr", "learning_rate"),
        ("epochs", "epochs"),
        ("weight_decay", "weight_decay"),
    ):
        value = getattr(args, flag)
        if value is not None:
            overrides[name] = value
    return base(args.kind, **overrides)


def cmd_probe(args: argparse.Namespace) -> int:
    seed = resolve_seed(args.seed)
    spec = _probe_spec(args, seed)
    pooling = PoolingSpec.parse(args.pooling) if args.pooling else None
    aux = read_descriptor_table(args.aux) if args.aux else None
    model = _load_model(args.checkpoint)
    if args.standard:
        if args.manifest is None:
            raise UsageError("--standard needs --manifest")
        report = evaluate_standard(
            load_manifest(args.manifest),
            pooling,
            spec,
            label=args.standard,
            model=model,
            aux=aux,
            num_frames=args.frames,
            workers=args.workers,
        )
    else:
        if args.groups is None:
            raise UsageError("chiral probing needs --groups (or use --standard)")
        groups = load_groups(args.groups)
        if args.descriptors:
            report = evaluate_chiral_features(
                groups,
                read_descriptor_table(args.descriptors),
                spec,
                aux=aux,
                workers=args.workers,
            )
        elif args.manifest is not None:
            report = evaluate_chiral(
                groups,
                load_manifest(args.manifest),
                pooling,
                spec,
                model=model,
                aux=aux,
                num_frames=args.frames,
                workers=args.workers,
            )
        else:
            raise UsageError("chiral probing needs --descriptors or --manifest")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_json(out / "report.json")
    report.write_csv(out / "report.csv")
    _write_run(
        out,
        "probe",
        {**report.spec, "workers": args.workers},
        seed=spec.seed,
        manifest=args.manifest,
        groups=args.groups,
        descriptors=args.descriptors,
        aux=args.aux,
        checkpoint=args.checkpoint,
    )
    avg = report.average
    print(
        f"mean accuracy {'n/a' if avg is None else f'{avg:.4f}'} over "
        f"{len(report.evaluated)} groups ({len(report.skipped)} skipped)",
        file=sys.stderr,
    )
    return 0


def cmd_tv(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    seqs = list(manifest.sequences())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_rows_csv(
        out / "time_variance.csv",
        ("video_id", "verb", "noun", "time_variance"),
        ((s.video_id, s.verb or "", s.noun or "", repr(time_variance(s.frames))) for s in seqs),
    )
    by_group = time_variance_by_group(seqs, key=args.by)
    write_rows_csv(
        out / f"time_variance_by_{args.by}.csv",
        (args.by, "mean_time_variance"),
        ((k, repr(v)) for k, v in by_group.items()),
    )
    _write_run(out, "tv", {"by": args.by}, manifest=args.manifest)
    for key, value in by_group.items():
        print(f"{key}: {value:.6g}", file=sys.stderr)
    return 0


def cmd_project(args: argparse.Namespace) -> int:
    model = LiftParams.from_checkpoint(load_checkpoint(args.checkpoint))
    manifest = load_manifest(args.manifest)
    ids = args.video_id or manifest.ids[: args.limit]
    projections = {}
    for video_id in ids:
        frames = resample_frames(manifest.read(video_id), model.config.T)
        _, recon = forward_reconstruct(model, frames)
        if model.standardization is not None:
            mean, std = model.standardization
            frames = (frames - mean) / std
        projections[video_id] = project_2d(frames, recon)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_projection_csv(out, projections)
    _write_run(
        out.parent,
        "project",
        {"video_ids": list(ids)},
        checkpoint=args.checkpoint,
        manifest=args.manifest,
        projection=out,
    )
    return 0


def cmd_params(args: argparse.Namespace) -> int:
    config = _model_config(args, args.D)
    total = count_params(config)
    print(total)
    print(f"{total / 1e6:.1f}M trainable parameters", file=sys.stderr)
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    groups = load_groups(args.groups)
    seed = resolve_seed(args.seed)
    base_model = _model_config(args, _manifest_dim(manifest))
    base_train = _train_config(args, seed)
    grid = AblationSpec(
        latent_dims=args.dims or (base_model.d,),
        fractions=args.fractions,
        lambdas=args.lambdas or (base_model.lambda_orth,),
        seeds=args.seeds or (seed,),
    )
    probe = ProbeSpec.chiral(seed=seed)
    split = None if args.split == "all" else args.split
    rows = run_ablation(
        manifest, groups, base_model, base_train, grid, probe, args.workers, split=split
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_ablation_csv(out, rows)
    _write_run(
        out.parent,
        "ablate",
        {
            "grid": grid.to_dict(),
            "model": base_model.to_dict(),
            "train": base_train.to_dict(),
            "split": args.split,
        },
        seed=seed,
        manifest=args.manifest,
        groups=args.groups,
        table=out,
    )
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lift", description="Linearized feature trajectories toolkit.")
    parser.add_argument("--version", action="version", version=f"lift {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def add(name: str, fn: Callable[[argparse.Namespace], int], summary: str) -> Any:
        p = sub.add_parser(name, help=summary)
        p.set_defaults(func=fn)
        return p

    p = add("synth", cmd_synth, "generate a synthetic chiral dataset")
    defaults = SynthSpec()
    p.add_argument("--out", required=True)
    p.add_argument("--n-videos", type=int, default=defaults.n_videos)
    p.add_argument("--T", type=int, default=defaults.T)
    p.add_argument("--D", type=int, default=defaults.D)
    p.add_argument("--m", type=int, default=defaults.m)
    p.add_argument("--clusters", type=int, default=defaults.clusters)
    p.add_argument("--groups", type=int, default=defaults.groups)
    p.add_argument("--noise", type=float, default=defaults.noise)
    p.add_argument("--depth", type=int, default=defaults.depth)
    p.add_argument("--amplitude", type=float, default=defaults.amplitude)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)

    p = add("train", cmd_train, "train the autoencoder on a feature manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--split", choices=("train", "test"), help="train on one split only")
    p.add_argument("--seed", type=int)
    _model_config_args(p, with_dim=False)
    _train_config_args(p)

    p = add("encode", cmd_encode, "write descriptors for every video of a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("binary", "csv"), default="binary")
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--workers", type=int, default=1)

    p = add("mine", cmd_mine, "build chiral groups from a manifest and antonym config")
    p.add_argument("--manifest", required=True)
    p.add_argument("--antonyms", required=True)
    p.add_argument("--out", required=True)

    p = add("probe", cmd_probe, "train probes and report test accuracy")
    p.add_argument("--out", required=True)
    p.add_argument("--groups", help="directory written by 'mine'")
    p.add_argument(
        "--standard",
        choices=("verb", "noun", "action"),
        help="multi-class probing of this label instead of chiral groups",
    )
    p.add_argument("--manifest")
    p.add_argument("--descriptors", help="precomputed descriptor table")
    p.add_argument("--aux", help="descriptor table concatenated onto the probe input")
    p.add_argument(
        "--pooling",
        default="lift",
        help="mean | time_weighted | full_concat | lift | single:<i> | frames:<i,j,..>",
    )
    p.add_argument("--checkpoint", help="model for lift pooling")
    p.add_argument("--kind", choices=("linear", "mlp", "attentive"), default="linear")
    p.add_argument("--recipe", choices=("chiral", "standard"), default="chiral")
    p.add_argument("--hidden", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--frames", type=int, default=16, help="frames per video for pooling")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)

    p = add("tv", cmd_tv, "time variance per video and per label")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--by", choices=("verb", "noun", "split"), default="verb")

    p = add("project", cmd_project, "2-D PCA of original vs reconstructed trajectories")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--video-id", action="append")
    p.add_argument("--limit", type=int, default=5, help="videos to project without --video-id")

    p = add("params", cmd_params, "count trainable parameters")
    _model_config_args(p, with_dim=True)

    p = add("ablate", cmd_ablate, "sweep latent width, data fraction and lambda")
    p.add_argument("--manifest", required=True)
    p.add_argument("--groups", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dims", type=_ints)
    p.add_argument("--fractions", type=_floats, default=(1.0,))
    p.add_argument("--lambdas", type=_floats)
    p.add_argument("--seeds", type=_ints)
    p.add_argument(
        "--split",
        choices=("train", "test", "all"),
        default="train",
        help="videos the autoencoder trains on",
    )
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    _model_config_args(p, with_dim=False)
    _train_config_args(p)
    return parser


def _configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("lift")
    root.handlers[:] = [handler]
    root.setLevel(level)


def run(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv`` and run one subcommand; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _configure_logging(args.verbose, args.quiet)
        return int(args.func(args))
    except UsageError as err:
        print(f"lift: error: {err.message}", file=sys.stderr)
        return 1
    except (FormatError, OSError) as err:
        print(f"lift: {err}", file=sys.stderr)
        return 2
    except LiftError as err:
        print(f"lift: {err}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
