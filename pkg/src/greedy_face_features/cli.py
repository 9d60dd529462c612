"""Command-line interface for greedy facial feature selection.

Subcommands:
    extract   Write the full delta-feature matrix of a manifest as CSV.
    select    Run sequential forward selection; write subset, trace and config.
    evaluate  Cross-validate a subset; write confusion tables and a summary.
    report    Describe a selected subset and optionally emit plot data.
    synth     Write a synthetic dataset with planted informative features.

Usage:
    python -m greedy_face_features synth --out-dir data/synth --seed 1
    python -m greedy_face_features select data/synth/manifest.csv --out-dir runs/sel
    python -m greedy_face_features evaluate data/synth/manifest.csv runs/sel/subset.txt \\
        --out-dir runs/eval --folds 10
    python -m greedy_face_features report runs/sel/subset.txt --trace runs/sel/trace.csv

Exit codes:
    0  success
    1  internal error
    2  usage error (bad command-line arguments)
    3  input error (unreadable or inconsistent data, config or subset files)
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path
from typing import Any

from .config import CONFIG_FILENAME, RunConfig, dump_config, load_config
from .errors import InputError, SubsetFileError
from .evaluation import (
    ablate,
    cross_validate,
    format_ablation_csv,
    format_counts_csv,
    format_posteriors_csv,
    grid_search,
    per_class_report,
    render_confusion,
    summary_line,
    train_final,
)
from .features import DistanceMode, FeatureDataset, write_feature_matrix
from .landmarks import load_manifest, read_manifest
from .output import write_atomic
from .report import (
    accuracy_trajectory,
    build_plot_data,
    describe_subset,
    format_plot_data,
    mean_neutral_shape,
)
from .selection import (
    format_trace_csv,
    load_subset,
    load_trace,
    render_trace,
    save_subset,
    sfs,
)
from .svm import save_model
from .synth import SynthSpec, generate, one_hot_planted, pick_planted_features, write_dataset

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_INPUT = 3


def _gamma(text: str) -> float | str:
    return text if text == "scale" else float(text)


def _add_common(parser: argparse.ArgumentParser) -> None:
    # Settings shared by every subcommand; None means "not given on the command line"
    parser.add_argument("--config", type=Path, help="Read settings from a key = value file")
    parser.add_argument("--seed", type=int, default=None, help="Seed for splits, folds and data")
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="Worker processes (0 = all cores, the default); never changes results",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Enable debug logging")


def _add_svm(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--c", dest="c", type=float, default=None, help="SVM box constraint C")
    parser.add_argument(
        "--gamma", type=_gamma, default=None, help="RBF width, or 'scale' (default)"
    )
    parser.add_argument(
        "--calibrate",
        action="store_true",
        default=None,
        help="Fit Platt sigmoids; evaluate then also writes posteriors.csv",
    )
    parser.add_argument(
        "--distance-mode",
        choices=[mode.value for mode in DistanceMode],
        default=None,
        help="Signed (default) or absolute pairwise distances",
    )


def build_parser() -> argparse.ArgumentParser:
    """Create the argument parser with all subcommands."""
    parser = argparse.ArgumentParser(
        prog="greedy-face-features",
        description="Select and evaluate spatial facial-landmark features for expressions",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s synth --out-dir data/synth
  %(prog)s select data/synth/manifest.csv --out-dir runs/sel --max-features 10
  %(prog)s evaluate data/synth/manifest.csv runs/sel/subset.txt --out-dir runs/eval
        """,
    )
    commands = parser.add_subparsers(dest="command", required=True)

    # extract: manifest -> feature matrix CSV
    extract = commands.add_parser("extract", help="Write the full feature matrix as CSV")
    extract.add_argument("manifest", type=Path)
    extract.add_argument("--out", type=Path, required=True, help="Feature-matrix CSV to write")
    _add_common(extract)
    extract.add_argument(
        "--distance-mode", choices=[mode.value for mode in DistanceMode], default=None
    )

    # select: forward selection on one stratified split
    select = commands.add_parser("select", help="Run sequential forward selection")
    select.add_argument("manifest", type=Path)
    select.add_argument("--out-dir", type=Path, required=True)
    _add_common(select)
    _add_svm(select)
    select.add_argument("--train-ratio", type=float, default=None, help="Default: 0.6")
    select.add_argument("--max-features", type=int, default=None, help="Stop after N features")
    select.add_argument("--min-improvement", type=float, default=None, help="Default: 0")
    select.add_argument(
        "--pool", type=Path, default=None, help="Subset file restricting the candidates"
    )

    # evaluate: k-fold cross-validation of a subset
    evaluate = commands.add_parser("evaluate", help="Cross-validate a feature subset")
    evaluate.add_argument("manifest", type=Path)
    evaluate.add_argument("subset", type=Path)
    evaluate.add_argument("--out-dir", type=Path, required=True)
    _add_common(evaluate)
    _add_svm(evaluate)
    evaluate.add_argument("--folds", type=int, default=None, help="Default: 10")
    evaluate.add_argument(
        "--grid-search",
        action="store_true",
        default=None,
        help="Pick C and gamma on a coarse grid by CV accuracy before the final run",
    )
    evaluate.add_argument(
        "--ablation",
        action="store_true",
        default=None,
        help="Also cross-validate the subset without each feature (ablation.csv)",
    )
    evaluate.add_argument(
        "--model-out",
        type=Path,
        default=None,
        help="Also train on every row and save the model file here",
    )

    # report: describe a subset
    report = commands.add_parser("report", help="Describe a selected subset")
    report.add_argument("subset", type=Path)
    report.add_argument("--trace", type=Path, default=None, help="trace.csv from select")
    report.add_argument(
        "--manifest", type=Path, default=None, help="Dataset whose mean shape backs the plot"
    )
    report.add_argument("--plot-data", type=Path, default=None, help="Plot-data CSV to write")
    report.add_argument("-v", "--verbose", action="store_true", help="Enable debug logging")

    # synth: synthetic dataset
    synth = commands.add_parser("synth", help="Write a synthetic dataset")
    synth.add_argument("--out-dir", type=Path, required=True)
    _add_common(synth)
    synth.add_argument("--landmarks", dest="synth_landmarks", type=int, default=None)
    synth.add_argument("--classes", dest="synth_classes", type=int, default=None)
    synth.add_argument("--per-class", dest="synth_per_class", type=int, default=None)
    synth.add_argument("--planted", dest="synth_planted", type=int, default=None)
    synth.add_argument("--displacement", dest="synth_displacement", type=float, default=None)
    synth.add_argument("--noise", dest="synth_noise", type=float, default=None)

    return parser


_OVERRIDE_KEYS = (
    "seed",
    "threads",
    "folds",
    "train_ratio",
    "c",
    "gamma",
    "calibrate",
    "grid_search",
    "ablation",
    "max_features",
    "min_improvement",
    "synth_landmarks",
    "synth_classes",
    "synth_per_class",
    "synth_planted",
    "synth_displacement",
    "synth_noise",
)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the --config file, then explicit flags."""
    config = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides: dict[str, Any] = {key: getattr(args, key, None) for key in _OVERRIDE_KEYS}
    if getattr(args, "distance_mode", None) is not None:
        overrides["distance_mode"] = DistanceMode(args.distance_mode)
    overrides["command"] = args.command
    for key in ("manifest", "subset", "pool"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = str(value)
    out = getattr(args, "out", None) or getattr(args, "out_dir", None)
    if out is not None:
        overrides["out"] = str(out)
    return config.with_overrides(overrides)


def _load_dataset(manifest: Path, mode: DistanceMode) -> FeatureDataset:
    examples = load_manifest(manifest)
    if not examples:
        raise InputError(f"{manifest}: no examples")
    return FeatureDataset.from_examples(examples, mode)


def cmd_extract(args: argparse.Namespace, config: RunConfig) -> int:
    dataset = _load_dataset(args.manifest, config.distance_mode)
    text = write_feature_matrix(list(dataset.ids), dataset.labels, dataset.matrix)
    write_atomic(args.out, text)
    dump_config(config, args.out.with_suffix(".cfg"))
    print(f"Wrote {len(dataset)} rows x {dataset.dimension} features to {args.out}")
    return EXIT_OK


def cmd_select(args: argparse.Namespace, config: RunConfig) -> int:
    dataset = _load_dataset(args.manifest, config.distance_mode)
    pool: tuple[int, ...] | None = None
    if config.pool:
        candidates = load_subset(config.pool)
        if candidates.landmark_count != dataset.landmark_count:
            raise SubsetFileError(
                f"pool declares L={candidates.landmark_count}, "
                f"dataset has L={dataset.landmark_count}"
            )
        pool = tuple(candidates.flat)

    trace = sfs(dataset, config.selection_config(pool))

    out_dir: Path = args.out_dir
    save_subset(trace, out_dir / "subset.txt")
    write_atomic(out_dir / "trace.csv", format_trace_csv(trace))
    table = render_trace(trace)
    write_atomic(out_dir / "trace.txt", table)
    dump_config(config, out_dir / CONFIG_FILENAME)
    print(table, end="")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace, config: RunConfig) -> int:
    subset = load_subset(args.subset)
    manifest = read_manifest(args.manifest)
    if subset.landmark_count != manifest.landmark_count:
        raise SubsetFileError(
            f"{args.subset} declares L={subset.landmark_count}, "
            f"{args.manifest} has L={manifest.landmark_count}"
        )
    if len(subset) == 0:
        raise SubsetFileError(f"{args.subset}: subset is empty")

    dataset = _load_dataset(args.manifest, config.distance_mode)
    eval_config = config.eval_config()
    out_dir: Path = args.out_dir

    if config.grid_search:
        search = grid_search(dataset, list(subset), eval_config)
        eval_config = replace(eval_config, svm=search.best)
        config = replace(config, c=search.best.C, gamma=search.best.gamma)
        lines = ["C,gamma,accuracy"]
        lines.extend(f"{p.C!r},{p.gamma!r},{p.accuracy!r}" for p in search.points)
        write_atomic(out_dir / "grid.csv", "\n".join(lines) + "\n")
        logger.info("Grid search picked C=%g gamma=%.4g", search.best.C, search.best.gamma)

    result = cross_validate(dataset, list(subset), eval_config)
    table = render_confusion(result.matrix, result.matrix.labels)
    report = table + "\n" + "\n".join(per_class_report(result.matrix)) + "\n"
    summary = summary_line(result)

    write_atomic(out_dir / "confusion.txt", report)
    write_atomic(out_dir / "confusion.csv", format_counts_csv(result.matrix))
    write_atomic(out_dir / "summary.txt", summary + "\n")
    if result.posteriors is not None:
        write_atomic(out_dir / "posteriors.csv", format_posteriors_csv(dataset, result))
    if config.ablation:
        full, rows = ablate(dataset, list(subset), eval_config)
        write_atomic(out_dir / "ablation.csv", format_ablation_csv(full, rows))
    if args.model_out is not None:
        model = train_final(dataset, list(subset), eval_config.svm)
        save_model(model, args.model_out)
        logger.info("Saved model over %d classes to %s", model.class_count, args.model_out)
    dump_config(config, out_dir / CONFIG_FILENAME)

    print(report, end="")
    print(summary)
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    subset = load_subset(args.subset)
    trace = load_trace(args.trace) if args.trace else None
    for line in describe_subset(subset, trace):
        print(line)
    if trace is not None:
        print(f"accuracy: {accuracy_trajectory(trace)}")
    if args.plot_data:
        shape = None
        if args.manifest:
            examples = load_manifest(args.manifest)
            if examples:
                shape = mean_neutral_shape(examples)
        write_atomic(args.plot_data, format_plot_data(build_plot_data(subset, trace, shape)))
        print(f"Wrote plot data to {args.plot_data}")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace, config: RunConfig) -> int:
    features = pick_planted_features(config.synth_landmarks, config.synth_planted, config.seed)
    spec = SynthSpec(
        landmark_count=config.synth_landmarks,
        class_count=config.synth_classes,
        examples_per_class=config.synth_per_class,
        planted=one_hot_planted(features, config.synth_classes, config.synth_displacement),
        noise_sigma=config.synth_noise,
        seed=config.seed,
    )
    manifest = write_dataset(generate(spec), args.out_dir)
    dump_config(config, args.out_dir / CONFIG_FILENAME)
    print(f"Wrote synthetic dataset to {manifest}")
    for feature in features:
        print(f"  planted: {feature.describe()}")
    return EXIT_OK


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="[%(levelname)s] %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def main(argv: Sequence[str] | None = None) -> int:
    """Main CLI entry point.

    Args:
        argv: Arguments without the program name; defaults to sys.argv[1:].

    Returns:
        Exit code: 0 success, 1 internal error, 2 usage error, 3 input error.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE

    _configure_logging(args.verbose)
    try:
        if args.command == "report":
            return cmd_report(args)
        config = resolve_config(args)
        if args.command == "extract":
            return cmd_extract(args, config)
        if args.command == "select":
            return cmd_select(args, config)
        if args.command == "evaluate":
            return cmd_evaluate(args, config)
        return cmd_synth(args, config)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:
        logger.debug("Unhandled error", exc_info=True)
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
