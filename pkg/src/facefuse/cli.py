"""Command-line interface.

Subcommands: synth, stats, extract, train, eval, importance, diff, bench.
Options come from flags, with an optional JSON config file (--config);
explicit flags always win over the config file, which wins over defaults.
Exit codes: 0 success, 1 usage error, 2 data error, 3 compatibility error.
"""

import argparse
import csv
import json
import logging
import sys

from .dataio import read_feature_table, read_manifest, write_feature_table
from .errors import CompatibilityError, DataError, UsageError
from .evaluation import evaluate, format_report, split_counts, write_report_csv
from .forest import (
    ForestParams,
    feature_importances,
    load_model,
    save_model,
    train_forest,
)
from .fusion import (
    FusedVector,
    dimension_differences,
    dimension_region_offset,
    write_dimension_diff_csv,
    write_region_stats_csv,
)
from .pipeline import (
    RunConfig,
    extract_features,
    run_bench,
    run_stats,
    write_bench_csv,
)
from .synthetic import generate_corpus

DEFAULTS = {
    "detector": "fast_brief",
    "fast_threshold": 20,
    "n_top": 500,
    "mode": "no_ave",
    "seed": 42,
    "n_trees": 500,
    "workers": 1,
    "train_fraction": 0.8,
}

_CONFIG_TYPES = {
    "detector": str,
    "fast_threshold": int,
    "n_top": int,
    "mode": str,
    "seed": int,
    "n_trees": int,
    "workers": int,
    "train_fraction": (int, float),
}


class _Parser(argparse.ArgumentParser):
    """argparse that reports bad usage through the exit-code-1 path."""

    def error(self, message):
        raise UsageError(message)


def _load_config_file(path: str) -> dict:
    try:
        with open(path) as fh:
            loaded = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read config file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(loaded, dict):
        raise DataError("config file must hold a JSON object")
    for key, value in loaded.items():
        if key not in DEFAULTS:
            raise UsageError(f"unknown config key {key!r}")
        expected = _CONFIG_TYPES[key]
        if not isinstance(value, expected) or isinstance(value, bool):
            raise UsageError(
                f"config key {key!r} has wrong type {type(value).__name__}"
            )
    return loaded


def _settings(args) -> dict:
    """defaults < config file < explicit flags."""
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        merged.update(_load_config_file(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _run_config(args) -> RunConfig:
    s = _settings(args)
    config = RunConfig(
        detector=s["detector"],
        fast_threshold=s["fast_threshold"],
        n_top=s["n_top"],
        mode=s["mode"],
        seed=s["seed"],
        n_trees=s["n_trees"],
        workers=s["workers"],
        train_fraction=s["train_fraction"],
    )
    config.validate()
    return config


def _add_common(parser) -> None:
    parser.add_argument("--config", help="JSON config file (flags win)")
    parser.add_argument("--seed", type=int, help="master RNG seed (default 42)")
    parser.add_argument("--workers", type=int, help="worker processes (default 1)")


def _add_detector_options(parser) -> None:
    parser.add_argument(
        "--detector",
        choices=("fast_brief", "orb", "external"),
        help="keypoint source (default fast_brief)",
    )
    parser.add_argument(
        "--fast-threshold",
        dest="fast_threshold",
        type=int,
        help="segment-test threshold (default 20)",
    )
    parser.add_argument(
        "--n-top",
        dest="n_top",
        type=int,
        help="keypoint budget for the oriented detector (default 500)",
    )
    parser.add_argument(
        "--mode", choices=("ave", "no_ave"), help="region fusion mode (default no_ave)"
    )


def cmd_synth(args) -> None:
    if args.n_videos < 2:
        raise UsageError("--n-videos must be at least 2")
    if args.frames_per_video < 1:
        raise UsageError("--frames-per-video must be at least 1")
    if args.size < 64:
        raise UsageError("--size must be at least 64")
    s = _settings(args)
    manifest = generate_corpus(
        args.out,
        n_videos=args.n_videos,
        frames_per_video=args.frames_per_video,
        size=args.size,
        seed=s["seed"],
    )
    print(manifest)


def cmd_stats(args) -> None:
    config = _run_config(args)
    rows = read_manifest(args.manifest)
    stats = run_stats(rows, config)
    write_region_stats_csv(args.out, stats)
    print(
        f"wrote region stats for {stats.n_real} real + {stats.n_fake} fake"
        f" faces to {args.out} ({stats.n_skipped} skipped)"
    )


def cmd_extract(args) -> None:
    config = _run_config(args)
    rows = read_manifest(args.manifest)
    result = extract_features(rows, config)
    write_feature_table(args.out, result.rows)
    counts = split_counts(result.rows)
    print(
        f"wrote {len(result.rows)} feature rows to {args.out}"
        f" (splits: {counts}; {result.n_skipped} rows skipped,"
        f" {result.n_dropped_keypoints} keypoints dropped)"
    )


def cmd_train(args) -> None:
    s = _settings(args)
    rows = [r for r in read_feature_table(args.features) if r.split == "train"]
    if not rows:
        raise DataError("feature table has no rows with split=train")
    params = ForestParams(
        n_trees=s["n_trees"],
        max_features=args.max_features,
        min_samples_leaf=args.min_samples_leaf,
        max_depth=args.max_depth,
        seed=s["seed"],
    )
    model = train_forest(
        [FusedVector(r.values, r.mode, r.detector, r.d) for r in rows],
        [r.label for r in rows],
        params,
        detector=rows[0].detector,
        mode=rows[0].mode,
        pattern_seed=RunConfig().pattern_seed,
    )
    save_model(args.model, model)
    print(
        f"trained {params.n_trees} trees on {len(rows)} rows"
        f" ({model.n_features} features); model saved to {args.model}"
    )


def _filter_split(rows, split: str):
    if split == "all":
        return rows
    return [r for r in rows if r.split == split]


def cmd_eval(args) -> None:
    model = load_model(args.model)
    rows = _filter_split(read_feature_table(args.features), args.split)
    if not rows:
        raise DataError(f"feature table has no rows with split={args.split}")
    report = evaluate(model, rows)
    write_report_csv(args.out, report)
    print(format_report(report))


def cmd_importance(args) -> None:
    model = load_model(args.model)
    importances = feature_importances(model)
    d = model.n_features // 8
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dimension", "region", "offset", "importance"])
        for i, value in enumerate(importances):
            region, offset = dimension_region_offset(i, d)
            writer.writerow([i, region, offset, repr(float(value))])
    print(f"wrote {len(importances)} importance rows to {args.out}")


def cmd_diff(args) -> None:
    rows = read_feature_table(args.features)
    groups = {"real": [], "fake": []}
    for r in rows:
        groups[r.label].append(FusedVector(r.values, r.mode, r.detector, r.d))
    diff = dimension_differences(groups["real"], groups["fake"])
    write_dimension_diff_csv(args.out, diff)
    print(f"wrote {len(diff.mean_diff)} dimension-difference rows to {args.out}")


def cmd_bench(args) -> None:
    config = _run_config(args)
    detectors = tuple(args.detectors.split(","))
    rows = read_manifest(args.manifest)
    bench_rows = run_bench(rows, config, detectors)
    write_bench_csv(args.out, bench_rows)
    for row in bench_rows:
        print(
            f"{row.name}: n={row.n} mean={row.mean_s:.6f}s"
            f" median={row.median_s:.6f}s stddev={row.stddev_s:.6f}s"
        )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="facefuse",
        description=(
            "Region-fused keypoint features for real/fake face classification"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--n-videos", type=int, default=40)
    p.add_argument("--frames-per-video", type=int, default=10)
    p.add_argument("--size", type=int, default=128)
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", help="per-region keypoint count statistics")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    _add_detector_options(p)
    _add_common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("extract", help="extract fused feature vectors")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--train-fraction",
        dest="train_fraction",
        type=float,
        help="fraction of unassigned videos sent to train (default 0.8)",
    )
    _add_detector_options(p)
    _add_common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train the random forest")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--n-trees", dest="n_trees", type=int, help="default 500")
    p.add_argument("--max-features", type=int, default=None)
    p.add_argument("--min-samples-leaf", type=int, default=1)
    p.add_argument("--max-depth", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=("train", "test", "all"), default="test")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("importance", help="export per-dimension importances")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("diff", help="real-vs-fake per-dimension differences")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("bench", help="per-face construction timing")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--detectors", default="fast_brief,orb")
    p.add_argument("--n-trees", dest="n_trees", type=int, help="default 500")
    _add_detector_options(p)
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except CompatibilityError as exc:
        print(f"compatibility error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
