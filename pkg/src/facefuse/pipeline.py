"""End-to-end orchestration: extraction, corpus statistics, benchmarks.

Each manifest row is processed independently (and optionally in a worker
pool); outputs are always emitted in manifest order so results do not depend
on scheduling. Per-row failures are logged and skipped, but a corpus where
more than 10% of rows fail is rejected outright.
"""

import dataclasses
import logging
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataio import FeatureRow
from .errors import DataError, UsageError
from .evaluation import split_manifest
from .features import (
    DEFAULT_PATTERN_SEED,
    SamplingPattern,
    _orb_detect_describe_impl,
    fast_brief_detect_describe,
    fast_detect,
    ingest_keypoint_file,
    make_sampling_pattern,
)
from .forest import ForestParams, train_forest
from .fusion import (
    RegionStats,
    aggregate_region_stats,
    fuse_descriptors,
    region_counts,
)
from .image import load_pgm
from .regions import build_partition, load_landmarks

log = logging.getLogger(__name__)

DETECTORS = ("fast_brief", "orb", "external")
MAX_SKIP_FRACTION = 0.1
BENCH_WARMUP = 5
BENCH_MIN_FACES = 10


@dataclass
class RunConfig:
    detector: str = "fast_brief"
    fast_threshold: int = 20
    n_top: int = 500
    mode: str = "no_ave"
    seed: int = 42
    n_trees: int = 500
    workers: int = 1
    train_fraction: float = 0.8
    pattern_seed: int = DEFAULT_PATTERN_SEED

    def validate(self) -> None:
        if self.detector not in DETECTORS:
            raise UsageError(
                f"detector must be one of {', '.join(DETECTORS)}, got {self.detector!r}"
            )
        if not 1 <= self.fast_threshold <= 254:
            raise UsageError(
                f"fast-threshold must be in [1, 254], got {self.fast_threshold}"
            )
        if self.n_top < 1:
            raise UsageError(f"n-top must be positive, got {self.n_top}")
        if self.mode not in ("ave", "no_ave"):
            raise UsageError(f"mode must be ave or no_ave, got {self.mode!r}")
        if self.n_trees < 1:
            raise UsageError(f"n-trees must be positive, got {self.n_trees}")
        if self.workers < 1:
            raise UsageError(f"workers must be positive, got {self.workers}")
        if not 0.0 <= self.train_fraction <= 1.0:
            raise UsageError(
                f"train-fraction must be in [0, 1], got {self.train_fraction}"
            )


def sidecar_keypoint_path(image_path: str) -> str:
    """External descriptors live next to the image with a .kp extension."""
    return os.path.splitext(image_path)[0] + ".kp"


def _pattern(config: RunConfig) -> SamplingPattern:
    return make_sampling_pattern(seed=config.pattern_seed)


def detect_and_describe(img, config: RunConfig, pattern: SamplingPattern, image_path: str):
    """(keypoint, descriptor) pairs plus the dropped-keypoint count."""
    if config.detector == "fast_brief":
        return fast_brief_detect_describe(img, config.fast_threshold, pattern)
    if config.detector == "orb":
        return _orb_detect_describe_impl(
            img, config.n_top, config.fast_threshold, pattern, 2.0, 9
        )
    kp_file = ingest_keypoint_file(sidecar_keypoint_path(image_path))
    return kp_file.entries, 0


def detect_only(img, config: RunConfig, image_path: str):
    """Detector-stage keypoints (for stats), without descriptors."""
    if config.detector == "fast_brief":
        return fast_detect(img, config.fast_threshold)
    if config.detector == "orb":
        pairs, _ = _orb_detect_describe_impl(
            img, config.n_top, config.fast_threshold, _pattern(config), 2.0, 9
        )
        return [kp for kp, _ in pairs]
    return [kp for kp, _ in ingest_keypoint_file(sidecar_keypoint_path(image_path)).entries]


def _extract_one(task):
    """Worker body: one manifest row → (FeatureRow | None, error | None)."""
    row, config, pattern = task
    try:
        img = load_pgm(row.image_path)
        landmarks = load_landmarks(row.landmarks_path)
        part = build_partition(landmarks)
        if config.detector == "external":
            kp_file = ingest_keypoint_file(sidecar_keypoint_path(row.image_path))
            entries, dropped = kp_file.entries, 0
            d = kp_file.d
        else:
            entries, dropped = detect_and_describe(img, config, pattern, row.image_path)
            d = pattern.n_bytes
        fused = fuse_descriptors(
            entries, part, config.mode, config.detector, d=d
        )
        feature = FeatureRow(
            sample_id=row.sample_id,
            label=row.label,
            video_id=row.video_id,
            split=row.split,
            detector=config.detector,
            mode=config.mode,
            d=fused.d,
            values=fused.values,
        )
        return feature, dropped, None
    except (DataError, ValueError, OSError) as exc:
        return None, 0, f"{row.sample_id}: {exc}"


@dataclass
class ExtractResult:
    rows: list  # list[FeatureRow], manifest order minus skipped
    n_skipped: int
    n_dropped_keypoints: int
    errors: list = field(default_factory=list)


def extract_features(
    manifest_rows,
    config: RunConfig,
    assign_splits: bool = True,
) -> ExtractResult:
    """Fused feature rows for a manifest, in manifest order.

    Unassigned splits are resolved first (whole videos, seeded by
    config.seed) so the output table always carries train/test splits.
    """
    config.validate()
    rows = list(manifest_rows)
    if not rows:
        raise DataError("manifest has no rows")
    if assign_splits:
        rows = split_manifest(rows, config.train_fraction, config.seed)
    pattern = _pattern(config)
    tasks = [(row, config, pattern) for row in rows]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_extract_one, tasks, chunksize=8))
    else:
        results = [_extract_one(task) for task in tasks]
    out: list[FeatureRow] = []
    errors: list[str] = []
    dropped_total = 0
    for feature, dropped, error in results:
        if error is not None:
            log.warning("skipping row: %s", error)
            errors.append(error)
            continue
        dropped_total += dropped
        out.append(feature)
    n_skipped = len(errors)
    if n_skipped > MAX_SKIP_FRACTION * len(rows):
        raise DataError(
            f"{n_skipped} of {len(rows)} rows failed extraction"
            f" (limit {MAX_SKIP_FRACTION:.0%}): first error: {errors[0]}"
        )
    dims = {f.d for f in out}
    if len(dims) > 1:
        raise DataError(
            f"corpus mixes descriptor dimensions {sorted(dims)};"
            " external keypoint files must agree on d"
        )
    return ExtractResult(
        rows=out,
        n_skipped=n_skipped,
        n_dropped_keypoints=dropped_total,
        errors=errors,
    )


def run_stats(manifest_rows, config: RunConfig) -> RegionStats:
    """Per-class mean keypoint counts per region over a corpus."""
    config.validate()
    rows = list(manifest_rows)
    if not rows:
        raise DataError("manifest has no rows")
    per_face = []
    n_skipped = 0
    for row in rows:
        try:
            img = load_pgm(row.image_path)
            part = build_partition(load_landmarks(row.landmarks_path))
            kps = detect_only(img, config, row.image_path)
            per_face.append((row.label, region_counts(kps, part)))
        except (DataError, ValueError, OSError) as exc:
            log.warning("skipping row %s: %s", row.sample_id, exc)
            n_skipped += 1
    if n_skipped > MAX_SKIP_FRACTION * len(rows):
        raise DataError(
            f"{n_skipped} of {len(rows)} rows failed while computing stats"
        )
    return aggregate_region_stats(
        per_face, config.detector, config.fast_threshold, n_skipped=n_skipped
    )


@dataclass(frozen=True)
class BenchRow:
    name: str
    n: int
    mean_s: float
    median_s: float
    stddev_s: float


def _bench_detector(rows, config: RunConfig, detector: str) -> tuple[BenchRow, list]:
    cfg = dataclasses.replace(config, detector=detector)
    pattern = _pattern(cfg)
    loaded = []
    for row in rows:
        img = load_pgm(row.image_path)
        part = build_partition(load_landmarks(row.landmarks_path))
        loaded.append((row, img, part))
    features = []
    times = []
    for i, (row, img, part) in enumerate(loaded):
        t0 = time.perf_counter()
        entries, _ = detect_and_describe(img, cfg, pattern, row.image_path)
        fused = fuse_descriptors(entries, part, cfg.mode, detector, d=pattern.n_bytes)
        elapsed = time.perf_counter() - t0
        if i >= BENCH_WARMUP:
            times.append(elapsed)
        features.append((fused, row.label))
    return (
        BenchRow(
            name=detector,
            n=len(times),
            mean_s=statistics.fmean(times),
            median_s=statistics.median(times),
            stddev_s=statistics.stdev(times) if len(times) > 1 else 0.0,
        ),
        features,
    )


def run_bench(manifest_rows, config: RunConfig, detectors=("fast_brief", "orb")) -> list[BenchRow]:
    """Per-face construction timing per detector, plus forest training time.

    The first BENCH_WARMUP faces are timed but excluded from the summary.
    """
    config.validate()
    rows = list(manifest_rows)
    if len(rows) < BENCH_MIN_FACES:
        raise DataError(
            f"benchmark needs at least {BENCH_MIN_FACES} faces, got {len(rows)}"
        )
    out = []
    train_features = None
    for detector in detectors:
        if detector == "external":
            raise UsageError("bench supports the built-in detectors only")
        bench_row, features = _bench_detector(rows, config, detector)
        out.append(bench_row)
        if train_features is None:
            train_features = features
    X = np.stack([f.values for f, _ in train_features])
    labels = [label for _, label in train_features]
    t0 = time.perf_counter()
    train_forest(
        X,
        labels,
        ForestParams(n_trees=config.n_trees, seed=config.seed),
        detector=detectors[0],
        mode=config.mode,
        pattern_seed=config.pattern_seed,
    )
    elapsed = time.perf_counter() - t0
    out.append(BenchRow(name="train_forest", n=1, mean_s=elapsed, median_s=elapsed, stddev_s=0.0))
    return out


def write_bench_csv(path: str, rows: list[BenchRow]) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "n", "mean_s", "median_s", "stddev_s"])
        for row in rows:
            writer.writerow(
                [row.name, row.n, repr(row.mean_s), repr(row.median_s), repr(row.stddev_s)]
            )
