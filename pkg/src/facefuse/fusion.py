"""Per-region descriptor fusion.

Each face yields one fused vector of length ``8 * d``: for every region, in
canonical order, the elementwise sum of the descriptors of the keypoints that
fall inside it (``no_ave``), or that sum divided by the member count
(``ave``). Regions with no members contribute an all-zero segment. Integer
descriptors are accumulated exactly in int64 and converted to float only at
the end, so additivity and the ave/no_ave relationship hold exactly.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .regions import REGIONS, RegionPartition, membership_matrix

MODES = ("ave", "no_ave")


@dataclass(frozen=True)
class FusedVector:
    """Concatenated per-region descriptor sums for one face."""

    values: np.ndarray  # (8 * d,) float64
    mode: str
    detector: str
    d: int

    def region_segment(self, name: str) -> np.ndarray:
        j = REGIONS.index(name)
        return self.values[j * self.d : (j + 1) * self.d]


def sum_descriptors(descriptors, d: int) -> np.ndarray:
    """Elementwise sum of equal-length descriptors; empty input → zeros.

    Integer inputs are summed in int64 (exact); the result is float64.
    """
    arrs = [np.asarray(a) for a in descriptors]
    for i, a in enumerate(arrs):
        if a.shape != (d,):
            raise DataError(
                f"descriptor {i} has shape {a.shape}, expected ({d},)"
            )
    if not arrs:
        return np.zeros(d, dtype=np.float64)
    stacked = np.stack(arrs)
    if np.issubdtype(stacked.dtype, np.integer):
        return stacked.astype(np.int64).sum(axis=0).astype(np.float64)
    return stacked.astype(np.float64).sum(axis=0)


def _canonical_order(entries) -> list:
    """Order (keypoint, descriptor) pairs so fusion ignores input order.

    Float descriptor sums depend on summation order, so the order must be a
    pure function of the data: position first, then score, orientation, and
    finally the descriptor bytes for exact duplicates.
    """
    return sorted(
        entries,
        key=lambda e: (
            e[0].y,
            e[0].x,
            e[0].score,
            e[0].orientation,
            tuple(np.asarray(e[1]).tolist()),
        ),
    )


def fuse_descriptors(
    entries,
    part: RegionPartition,
    mode: str = "no_ave",
    detector: str = "fast_brief",
    d: int | None = None,
) -> FusedVector:
    """Fused per-region vector for one face.

    ``entries`` is a sequence of (Keypoint, descriptor) pairs. ``d`` may be
    omitted when at least one entry is present.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    entries = list(entries)
    if not entries:
        if d is None:
            raise ValueError("d is required when there are no descriptors")
        return FusedVector(
            values=np.zeros(len(REGIONS) * d, dtype=np.float64),
            mode=mode,
            detector=detector,
            d=d,
        )
    first_d = np.asarray(entries[0][1]).shape[0]
    if d is None:
        d = int(first_d)
    arrs = [np.asarray(desc) for _, desc in entries]
    for a in arrs:
        if a.shape != (d,):
            raise DataError(
                f"descriptors must all have length {d}, got shape {a.shape}"
            )
    entries = _canonical_order(entries)
    descs = np.stack([np.asarray(desc) for _, desc in entries])
    exact = np.issubdtype(descs.dtype, np.integer)
    descs = descs.astype(np.int64 if exact else np.float64)
    xs = np.array([kp.x for kp, _ in entries], dtype=np.float64)
    ys = np.array([kp.y for kp, _ in entries], dtype=np.float64)
    members = membership_matrix(xs, ys, part)
    segments = []
    for j in range(len(REGIONS)):
        idx = np.nonzero(members[:, j])[0]
        if idx.size == 0:
            segments.append(np.zeros(d, dtype=np.float64))
            continue
        seg = descs[idx].sum(axis=0).astype(np.float64)
        if mode == "ave":
            seg = seg / float(idx.size)
        segments.append(seg)
    return FusedVector(
        values=np.concatenate(segments), mode=mode, detector=detector, d=d
    )


def region_counts(kps, part: RegionPartition) -> dict[str, int]:
    """Keypoint count per region; entire_face counts everything."""
    kps = list(kps)
    if not kps:
        return {name: 0 for name in REGIONS}
    xs = np.array([kp.x for kp in kps], dtype=np.float64)
    ys = np.array([kp.y for kp in kps], dtype=np.float64)
    members = membership_matrix(xs, ys, part)
    totals = members.sum(axis=0)
    return {name: int(totals[j]) for j, name in enumerate(REGIONS)}


def dimension_region_offset(i: int, d: int) -> tuple[str, int]:
    """Map a fused-vector index to its (region name, within-region offset)."""
    if not 0 <= i < len(REGIONS) * d:
        raise ValueError(f"dimension {i} out of range for d={d}")
    return REGIONS[i // d], i % d


@dataclass
class RegionStats:
    """Per-class mean keypoint counts per region over a corpus."""

    detector: str
    threshold: int
    n_real: int
    n_fake: int
    n_skipped: int
    means: dict[str, dict[str, float]] = field(default_factory=dict)


def aggregate_region_stats(
    per_face_counts,
    detector: str,
    threshold: int,
    n_skipped: int = 0,
) -> RegionStats:
    """Reduce per-face (label, counts) pairs to per-class means.

    ``per_face_counts`` yields (label, counts-mapping) in manifest order; the
    reduction is a plain sum so the order does not affect the result.
    """
    sums = {name: {"real": 0, "fake": 0} for name in REGIONS}
    n = {"real": 0, "fake": 0}
    for label, counts in per_face_counts:
        if label not in n:
            raise DataError(f"unknown label {label!r}")
        n[label] += 1
        for name in REGIONS:
            sums[name][label] += int(counts[name])
    means = {
        name: {
            label: (sums[name][label] / n[label] if n[label] else 0.0)
            for label in ("real", "fake")
        }
        for name in REGIONS
    }
    return RegionStats(
        detector=detector,
        threshold=threshold,
        n_real=n["real"],
        n_fake=n["fake"],
        n_skipped=n_skipped,
        means=means,
    )


def write_region_stats_csv(path: str, stats: RegionStats) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# detector={stats.detector} threshold={stats.threshold}\n")
        fh.write(
            f"# n_real={stats.n_real} n_fake={stats.n_fake}"
            f" n_skipped={stats.n_skipped}\n"
        )
        writer = csv.writer(fh)
        writer.writerow(["region", "real_mean", "fake_mean"])
        for name in REGIONS:
            writer.writerow(
                [name, repr(stats.means[name]["real"]), repr(stats.means[name]["fake"])]
            )


@dataclass
class DimensionDiff:
    """Per-dimension real-vs-fake mean and variance differences."""

    mean_diff: np.ndarray  # (8 * d,)
    var_diff: np.ndarray  # (8 * d,)
    d: int
    mode: str
    detector: str


def _class_matrix(vectors, what: str) -> tuple[np.ndarray, str, str, int]:
    vectors = list(vectors)
    if not vectors:
        raise DataError(f"no {what} vectors to compare")
    mode, detector, d = vectors[0].mode, vectors[0].detector, vectors[0].d
    for v in vectors:
        if (v.mode, v.d) != (mode, d):
            raise DataError(
                f"{what} vectors disagree on mode/d:"
                f" {(v.mode, v.d)} vs {(mode, d)}"
            )
    return np.stack([v.values for v in vectors]), mode, detector, d


def dimension_differences(real_vectors, fake_vectors) -> DimensionDiff:
    """mean_real − mean_fake and var_real − var_fake per dimension.

    Variances are population variances (divide by N).
    """
    real, mode_r, det, d = _class_matrix(real_vectors, "real")
    fake, mode_f, _, d_f = _class_matrix(fake_vectors, "fake")
    if (mode_r, d) != (mode_f, d_f):
        raise DataError(
            f"real/fake vectors disagree on mode/d:"
            f" {(mode_r, d)} vs {(mode_f, d_f)}"
        )
    mean_diff = real.mean(axis=0) - fake.mean(axis=0)
    var_diff = real.var(axis=0) - fake.var(axis=0)
    return DimensionDiff(
        mean_diff=mean_diff, var_diff=var_diff, d=d, mode=mode_r, detector=det
    )


def write_dimension_diff_csv(path: str, diff: DimensionDiff) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# detector={diff.detector} mode={diff.mode} d={diff.d}\n")
        writer = csv.writer(fh)
        writer.writerow(["dimension", "region", "offset", "mean_diff", "var_diff"])
        for i in range(len(diff.mean_diff)):
            region, offset = dimension_region_offset(i, diff.d)
            writer.writerow(
                [i, region, offset, repr(float(diff.mean_diff[i])), repr(float(diff.var_diff[i]))]
            )
