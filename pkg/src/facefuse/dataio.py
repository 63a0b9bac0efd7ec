"""CSV formats: dataset manifests and extracted feature tables.

Manifest CSV header:
    sample_id,image_path,landmarks_path,label,video_id,split

Feature table CSV header:
    sample_id,label,video_id,split,detector,mode,d,f0,...,f{8d-1}

Labels are ``real``/``fake``; splits are ``train``/``test``/``unassigned``.
Feature values are written in round-trip decimal so re-reading is exact.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError

LABELS = ("real", "fake")
SPLITS = ("train", "test", "unassigned")

MANIFEST_HEADER = ["sample_id", "image_path", "landmarks_path", "label", "video_id", "split"]
FEATURE_META_HEADER = ["sample_id", "label", "video_id", "split", "detector", "mode", "d"]


@dataclass
class ManifestRow:
    sample_id: str
    image_path: str
    landmarks_path: str
    label: str
    video_id: str
    split: str = "unassigned"


@dataclass
class FeatureRow:
    sample_id: str
    label: str
    video_id: str
    split: str
    detector: str
    mode: str
    d: int
    values: np.ndarray  # (8 * d,) float64


def read_manifest(path: str) -> list[ManifestRow]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except FileNotFoundError:
        raise DataError(f"manifest not found: {path}") from None
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: empty manifest file")
    if rows[0] != MANIFEST_HEADER:
        raise DataError(f"{path}: manifest header must be {','.join(MANIFEST_HEADER)}")
    out: list[ManifestRow] = []
    seen: set[str] = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(MANIFEST_HEADER):
            raise DataError(f"{path}: line {lineno}: expected {len(MANIFEST_HEADER)} fields")
        rec = ManifestRow(*row)
        if rec.sample_id in seen:
            raise DataError(f"{path}: line {lineno}: duplicate sample_id {rec.sample_id!r}")
        seen.add(rec.sample_id)
        if rec.label not in LABELS:
            raise DataError(f"{path}: line {lineno}: label must be one of {LABELS}, got {rec.label!r}")
        if rec.split not in SPLITS:
            raise DataError(f"{path}: line {lineno}: split must be one of {SPLITS}, got {rec.split!r}")
        out.append(rec)
    if not out:
        raise DataError(f"{path}: manifest has no data rows")
    return out


def write_manifest(path: str, rows: list[ManifestRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for r in rows:
            writer.writerow([r.sample_id, r.image_path, r.landmarks_path, r.label, r.video_id, r.split])


def write_feature_table(path: str, rows: list[FeatureRow]) -> None:
    """All rows must share (detector, mode, d); values length must be 8*d."""
    if not rows:
        raise DataError("refusing to write an empty feature table")
    detector, mode, d = rows[0].detector, rows[0].mode, rows[0].d
    for r in rows:
        if (r.detector, r.mode, r.d) != (detector, mode, d):
            raise DataError(
                f"feature rows disagree: ({r.detector}, {r.mode}, d={r.d}) vs ({detector}, {mode}, d={d})"
            )
        if len(r.values) != 8 * d:
            raise DataError(f"sample {r.sample_id}: expected {8 * d} values, got {len(r.values)}")
    header = FEATURE_META_HEADER + [f"f{i}" for i in range(8 * d)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in rows:
            meta = [r.sample_id, r.label, r.video_id, r.split, r.detector, r.mode, str(r.d)]
            writer.writerow(meta + [repr(float(v)) for v in r.values])


def read_feature_table(path: str) -> list[FeatureRow]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except FileNotFoundError:
        raise DataError(f"feature table not found: {path}") from None
    except OSError as exc:
        raise DataError(f"cannot read feature table {path}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: empty feature table")
    header = rows[0]
    if header[: len(FEATURE_META_HEADER)] != FEATURE_META_HEADER:
        raise DataError(f"{path}: feature table header must start with {','.join(FEATURE_META_HEADER)}")
    out: list[FeatureRow] = []
    expected = None
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
        sample_id, label, video_id, split, detector, mode, d_str = row[:7]
        if label not in LABELS:
            raise DataError(f"{path}: line {lineno}: bad label {label!r}")
        if split not in SPLITS:
            raise DataError(f"{path}: line {lineno}: bad split {split!r}")
        try:
            d = int(d_str)
            values = np.array([float(v) for v in row[7:]], dtype=np.float64)
        except ValueError:
            raise DataError(f"{path}: line {lineno}: non-numeric value") from None
        if len(values) != 8 * d:
            raise DataError(f"{path}: line {lineno}: expected {8 * d} feature values, got {len(values)}")
        if expected is None:
            expected = (detector, mode, d)
            if len(header) != len(FEATURE_META_HEADER) + 8 * d:
                raise DataError(f"{path}: header declares {len(header) - 7} feature columns but d={d}")
        elif (detector, mode, d) != expected:
            raise DataError(
                f"{path}: line {lineno}: mixed feature origins "
                f"({detector}, {mode}, d={d}) vs ({expected[0]}, {expected[1]}, d={expected[2]})"
            )
        out.append(FeatureRow(sample_id, label, video_id, split, detector, mode, d, values))
    if not out:
        raise DataError(f"{path}: feature table has no data rows")
    return out
