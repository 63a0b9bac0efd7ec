"""Corner detection and binary description.

Implements the segment-test corner detector (9 contiguous of 16 ring pixels),
its non-maximum suppression, randomized intensity-pair binary descriptors,
the Harris corner measure, intensity-centroid orientation, and the oriented
detector-descriptor combining all of them. Externally computed keypoints
(for descriptors this package does not implement) are ingested from a plain
text format, see ``ingest_keypoint_file``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .image import gaussian_blur, validate_image

# The 16-pixel Bresenham circle of radius 3 as (dx, dy), starting straight up
# and proceeding clockwise. Contiguity of arcs is defined along this order.
CIRCLE_OFFSETS = np.array(
    [
        (0, -3), (1, -3), (2, -2), (3, -1),
        (3, 0), (3, 1), (2, 2), (1, 3),
        (0, 3), (-1, 3), (-2, 2), (-3, 1),
        (-3, 0), (-3, -1), (-2, -2), (-1, -3),
    ],
    dtype=np.int64,
)

ARC_LENGTH = 9  # contiguous ring pixels required by the segment test
DEFAULT_PATTERN_SEED = 0x5DEEC6
DEFAULT_PATCH_SIZE = 31
ORIENTATION_BINS = 30
CENTROID_RADIUS = 15
# Rotated sampling offsets can reach ceil(15 * sqrt(2)) = 22 pixels out.
ORIENTED_PATCH_MARGIN = 22


@dataclass(frozen=True)
class Keypoint:
    """A detected corner: integer pixel position, response, orientation.

    ``orientation`` is in radians in [0, 2*pi) and stays 0.0 for detectors
    that do not assign one.
    """

    x: int
    y: int
    score: float = 0.0
    orientation: float = 0.0


@dataclass(frozen=True, eq=False)
class SamplingPattern:
    """Ordered intensity-comparison point pairs inside a square patch.

    ``pairs`` has shape (n_pairs, 2, 2): pair j compares patch offsets
    ``pairs[j, 0] = (ax, ay)`` and ``pairs[j, 1] = (bx, by)``. Offsets are
    drawn from an isotropic Gaussian (sigma = patch_size / 5), rounded to
    integers, and clamped to the patch; the same seed always regenerates
    the same pairs.
    """

    pairs: np.ndarray
    patch_size: int
    seed: int

    @property
    def n_pairs(self) -> int:
        return self.pairs.shape[0]

    @property
    def n_bytes(self) -> int:
        return self.pairs.shape[0] // 8

    @property
    def margin(self) -> int:
        """Minimum keypoint distance from every border for description."""
        return (self.patch_size - 1) // 2 + 1


def make_sampling_pattern(
    n_pairs: int = 256,
    patch_size: int = DEFAULT_PATCH_SIZE,
    seed: int = DEFAULT_PATTERN_SEED,
) -> SamplingPattern:
    if n_pairs < 8 or n_pairs % 8 != 0:
        raise ValueError(f"n_pairs must be a positive multiple of 8, got {n_pairs}")
    if patch_size < 3 or patch_size % 2 == 0:
        raise ValueError(f"patch_size must be odd and >= 3, got {patch_size}")
    half = (patch_size - 1) // 2
    rng = np.random.default_rng(seed)
    raw = rng.normal(0.0, patch_size / 5.0, size=(n_pairs, 2, 2))
    pairs = np.clip(np.rint(raw), -half, half).astype(np.int64)
    return SamplingPattern(pairs=pairs, patch_size=patch_size, seed=seed)


# ---------------------------------------------------------------------------
# Segment-test detection
# ---------------------------------------------------------------------------

def fast_score_map(img: np.ndarray) -> np.ndarray:
    """Per-pixel maximum threshold at which the segment test still passes.

    Returns an int32 map of the full image shape. A pixel passes the test at
    threshold t iff ``map[y, x] >= t``; border pixels (within 3 of an edge)
    and pixels that fail at t=1 carry values <= 0.
    """
    validate_image(img)
    h, w = img.shape
    if h < 7 or w < 7:
        raise ValueError(f"image must be at least 7x7 for ring detection, got {h}x{w}")
    center = img[3 : h - 3, 3 : w - 3].astype(np.int32)
    planes = [
        img[3 + dy : h - 3 + dy, 3 + dx : w - 3 + dx].astype(np.int32)
        for dx, dy in CIRCLE_OFFSETS
    ]
    # For an arc starting at ring index k: the largest t with all arc pixels
    # > center + t is (min over arc) - center - 1; for all < center - t it is
    # center - (max over arc) - 1. The score is the best over arcs/polarities.
    arc_mins = [
        np.minimum.reduce([planes[(k + i) % 16] for i in range(ARC_LENGTH)])
        for k in range(16)
    ]
    arc_maxs = [
        np.maximum.reduce([planes[(k + i) % 16] for i in range(ARC_LENGTH)])
        for k in range(16)
    ]
    bright = np.maximum.reduce(arc_mins) - center - 1
    dark = center - np.minimum.reduce(arc_maxs) - 1
    out = np.full((h, w), np.iinfo(np.int32).min, dtype=np.int32)
    out[3 : h - 3, 3 : w - 3] = np.maximum(bright, dark)
    return out


def _nms_keep_mask(scores: np.ndarray, detected: np.ndarray) -> np.ndarray:
    """3x3 non-maximum suppression with lexicographic (y, x) tie-breaking.

    A detected pixel survives iff its score is strictly greater than every
    8-neighbor's, except that against neighbors at lexicographically larger
    (y, x) positions a tie is allowed — so of any tied adjacent pair only
    the lexicographically smallest survives.
    """
    s = np.where(detected, scores, -1).astype(np.int64)
    padded = np.pad(s, 1, constant_values=-2)
    h, w = s.shape
    keep = detected.copy()
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            nb = padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
            if (dy, dx) < (0, 0):
                keep &= s > nb
            else:
                keep &= s >= nb
    return keep


def fast_detect(img: np.ndarray, threshold: int = 20, use_nms: bool = True) -> list[Keypoint]:
    """Segment-test corners: >= 9 contiguous of the 16 ring pixels all
    brighter than center + threshold or all darker than center - threshold.

    Each keypoint's score is the maximum threshold at which it still passes.
    With ``use_nms`` only 3x3-local maxima are kept (ties resolved toward
    the smallest (y, x)). Results are in row-major (y, x) order.
    """
    if not 1 <= threshold <= 254:
        raise ValueError(f"threshold must be in [1, 254], got {threshold}")
    smap = fast_score_map(img)
    detected = smap >= threshold
    if use_nms:
        detected = _nms_keep_mask(smap, detected)
    ys, xs = np.nonzero(detected)
    return [
        Keypoint(x=int(x), y=int(y), score=float(smap[y, x]))
        for y, x in zip(ys, xs)
    ]


def fast_passes(img: np.ndarray, x: int, y: int, threshold: int) -> bool:
    """Scalar segment test at one pixel (short-circuits on the compass pixels).

    Any 9-long arc of the 16-ring must contain at least two of the four
    compass points (ring indices 0, 4, 8, 12), so fewer than two bright and
    fewer than two dark compass pixels rejects without the full scan.
    """
    h, w = img.shape
    if not (3 <= x < w - 3 and 3 <= y < h - 3):
        return False
    c = int(img[y, x])
    ring = img[y + CIRCLE_OFFSETS[:, 1], x + CIRCLE_OFFSETS[:, 0]].astype(np.int64)
    hi = c + threshold
    lo = c - threshold
    compass = ring[[0, 4, 8, 12]]
    n_bright = int((compass > hi).sum())
    n_dark = int((compass < lo).sum())
    if n_bright < 2 and n_dark < 2:
        return False
    for mask in ((ring > hi), (ring < lo)):
        doubled = np.concatenate([mask, mask])
        run = 0
        for v in doubled:
            run = run + 1 if v else 0
            if run >= ARC_LENGTH:
                return True
    return False


def fast_score(img: np.ndarray, x: int, y: int, threshold: int) -> int:
    """Maximum threshold t* >= threshold at which the segment test passes.

    Binary search over t; the caller must pass a pixel that passes at
    ``threshold`` (checked).
    """
    if not fast_passes(img, x, y, threshold):
        raise ValueError(f"pixel ({x}, {y}) does not pass the segment test at threshold {threshold}")
    lo, hi = threshold, 254
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if fast_passes(img, x, y, mid):
            lo = mid
        else:
            hi = mid - 1
    return lo


# ---------------------------------------------------------------------------
# Binary description
# ---------------------------------------------------------------------------

def _check_describe_margin(shape: tuple[int, int], x: int, y: int, margin: int) -> bool:
    h, w = shape
    return margin <= x <= w - 1 - margin and margin <= y <= h - 1 - margin


def brief_describe(smoothed: np.ndarray, kp: Keypoint, pattern: SamplingPattern) -> np.ndarray:
    """Binary descriptor of a keypoint on a pre-smoothed image.

    Bit j is 1 iff intensity at kp + pair_j[0] is strictly less than at
    kp + pair_j[1]; ties give 0. Bits are packed least-significant-first
    into ``n_pairs / 8`` bytes (uint8 array).
    """
    if not _check_describe_margin(smoothed.shape, kp.x, kp.y, pattern.margin):
        raise ValueError(
            f"keypoint ({kp.x}, {kp.y}) is within {pattern.margin} pixels of the border"
        )
    a = pattern.pairs[:, 0]
    b = pattern.pairs[:, 1]
    va = smoothed[kp.y + a[:, 1], kp.x + a[:, 0]]
    vb = smoothed[kp.y + b[:, 1], kp.x + b[:, 0]]
    return np.packbits(va < vb, bitorder="little")


def brief_describe_batch(
    smoothed: np.ndarray, kps: list[Keypoint], pattern: SamplingPattern
) -> np.ndarray:
    """Vectorized ``brief_describe`` over many keypoints -> (n, d) uint8.

    All keypoints must satisfy the border margin (callers filter first).
    """
    if not kps:
        return np.zeros((0, pattern.n_bytes), dtype=np.uint8)
    xs = np.array([kp.x for kp in kps], dtype=np.int64)
    ys = np.array([kp.y for kp in kps], dtype=np.int64)
    if not (
        (xs >= pattern.margin).all()
        and (ys >= pattern.margin).all()
        and (xs <= smoothed.shape[1] - 1 - pattern.margin).all()
        and (ys <= smoothed.shape[0] - 1 - pattern.margin).all()
    ):
        raise ValueError("a keypoint violates the description border margin")
    a = pattern.pairs[:, 0]
    b = pattern.pairs[:, 1]
    va = smoothed[ys[:, None] + a[None, :, 1], xs[:, None] + a[None, :, 0]]
    vb = smoothed[ys[:, None] + b[None, :, 1], xs[:, None] + b[None, :, 0]]
    return np.packbits(va < vb, axis=1, bitorder="little")


def filter_describable(kps: list[Keypoint], shape: tuple[int, int], margin: int) -> tuple[list[Keypoint], int]:
    """Split keypoints into (describable, dropped_count) for a border margin."""
    kept = [kp for kp in kps if _check_describe_margin(shape, kp.x, kp.y, margin)]
    return kept, len(kps) - len(kept)


# ---------------------------------------------------------------------------
# Harris measure and orientation
# ---------------------------------------------------------------------------

def harris_response(img: np.ndarray, x: int, y: int, block: int = 7) -> float:
    """det(M) - 0.04 * trace(M)^2 of the structure tensor over a block window.

    Gradients are central differences; window weighting is uniform. The
    window plus its 1-pixel gradient halo must fit inside the image.
    """
    if block < 3 or block % 2 == 0:
        raise ValueError(f"block must be odd and >= 3, got {block}")
    r = block // 2
    h, w = img.shape
    if not (r + 1 <= x < w - r - 1 and r + 1 <= y < h - r - 1):
        raise ValueError(f"harris window at ({x}, {y}) falls outside the image")
    win = img[y - r - 1 : y + r + 2, x - r - 1 : x + r + 2].astype(np.float64)
    ix = (win[1:-1, 2:] - win[1:-1, :-2]) / 2.0
    iy = (win[2:, 1:-1] - win[:-2, 1:-1]) / 2.0
    a = float((ix * ix).sum())
    b = float((ix * iy).sum())
    c = float((iy * iy).sum())
    return a * c - b * b - 0.04 * (a + c) ** 2


_disc_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _disc_offsets(radius: int) -> tuple[np.ndarray, np.ndarray]:
    if radius not in _disc_cache:
        span = np.arange(-radius, radius + 1, dtype=np.int64)
        dx, dy = np.meshgrid(span, span)
        inside = dx * dx + dy * dy <= radius * radius
        _disc_cache[radius] = (dx[inside], dy[inside])
    return _disc_cache[radius]


def intensity_centroid_orientation(img: np.ndarray, kp: Keypoint, radius: int = CENTROID_RADIUS) -> float:
    """atan2 of the first image moments over a disc, mapped to [0, 2*pi).

    theta = atan2(m01, m10) with mpq = sum(dx^p * dy^q * I) over the disc
    centered at the keypoint. A fully symmetric patch yields 0.0.
    """
    h, w = img.shape
    if not (radius <= kp.x < w - radius and radius <= kp.y < h - radius):
        raise ValueError(f"centroid disc at ({kp.x}, {kp.y}) falls outside the image")
    dx, dy = _disc_offsets(radius)
    vals = img[kp.y + dy, kp.x + dx].astype(np.float64)
    m10 = float((dx * vals).sum())
    m01 = float((dy * vals).sum())
    theta = math.atan2(m01, m10)
    if theta < 0.0:
        theta += 2.0 * math.pi
    return theta


def rotate_pattern_offsets(pattern: SamplingPattern, angle: float) -> np.ndarray:
    """Pattern offsets rotated by *angle*, rounded to integer pixels."""
    cos_a = math.cos(angle)
    sin_a = math.sin(angle)
    px = pattern.pairs[..., 0].astype(np.float64)
    py = pattern.pairs[..., 1].astype(np.float64)
    rx = np.rint(px * cos_a - py * sin_a).astype(np.int64)
    ry = np.rint(px * sin_a + py * cos_a).astype(np.int64)
    return np.stack([rx, ry], axis=-1)


def _orb_detect_describe_impl(
    img: np.ndarray,
    n_top: int,
    threshold: int,
    pattern: SamplingPattern,
    sigma: float,
    kernel_size: int,
) -> tuple[list[tuple[Keypoint, np.ndarray]], int]:
    """Returns (oriented keypoint/descriptor pairs, count dropped at borders)."""
    if n_top < 1:
        raise ValueError(f"n_top must be >= 1, got {n_top}")
    corners = fast_detect(img, threshold, use_nms=True)
    cands, dropped = filter_describable(corners, img.shape, ORIENTED_PATCH_MARGIN)
    ranked = sorted(
        cands,
        key=lambda kp: (-harris_response(img, kp.x, kp.y), kp.y, kp.x),
    )[:n_top]
    if not ranked:
        return [], dropped

    smoothed = gaussian_blur(img, sigma, kernel_size)
    bin_width = 2.0 * math.pi / ORIENTATION_BINS
    binned: list[tuple[Keypoint, int]] = []
    for kp in ranked:
        theta = intensity_centroid_orientation(img, kp)
        b = int(round(theta / bin_width)) % ORIENTATION_BINS
        oriented = Keypoint(
            x=kp.x,
            y=kp.y,
            score=harris_response(img, kp.x, kp.y),
            orientation=b * bin_width,
        )
        binned.append((oriented, b))

    # Describe per orientation bin so each rotated pattern is gathered once.
    descs: dict[int, np.ndarray] = {}
    by_bin: dict[int, list[int]] = {}
    for i, (_, b) in enumerate(binned):
        by_bin.setdefault(b, []).append(i)
    out_desc = [None] * len(binned)
    for b, idxs in by_bin.items():
        rot = rotate_pattern_offsets(pattern, b * bin_width)
        xs = np.array([binned[i][0].x for i in idxs], dtype=np.int64)
        ys = np.array([binned[i][0].y for i in idxs], dtype=np.int64)
        va = smoothed[ys[:, None] + rot[None, :, 0, 1], xs[:, None] + rot[None, :, 0, 0]]
        vb = smoothed[ys[:, None] + rot[None, :, 1, 1], xs[:, None] + rot[None, :, 1, 0]]
        packed = np.packbits(va < vb, axis=1, bitorder="little")
        for row, i in enumerate(idxs):
            out_desc[i] = packed[row]
    return [(kp, out_desc[i]) for i, (kp, _) in enumerate(binned)], dropped


def orb_detect_describe(
    img: np.ndarray,
    n_top: int = 500,
    threshold: int = 20,
    pattern: SamplingPattern | None = None,
    sigma: float = 2.0,
    kernel_size: int = 9,
) -> list[tuple[Keypoint, np.ndarray]]:
    """Oriented corner detection and description.

    Segment-test corners (with NMS) are ranked by Harris response (ties by
    (y, x)), the top ``n_top`` are kept, each gets an intensity-centroid
    orientation discretized to 30 angular bins, and is described with the
    sampling pattern rotated by the binned angle on the smoothed image.
    """
    if pattern is None:
        pattern = make_sampling_pattern()
    pairs, _ = _orb_detect_describe_impl(img, n_top, threshold, pattern, sigma, kernel_size)
    return pairs


def fast_brief_detect_describe(
    img: np.ndarray,
    threshold: int = 20,
    pattern: SamplingPattern | None = None,
    sigma: float = 2.0,
    kernel_size: int = 9,
) -> tuple[list[tuple[Keypoint, np.ndarray]], int]:
    """Unoriented detect-and-describe: segment-test corners + pattern bits.

    Returns (pairs, dropped) where dropped counts corners rejected for being
    too close to the border to describe.
    """
    if pattern is None:
        pattern = make_sampling_pattern()
    corners = fast_detect(img, threshold, use_nms=True)
    kept, dropped = filter_describable(corners, img.shape, pattern.margin)
    smoothed = gaussian_blur(img, sigma, kernel_size)
    descs = brief_describe_batch(smoothed, kept, pattern)
    return list(zip(kept, descs)), dropped


# ---------------------------------------------------------------------------
# External keypoint files
# ---------------------------------------------------------------------------

@dataclass
class KeypointFile:
    """Keypoints plus real-valued descriptors computed by an external tool."""

    detector: str
    d: int
    entries: list[tuple[Keypoint, np.ndarray]]


def ingest_keypoint_file(path: str) -> KeypointFile:
    """Parse the external keypoint text format.

    Header line: ``detector=<name> d=<int>``; then one row per keypoint:
    ``x y score orientation v0 ... v{d-1}`` (space-separated decimals).
    Fractional keypoint coordinates are rounded to the nearest pixel.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except FileNotFoundError:
        raise DataError(f"keypoint file not found: {path}") from None
    except OSError as exc:
        raise DataError(f"cannot read keypoint file {path}: {exc}") from None
    if not lines:
        raise DataError(f"{path}: empty keypoint file")
    head = lines[0].split()
    if len(head) != 2 or not head[0].startswith("detector=") or not head[1].startswith("d="):
        raise DataError(f"{path}: malformed keypoint header {lines[0]!r}")
    detector = head[0][len("detector="):]
    if not detector:
        raise DataError(f"{path}: empty detector name in header")
    try:
        d = int(head[1][len("d="):])
    except ValueError:
        raise DataError(f"{path}: non-integer descriptor dimension in header") from None
    if d < 1:
        raise DataError(f"{path}: descriptor dimension must be >= 1, got {d}")

    entries: list[tuple[Keypoint, np.ndarray]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4 + d:
            raise DataError(
                f"{path}: line {lineno}: expected {4 + d} values, got {len(parts)}"
            )
        try:
            values = [float(p) for p in parts]
        except ValueError:
            raise DataError(f"{path}: line {lineno}: non-numeric value") from None
        kp = Keypoint(
            x=int(round(values[0])),
            y=int(round(values[1])),
            score=values[2],
            orientation=values[3],
        )
        entries.append((kp, np.array(values[4:], dtype=np.float64)))
    return KeypointFile(detector=detector, d=d, entries=entries)


def write_keypoint_file(path: str, detector: str, d: int, entries: list[tuple[Keypoint, np.ndarray]]) -> None:
    """Inverse of ``ingest_keypoint_file`` (reals in round-trip decimal)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"detector={detector} d={d}\n")
        for kp, desc in entries:
            if len(desc) != d:
                raise ValueError(f"descriptor length {len(desc)} does not match d={d}")
            vals = " ".join(repr(float(v)) for v in desc)
            fh.write(f"{kp.x} {kp.y} {repr(float(kp.score))} {repr(float(kp.orientation))} {vals}\n")
