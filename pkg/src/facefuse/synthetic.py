"""Synthetic face corpus for tests and benchmarks.

Faces are sparse fields of small high-contrast dots — each dot is exactly
the center-versus-ring pattern the segment-test detector fires on, and a
sigma-2 blur pushes it below any usable threshold — plus an analytic
68-point landmark layout. "Fake" frames are made from real ones by
Gaussian-blurring the pixels inside the mouth and eye hulls, so localized
smoothing is the only difference between the classes and any separability
comes from the per-region keypoint deficit it causes.
"""

import math
import os

import numpy as np

from .dataio import ManifestRow, write_manifest
from .image import gaussian_kernel, save_pgm, smooth_float
from .regions import build_partition, points_in_polygon
from .regions import REGIONS  # noqa: F401  (re-exported for convenience)

BLUR_REGIONS = ("mouth", "right_eye", "left_eye")


def canonical_landmarks(size: int) -> np.ndarray:
    """A plausible 68-point layout scaled to a size x size crop."""
    pts = np.zeros((68, 2), dtype=np.float64)
    # jaw 0-16: lower semi-ellipse, temple to temple through the chin
    for k in range(17):
        phi = math.pi - k * math.pi / 16.0
        pts[k] = (0.5 + 0.40 * math.cos(phi), 0.48 + 0.42 * math.sin(phi))
    # eyebrows 17-21 / 22-26: shallow arcs (curved, never collinear)
    for i in range(5):
        t = i / 4.0
        lift = 0.045 * math.sin(math.pi * t)
        pts[17 + i] = (0.20 + 0.20 * t, 0.30 - lift)
        pts[22 + i] = (0.60 + 0.20 * t, 0.30 - lift)
    # nose 27-35: vertical bridge plus a flared base
    for i in range(4):
        pts[27 + i] = (0.5, 0.36 + 0.055 * i)
    for i in range(5):
        pts[31 + i] = (0.40 + 0.05 * i, 0.585 + 0.02 * (1.0 - abs(i - 2) / 2.0))
    # eyes 36-41 / 42-47: hexagons
    for e, cx in ((36, 0.34), (42, 0.66)):
        for i, deg in enumerate((180, 120, 60, 0, -60, -120)):
            a = math.radians(deg)
            pts[e + i] = (cx + 0.075 * math.cos(a), 0.40 - 0.035 * math.sin(a))
    # mouth: outer ellipse 48-59, inner ellipse 60-67
    for j in range(12):
        a = math.pi - j * (2.0 * math.pi / 12.0)
        pts[48 + j] = (0.5 + 0.15 * math.cos(a), 0.70 - 0.07 * math.sin(a))
    for j in range(8):
        a = math.pi - j * (2.0 * math.pi / 8.0)
        pts[60 + j] = (0.5 + 0.085 * math.cos(a), 0.70 - 0.03 * math.sin(a))
    return pts * (size - 1)


def textured_face(size: int, rng: np.random.Generator, params: tuple | None = None) -> np.ndarray:
    """Sparse field of plus-shaped bright/dark dots on mid-gray, plus noise.

    A 5-pixel dot sits well inside the detector's ring radius, so every dot
    is a corner, while a sigma-2 blur spreads its mass far enough that the
    contrast drops below any usable threshold. ``params`` (the dot layout)
    keeps a video's frames on the same underlying face.
    """
    if params is None:
        params = dot_layout(size, rng)
    ys, xs, amps = params
    img = np.full((size, size), 127.5)
    img[ys, xs] += amps
    img[ys - 1, xs] += amps
    img[ys + 1, xs] += amps
    img[ys, xs - 1] += amps
    img[ys, xs + 1] += amps
    img += rng.normal(0.0, 8.0, (size, size))
    return np.clip(img, 0, 255).astype(np.uint8)


def dot_layout(size: int, rng: np.random.Generator, step: int = 5) -> tuple:
    """Jittered-grid dot centers with random bright/dark amplitudes."""
    coords = np.arange(3, size - 3, step)
    gy, gx = np.meshgrid(coords, coords, indexing="ij")
    ys = (gy + rng.integers(-1, 2, gy.shape)).ravel()
    xs = (gx + rng.integers(-1, 2, gx.shape)).ravel()
    amps = rng.choice([-1.0, 1.0], ys.size) * rng.uniform(85.0, 115.0, ys.size)
    return ys, xs, amps


def blur_region_mask(landmarks: np.ndarray, size: int) -> np.ndarray:
    """Boolean mask of pixels inside the mouth or either eye hull."""
    part = build_partition(landmarks)
    yy, xx = np.indices((size, size))
    mask = np.zeros((size, size), dtype=bool)
    for name in BLUR_REGIONS:
        poly = part.polygons[name]
        mask |= points_in_polygon(poly, xx.ravel(), yy.ravel()).reshape(size, size)
    return mask


def make_fake(img: np.ndarray, landmarks: np.ndarray) -> np.ndarray:
    """Blend a sigma-2 blur of the frame into the mouth/eye regions.

    The blend weights are the hull mask smoothed with the same kernel, so
    the seam ramps over a few pixels instead of leaving a step edge that
    would add corners of its own outside the blurred regions.
    """
    taps = gaussian_kernel(2.0, 9)
    blurred = smooth_float(img.astype(np.float64), taps)
    mask = blur_region_mask(landmarks, img.shape[0])
    alpha = smooth_float(mask.astype(np.float64), taps)
    out = img.astype(np.float64) * (1.0 - alpha) + blurred * alpha
    return np.clip(np.floor(out + 0.5), 0.0, 255.0).astype(np.uint8)


def generate_corpus(
    out_dir: str,
    n_videos: int = 40,
    frames_per_video: int = 10,
    size: int = 128,
    seed: int = 42,
) -> str:
    """Write a video-grouped corpus and return the manifest path.

    Even-numbered videos are real, odd-numbered are fake, so classes stay
    balanced. Every video draws its own dot layout and landmark jitter, but
    the dot count is fixed by the grid, so video identity never encodes
    class through texture density. Every frame gets a PGM image and a
    landmark JSON; the manifest leaves all splits unassigned.
    """
    if n_videos < 2 or frames_per_video < 1:
        raise ValueError("need at least 2 videos and 1 frame per video")
    if size < 64:
        raise ValueError("faces below 64x64 leave no room for the descriptor margins")
    img_dir = os.path.join(out_dir, "images")
    lm_dir = os.path.join(out_dir, "landmarks")
    os.makedirs(img_dir, exist_ok=True)
    os.makedirs(lm_dir, exist_ok=True)

    from .regions import save_landmarks

    rng = np.random.default_rng(seed)
    rows: list[ManifestRow] = []
    base = canonical_landmarks(size)
    for v in range(n_videos):
        video_id = f"v{v:03d}"
        label = "real" if v % 2 == 0 else "fake"
        params = dot_layout(size, rng)
        landmarks = base + rng.normal(0.0, 0.75, base.shape)
        for f in range(frames_per_video):
            sample_id = f"{video_id}_f{f:02d}"
            img = textured_face(size, rng, params)
            if label == "fake":
                img = make_fake(img, landmarks)
            img_path = os.path.join(img_dir, sample_id + ".pgm")
            lm_path = os.path.join(lm_dir, sample_id + ".json")
            save_pgm(img, img_path)
            save_landmarks(lm_path, landmarks)
            rows.append(
                ManifestRow(
                    sample_id=sample_id,
                    image_path=img_path,
                    landmarks_path=lm_path,
                    label=label,
                    video_id=video_id,
                )
            )
    manifest_path = os.path.join(out_dir, "manifest.csv")
    write_manifest(manifest_path, rows)
    return manifest_path
