"""Facial regions from 68-point landmarks.

The eight canonical regions, in the fixed order used for every concatenated
feature vector:

    entire_face, mouth, inner_mouth, right_eyebrow, left_eyebrow,
    right_eye, left_eye, nose

``entire_face`` covers every keypoint in the image; the other seven are the
convex hulls of fixed landmark index ranges (0-indexed, standard 68-point
layout). Membership is boundary-inclusive.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .features import Keypoint

log = logging.getLogger(__name__)

N_LANDMARKS = 68

REGIONS = (
    "entire_face",
    "mouth",
    "inner_mouth",
    "right_eyebrow",
    "left_eyebrow",
    "right_eye",
    "left_eye",
    "nose",
)

# 0-indexed landmark spans (start, stop) per polygonal region.
LANDMARK_SPANS = {
    "mouth": (48, 68),
    "inner_mouth": (60, 68),
    "right_eyebrow": (17, 22),
    "left_eyebrow": (22, 27),
    "right_eye": (36, 42),
    "left_eye": (42, 48),
    "nose": (27, 36),
}


def load_landmarks(path: str) -> np.ndarray:
    """Read a landmark JSON file -> (68, 2) float64 array.

    Format: ``{"points": [[x, y], ...]}`` with exactly 68 finite pairs.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"landmark file not found: {path}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot parse landmark file {path}: {exc}") from None
    if not isinstance(payload, dict) or "points" not in payload:
        raise DataError(f"{path}: landmark file must be an object with a 'points' key")
    points = payload["points"]
    if not isinstance(points, list) or len(points) != N_LANDMARKS:
        n = len(points) if isinstance(points, list) else "non-list"
        raise DataError(f"{path}: expected {N_LANDMARKS} points, got {n}")
    try:
        arr = np.array(points, dtype=np.float64)
    except (TypeError, ValueError):
        raise DataError(f"{path}: non-numeric landmark entry") from None
    if arr.shape != (N_LANDMARKS, 2):
        raise DataError(f"{path}: every landmark must be a two-element [x, y] pair")
    if not np.isfinite(arr).all():
        raise DataError(f"{path}: landmark coordinates must be finite")
    return arr


def save_landmarks(path: str, points: np.ndarray) -> None:
    """Inverse of ``load_landmarks``."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.shape != (N_LANDMARKS, 2) or not np.isfinite(arr).all():
        raise ValueError(f"landmarks must be a finite ({N_LANDMARKS}, 2) array")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"points": [[float(x), float(y)] for x, y in arr]}, fh)


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Convex hull by monotone chain, counterclockwise, no collinear vertices.

    Degenerate inputs collapse: collinear points return the two extreme
    points; coincident points return a single point.
    """
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if len(pts) <= 2:
        return pts
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) == 2 and np.array_equal(hull[0], hull[1]):
        return np.array(hull[:1])
    return np.array(hull)


@dataclass
class RegionPartition:
    """Hulls for the seven polygonal regions.

    ``polygons[name]`` is a counterclockwise vertex array; 2 vertices mean a
    degenerate (zero-area) segment whose membership rule is exact incidence.
    ``None`` marks a region whose landmarks all coincide (flagged empty).
    """

    polygons: dict[str, np.ndarray | None]


def build_partition(landmarks: np.ndarray) -> RegionPartition:
    """Hulls of the landmark index spans for each polygonal region."""
    arr = np.asarray(landmarks, dtype=np.float64)
    if arr.shape != (N_LANDMARKS, 2):
        raise ValueError(f"landmarks must have shape ({N_LANDMARKS}, 2), got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("landmark coordinates must be finite")
    polygons: dict[str, np.ndarray | None] = {}
    for name, (start, stop) in LANDMARK_SPANS.items():
        hull = convex_hull(arr[start:stop])
        polygons[name] = None if len(hull) < 2 else hull
    part = RegionPartition(polygons=polygons)
    check_inner_mouth_containment(polygons)
    return part


def check_inner_mouth_containment(polygons: dict) -> bool:
    """Warn (and return False) if the inner-mouth hull escapes the mouth hull.

    With hulls built from the standard index spans the inner-mouth points are
    a subset of the mouth points, so containment holds automatically; this is
    a defensive validation for partitions assembled by other means.
    """
    inner = polygons.get("inner_mouth")
    mouth = polygons.get("mouth")
    if inner is None or mouth is None:
        return True
    if all(point_in_polygon(mouth, float(x), float(y)) for x, y in inner):
        return True
    log.warning("inner_mouth hull is not contained in the mouth hull")
    return False


def point_in_polygon(poly: np.ndarray | None, x: float, y: float) -> bool:
    """Boundary-inclusive membership for a convex counterclockwise polygon.

    Handles degenerate hulls: a 2-vertex segment matches only points exactly
    on it; ``None``/single-vertex regions match nothing.
    """
    if poly is None or len(poly) < 2:
        return False
    if len(poly) == 2:
        (x1, y1), (x2, y2) = poly
        cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
        return (
            cross == 0.0
            and min(x1, x2) <= x <= max(x1, x2)
            and min(y1, y2) <= y <= max(y1, y2)
        )
    n = len(poly)
    for i in range(n):
        ox, oy = poly[i]
        ax, ay = poly[(i + 1) % n]
        if (ax - ox) * (y - oy) - (ay - oy) * (x - ox) < 0.0:
            return False
    return True


def points_in_polygon(poly: np.ndarray | None, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorized ``point_in_polygon`` over coordinate arrays."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if poly is None or len(poly) < 2:
        return np.zeros(xs.shape, dtype=bool)
    if len(poly) == 2:
        (x1, y1), (x2, y2) = poly
        cross = (x2 - x1) * (ys - y1) - (y2 - y1) * (xs - x1)
        return (
            (cross == 0.0)
            & (xs >= min(x1, x2))
            & (xs <= max(x1, x2))
            & (ys >= min(y1, y2))
            & (ys <= max(y1, y2))
        )
    inside = np.ones(xs.shape, dtype=bool)
    n = len(poly)
    for i in range(n):
        ox, oy = poly[i]
        ax, ay = poly[(i + 1) % n]
        inside &= (ax - ox) * (ys - oy) - (ay - oy) * (xs - ox) >= 0.0
    return inside


def membership_matrix(xs: np.ndarray, ys: np.ndarray, part: RegionPartition) -> np.ndarray:
    """(n, 8) boolean membership in canonical region order.

    Column 0 (entire_face) is always true.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    out = np.zeros((len(xs), len(REGIONS)), dtype=bool)
    out[:, 0] = True
    for j, name in enumerate(REGIONS[1:], start=1):
        out[:, j] = points_in_polygon(part.polygons[name], xs, ys)
    return out


def assign_regions(kp: Keypoint, part: RegionPartition) -> set[str]:
    """Names of every region containing the keypoint (always entire_face)."""
    out = {"entire_face"}
    for name in REGIONS[1:]:
        if point_in_polygon(part.polygons[name], float(kp.x), float(kp.y)):
            out.add(name)
    return out
