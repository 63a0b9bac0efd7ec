"""8-bit grayscale images: binary PGM I/O and Gaussian smoothing.

Images are plain ``numpy`` arrays of shape ``(height, width)`` and dtype
``uint8``. They are treated as immutable once loaded; every function here
returns a fresh array and never mutates its input.
"""

import numpy as np

from .errors import DataError

_WHITESPACE = b" \t\r\n\x0b\x0c"


def validate_image(img: np.ndarray) -> None:
    """Raise ``ValueError`` unless *img* is a 2-D uint8 array of size >= 1x1."""
    if not isinstance(img, np.ndarray) or img.ndim != 2:
        raise ValueError("image must be a 2-D numpy array")
    if img.dtype != np.uint8:
        raise ValueError(f"image dtype must be uint8, got {img.dtype}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError("image must be at least 1x1")


def _pgm_header_tokens(blob: bytes) -> tuple[list[bytes], int]:
    """Return the first four header tokens and the offset just past them.

    PGM headers are whitespace-separated tokens with optional ``#`` comments
    running to end of line.
    """
    tokens: list[bytes] = []
    i, n = 0, len(blob)
    while len(tokens) < 4 and i < n:
        c = blob[i : i + 1]
        if c in _WHITESPACE:
            i += 1
        elif c == b"#":
            nl = blob.find(b"\n", i)
            i = n if nl < 0 else nl + 1
        else:
            j = i
            while j < n and blob[j : j + 1] not in _WHITESPACE and blob[j : j + 1] != b"#":
                j += 1
            tokens.append(blob[i:j])
            i = j
    return tokens, i


def load_pgm(path: str) -> np.ndarray:
    """Read a binary PGM file (magic ``P5``, maxval 255) into a uint8 array.

    Raises ``DataError`` with a distinct message for: missing file, non-P5
    formats, malformed headers, unsupported maxval, and truncated payloads.
    """
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except FileNotFoundError:
        raise DataError(f"image file not found: {path}") from None
    except OSError as exc:
        raise DataError(f"cannot read image file {path}: {exc}") from None

    tokens, offset = _pgm_header_tokens(blob)
    if len(tokens) < 4:
        raise DataError(f"{path}: malformed PGM header (incomplete)")
    magic = tokens[0]
    if magic != b"P5":
        if magic in (b"P1", b"P2", b"P3", b"P4", b"P6"):
            raise DataError(f"{path}: unsupported format {magic.decode('ascii', 'replace')} (only binary P5 is accepted)")
        raise DataError(f"{path}: malformed PGM header (bad magic)")
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError:
        raise DataError(f"{path}: malformed PGM header (non-numeric field)") from None
    if width < 1 or height < 1:
        raise DataError(f"{path}: malformed PGM header (non-positive dimensions)")
    if maxval != 255:
        raise DataError(f"{path}: unsupported maxval {maxval} (must be 255)")
    # Exactly one whitespace byte separates the header from the payload.
    if offset >= len(blob) or blob[offset : offset + 1] not in _WHITESPACE:
        raise DataError(f"{path}: malformed PGM header (missing separator)")
    payload = blob[offset + 1 : offset + 1 + width * height]
    if len(payload) < width * height:
        raise DataError(f"{path}: truncated pixel payload (expected {width * height} bytes, got {len(payload)})")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()


def save_pgm(img: np.ndarray, path: str) -> None:
    """Write *img* as binary PGM (P5, maxval 255). Exact inverse of load_pgm."""
    validate_image(img)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(img.tobytes())
    except OSError as exc:
        raise DataError(f"cannot write image file {path}: {exc}") from None


def gaussian_kernel(sigma: float, kernel_size: int) -> np.ndarray:
    """1-D Gaussian taps of the given odd length, normalized to sum 1."""
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ValueError(f"kernel_size must be odd and >= 1, got {kernel_size}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    half = kernel_size // 2
    xs = np.arange(-half, half + 1, dtype=np.float64)
    w = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    return w / w.sum()


def smooth_float(src: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Both separable passes over a float64 array, edge-clamped borders."""
    half = len(taps) // 2
    h, wid = src.shape
    padded = np.pad(src, ((0, 0), (half, half)), mode="edge")
    horiz = np.zeros((h, wid), dtype=np.float64)
    for k in range(len(taps)):
        horiz += taps[k] * padded[:, k : k + wid]

    padded = np.pad(horiz, ((half, half), (0, 0)), mode="edge")
    out = np.zeros((h, wid), dtype=np.float64)
    for k in range(len(taps)):
        out += taps[k] * padded[k : k + h, :]
    return out


def gaussian_blur(img: np.ndarray, sigma: float = 2.0, kernel_size: int = 9) -> np.ndarray:
    """Separable Gaussian smoothing with edge-clamped borders.

    Both passes run in float64; the result is rounded half-up once at the
    end and clamped to [0, 255].
    """
    validate_image(img)
    w = gaussian_kernel(sigma, kernel_size)
    out = smooth_float(img.astype(np.float64), w)
    return np.clip(np.floor(out + 0.5), 0.0, 255.0).astype(np.uint8)
