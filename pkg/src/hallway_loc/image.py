"""Image container, binary PPM (P6) codec, and marker annotation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class PpmError(ValueError):
    """Base class for PPM codec failures."""


class PpmMagicError(PpmError):
    """Magic number is not P6."""


class PpmHeaderError(PpmError):
    """Header is malformed (bad dimensions or maxval)."""


class PpmTruncatedError(PpmError):
    """Pixel payload shorter than the header promises."""


@dataclass(frozen=True)
class PixelCoord:
    u: int
    v: int


@dataclass(frozen=True)
class RgbImage:
    """Linear RGB raster with channels in [0, 1], stored as (H, W, 3) float64."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 3 or d.shape[2] != 3 or d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError(f"expected (H, W, 3) array, got shape {d.shape}")
        if np.any(d < 0.0) or np.any(d > 1.0):
            raise ValueError("channel values must lie in [0, 1]")
        object.__setattr__(self, "data", d)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def contains(self, p: PixelCoord) -> bool:
        return 0 <= p.u < self.width and 0 <= p.v < self.height


def _read_header_tokens(buf: bytes, count: int, start: int):
    """Read whitespace/comment-separated ASCII tokens from a PNM header."""
    tokens = []
    i = start
    n = len(buf)
    while len(tokens) < count:
        while i < n and buf[i : i + 1].isspace():
            i += 1
        if i < n and buf[i] == ord("#"):
            while i < n and buf[i] != ord("\n"):
                i += 1
            continue
        j = i
        while j < n and not buf[j : j + 1].isspace():
            j += 1
        if j == i:
            raise PpmHeaderError("unexpected end of header")
        tokens.append(buf[i:j])
        i = j
    return tokens, i


def decode_ppm(data: bytes) -> RgbImage:
    """Decode a binary P6 PPM into an RgbImage with channels scaled to [0, 1]."""
    if len(data) < 2 or data[:2] != b"P6":
        magic = data[:2].decode("ascii", "replace") if data else ""
        raise PpmMagicError(f"unsupported magic number {magic!r}, expected P6")
    try:
        tokens, pos = _read_header_tokens(data, 3, 2)
        width, height, maxval = (int(t) for t in tokens)
    except (ValueError, PpmHeaderError) as e:
        raise PpmHeaderError(f"malformed P6 header: {e}") from e
    if width < 1 or height < 1:
        raise PpmHeaderError(f"invalid dimensions {width}x{height}")
    if not 1 <= maxval <= 65535:
        raise PpmHeaderError(f"maxval {maxval} outside [1, 65535]")
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise PpmHeaderError("missing whitespace after maxval")
    pos += 1
    nsamp = width * height * 3
    if maxval < 256:
        raw = np.frombuffer(data, dtype=np.uint8, count=-1, offset=pos)
        if raw.size < nsamp:
            raise PpmTruncatedError(
                f"raster has {raw.size} samples, need {nsamp}"
            )
        samples = raw[:nsamp].astype(np.float64)
    else:
        raw = data[pos:]
        if len(raw) < nsamp * 2:
            raise PpmTruncatedError(
                f"raster has {len(raw)} bytes, need {nsamp * 2}"
            )
        samples = np.frombuffer(raw, dtype=">u2", count=nsamp).astype(np.float64)
    arr = (samples / maxval).reshape(height, width, 3)
    return RgbImage(arr)


def encode_ppm(img: RgbImage) -> bytes:
    """Encode as binary P6 with maxval 255 (round-half-up quantization)."""
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    raster = np.floor(img.data * 255.0 + 0.5).astype(np.uint8)
    return header + raster.tobytes()


def annotate(
    img: RgbImage,
    markers: list[PixelCoord],
    radius: int = 3,
    color: tuple[float, float, float] = (1.0, 0.0, 0.0),
    shape: str = "cross",
) -> RgbImage:
    """Return a copy with a cross or square disc drawn at each marker.

    Only pixels within Chebyshev distance `radius` of a marker change.
    """
    if shape not in ("cross", "disc"):
        raise ValueError(f"unknown marker shape {shape!r}")
    for i, m in enumerate(markers):
        if not img.contains(m):
            raise ValueError(f"marker {i} at ({m.u}, {m.v}) is out of bounds")
    out = img.data.copy()
    col = np.asarray(color, dtype=np.float64)
    h, w = out.shape[:2]
    for m in markers:
        u0, u1 = max(0, m.u - radius), min(w - 1, m.u + radius)
        v0, v1 = max(0, m.v - radius), min(h - 1, m.v + radius)
        if shape == "disc":
            out[v0 : v1 + 1, u0 : u1 + 1] = col
        else:
            out[m.v, u0 : u1 + 1] = col
            out[v0 : v1 + 1, m.u] = col
    return RgbImage(out)
