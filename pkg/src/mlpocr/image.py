"""Grayscale raster I/O and binarization.

Rasters live in PGM (PNM) files, magic ``P2`` (ASCII) or ``P5`` (binary),
maxval at most 255.  ``#`` comment lines are accepted anywhere in the
header.  Writing is byte-exact: the header is always ``P2\\n<w> <h>\\n255\\n``
(or ``P5`` ditto) and ASCII output places one image row per line,
space-separated, so golden-file tests can compare bytes.

Binarization maps gray levels to {0, 1} with 0 = black ink and
1 = white background, either by a global Otsu threshold or by comparing
each pixel against its local window mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GrayRaster",
    "BinRaster",
    "ThresholdMethod",
    "PgmParseError",
    "load_pgm",
    "save_pgm",
    "otsu_threshold",
    "binarize",
]


class PgmParseError(ValueError):
    """Malformed PGM input; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


def _as_grid(values, width: int, height: int, what: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim == 1:
        if arr.size != width * height:
            raise ValueError(
                f"{what}: expected {width * height} values, got {arr.size}"
            )
        arr = arr.reshape(height, width)
    elif arr.shape != (height, width):
        raise ValueError(f"{what}: shape {arr.shape} != ({height}, {width})")
    return arr


@dataclass(frozen=True, eq=False)
class GrayRaster:
    """A width x height grid of 8-bit gray levels, row-major, top to bottom."""

    width: int
    height: int
    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("raster dimensions must be positive")
        arr = _as_grid(self.pixels, self.width, self.height, "GrayRaster")
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValueError("gray levels must be within [0, 255]")
        arr = arr.astype(np.uint8, copy=True)
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    def __eq__(self, other):
        if not isinstance(other, GrayRaster):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.pixels, other.pixels)
        )


@dataclass(frozen=True, eq=False)
class BinRaster:
    """A width x height grid over {0, 1}: 0 = black ink, 1 = white background."""

    width: int
    height: int
    bits: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("raster dimensions must be positive")
        arr = _as_grid(self.bits, self.width, self.height, "BinRaster")
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("bits must be exactly 0 or 1")
        arr = arr.astype(np.uint8, copy=True)
        arr.flags.writeable = False
        object.__setattr__(self, "bits", arr)

    def __eq__(self, other):
        if not isinstance(other, BinRaster):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.bits, other.bits)
        )


@dataclass(frozen=True)
class ThresholdMethod:
    """Binarization rule: global Otsu, or local mean over a window minus offset."""

    kind: str = "global-otsu"
    window: int = 15
    offset: int = 0

    KINDS = ("global-otsu", "local-mean")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown threshold kind {self.kind!r}")
        if self.kind == "local-mean" and (self.window < 3 or self.window % 2 == 0):
            raise ValueError("local-mean window must be odd and >= 3")

    @classmethod
    def otsu(cls) -> "ThresholdMethod":
        return cls("global-otsu")

    @classmethod
    def local_mean(cls, window: int, offset: int = 0) -> "ThresholdMethod":
        return cls("local-mean", window=window, offset=offset)


# --- PGM parsing -----------------------------------------------------------

_WHITESPACE = b" \t\n\r\x0b\x0c"


class _Scanner:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def fail(self, message: str) -> "PgmParseError":
        return PgmParseError(message, self.pos)

    def skip_space_and_comments(self):
        data = self.data
        while self.pos < len(data):
            b = data[self.pos : self.pos + 1]
            if b in (b"#",):
                nl = data.find(b"\n", self.pos)
                self.pos = len(data) if nl < 0 else nl + 1
            elif b and b in _WHITESPACE:
                self.pos += 1
            else:
                return

    def token(self, what: str) -> bytes:
        self.skip_space_and_comments()
        start = self.pos
        data = self.data
        while self.pos < len(data) and data[self.pos : self.pos + 1] not in _WHITESPACE:
            if data[self.pos : self.pos + 1] == b"#":
                break
            self.pos += 1
        if self.pos == start:
            raise PgmParseError(f"truncated header: missing {what}", start)
        return data[start : self.pos]

    def int_token(self, what: str) -> int:
        start = self.pos
        tok = self.token(what)
        try:
            return int(tok)
        except ValueError:
            raise PgmParseError(f"invalid {what} {tok!r}", start) from None


def load_pgm(data: bytes) -> GrayRaster:
    """Parse PGM bytes (magic P2 or P5, maxval <= 255) into a ``GrayRaster``.

    Pixel order is top-to-bottom, left-to-right.  Raises ``PgmParseError``
    with the offending byte offset on malformed input.
    """
    sc = _Scanner(data)
    magic = sc.token("magic")
    if magic not in (b"P2", b"P5"):
        raise PgmParseError(f"unsupported magic {magic!r}", 0)
    width = sc.int_token("width")
    height = sc.int_token("height")
    if width <= 0 or height <= 0:
        raise sc.fail(f"zero or negative dimension {width}x{height}")
    maxval = sc.int_token("maxval")
    if maxval <= 0 or maxval > 255:
        raise sc.fail(f"maxval {maxval} out of range [1, 255]")
    count = width * height

    if magic == b"P5":
        # Exactly one whitespace byte separates the header from the payload.
        if sc.pos >= len(data) or data[sc.pos : sc.pos + 1] not in _WHITESPACE:
            raise sc.fail("expected whitespace before binary payload")
        sc.pos += 1
        payload = data[sc.pos : sc.pos + count]
        if len(payload) < count:
            raise PgmParseError(
                f"truncated payload: expected {count} bytes, got {len(payload)}",
                len(data),
            )
        pixels = np.frombuffer(payload, dtype=np.uint8, count=count)
        return GrayRaster(width, height, pixels)

    values = np.empty(count, dtype=np.int64)
    for i in range(count):
        sc.skip_space_and_comments()
        if sc.pos >= len(data):
            raise PgmParseError(
                f"truncated payload: expected {count} pixels, got {i}", sc.pos
            )
        start = sc.pos
        v = sc.int_token("pixel")
        if v < 0 or v > 255:
            raise PgmParseError(f"pixel value {v} out of range [0, 255]", start)
        values[i] = v
    return GrayRaster(width, height, values)


def save_pgm(raster: GrayRaster, binary_flag: bool = False) -> bytes:
    """Serialize to PGM bytes: P5 when ``binary_flag`` else ASCII P2.

    The output round-trips exactly through :func:`load_pgm` for both flags.
    """
    header = f"{'P5' if binary_flag else 'P2'}\n{raster.width} {raster.height}\n255\n"
    if binary_flag:
        return header.encode("ascii") + raster.pixels.tobytes()
    rows = "\n".join(" ".join(str(int(v)) for v in row) for row in raster.pixels)
    return (header + rows + "\n").encode("ascii")


# --- thresholding ----------------------------------------------------------


def otsu_threshold(raster: GrayRaster) -> int:
    """Gray level t in [0, 254] maximizing between-class variance of the
    256-bin histogram over the split {<= t} vs {> t}; ties take the smallest t.

    A single-level (constant) image yields t = 254 so the page binarizes
    with no artificial ink block.
    """
    hist = np.bincount(raster.pixels.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    cum_n = np.cumsum(hist)[:255]  # pixels <= t for t = 0..254
    cum_s = np.cumsum(hist * np.arange(256))[:255]
    w0 = cum_n
    w1 = total - cum_n
    valid = (w0 > 0) & (w1 > 0)
    if not valid.any():
        return 254
    var = np.zeros(255)
    mu0 = np.divide(cum_s, w0, out=np.zeros(255), where=valid)
    mu1 = np.divide(cum_s[-1] + hist[255] * 255 - cum_s, w1, out=np.zeros(255), where=valid)
    var[valid] = w0[valid] * w1[valid] * (mu0[valid] - mu1[valid]) ** 2
    return int(np.argmax(var))


def _local_mean(pixels: np.ndarray, window: int) -> np.ndarray:
    # Mean over the window clipped to the image, via a padded integral image.
    h, w = pixels.shape
    r = window // 2
    ii = np.zeros((h + 1, w + 1), dtype=np.float64)
    ii[1:, 1:] = np.cumsum(np.cumsum(pixels, axis=0), axis=1)
    y0 = np.clip(np.arange(h) - r, 0, h)
    y1 = np.clip(np.arange(h) + r + 1, 0, h)
    x0 = np.clip(np.arange(w) - r, 0, w)
    x1 = np.clip(np.arange(w) + r + 1, 0, w)
    sums = ii[y1[:, None], x1[None, :]] - ii[y0[:, None], x1[None, :]] \
        - ii[y1[:, None], x0[None, :]] + ii[y0[:, None], x0[None, :]]
    areas = (y1 - y0)[:, None] * (x1 - x0)[None, :]
    return sums / areas


def binarize(raster: GrayRaster, method: ThresholdMethod | None = None) -> BinRaster:
    """Threshold a grayscale raster into a ``BinRaster``.

    global-otsu: pixel > t becomes 1 (white).  local-mean: pixel >
    (clipped-window mean) - offset becomes 1.  Dimensions are preserved.
    """
    if method is None:
        method = ThresholdMethod.otsu()
    pixels = raster.pixels.astype(np.float64)
    if method.kind == "global-otsu":
        bits = pixels > otsu_threshold(raster)
    else:
        bits = pixels > _local_mean(pixels, method.window) - method.offset
    return BinRaster(raster.width, raster.height, bits.astype(np.uint8))
