"""PPM image I/O and the circular sky mask.

Images are held as ``(height, width, 3)`` uint8 arrays, so iterating over
``pixels.reshape(-1, 3)`` walks the image in row-major order.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    IoFailure,
    MalformedHeader,
    TruncatedPixelData,
    UnsupportedMaxval,
)


@dataclass(frozen=True, eq=False)
class ImageRGB:
    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.shape != (self.height, self.width, 3):
            raise DimensionMismatch(
                f"pixel array shape {px.shape} != ({self.height}, {self.width}, 3)")
        if px.dtype != np.uint8:
            if px.size and (px.min() < 0 or px.max() > 255):
                raise ValueError("channel values must lie in [0, 255]")
            px = px.astype(np.uint8)
        px = np.array(px, dtype=np.uint8, copy=True)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_array(cls, array) -> "ImageRGB":
        array = np.asarray(array)
        return cls(array.shape[1], array.shape[0], array)

    def __eq__(self, other):
        if not isinstance(other, ImageRGB):
            return NotImplemented
        return (self.width == other.width and self.height == other.height
                and np.array_equal(self.pixels, other.pixels))


@dataclass(frozen=True)
class SkyMask:
    """Which pixels of a ``width`` x ``height`` frame belong to the sky.

    ``kind="none"`` keeps everything; ``kind="circular"`` keeps pixel (x, y)
    iff ``(x - center_x)**2 + (y - center_y)**2 <= radius**2``.
    """

    width: int
    height: int
    kind: str = "circular"
    center_x: float = field(default=None)
    center_y: float = field(default=None)
    radius: float = field(default=None)

    def __post_init__(self):
        if self.kind not in ("none", "circular"):
            raise ValueError(f"unknown mask kind {self.kind!r}")
        if self.center_x is None:
            object.__setattr__(self, "center_x", self.width / 2)
        if self.center_y is None:
            object.__setattr__(self, "center_y", self.height / 2)
        if self.radius is None:
            object.__setattr__(self, "radius", min(self.width, self.height) / 2)

    @classmethod
    def none(cls, width: int, height: int) -> "SkyMask":
        return cls(width, height, kind="none")

    def visible(self) -> np.ndarray:
        """Boolean ``(height, width)`` array, True where the sky shows."""
        if self.kind == "none":
            return np.ones((self.height, self.width), dtype=bool)
        y, x = np.mgrid[:self.height, :self.width]
        dx = x - self.center_x
        dy = y - self.center_y
        return dx * dx + dy * dy <= self.radius * self.radius

    def visible_count(self) -> int:
        return int(self.visible().sum())


@dataclass(frozen=True, eq=False)
class MaskedPixelSet:
    positions: np.ndarray  # (n, 2) integer (x, y)
    colors: np.ndarray     # (n, 3) uint8

    def __post_init__(self):
        if len(self.positions) != len(self.colors):
            raise DimensionMismatch("positions and colors differ in length")

    def __len__(self):
        return len(self.colors)


def _check_dims(image: ImageRGB, mask: SkyMask):
    if (mask.width, mask.height) != (image.width, image.height):
        raise DimensionMismatch(
            f"mask is {mask.width}x{mask.height}, image is {image.width}x{image.height}")


def apply_mask(image: ImageRGB, mask: SkyMask) -> MaskedPixelSet:
    _check_dims(image, mask)
    vis = mask.visible()
    ys, xs = np.nonzero(vis)  # row-major order
    positions = np.stack([xs, ys], axis=1)
    return MaskedPixelSet(positions, image.pixels[ys, xs])


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    return data[start:pos], pos


def parse_ppm(data: bytes) -> ImageRGB:
    if data[:2] != b"P6":
        raise MalformedHeader(f"expected magic P6, got {data[:2]!r}")
    pos = 2
    if pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        raise MalformedHeader("magic must be followed by whitespace")
    fields = []
    for _ in range(3):
        tok, pos = _read_token(data, pos)
        if not tok.isdigit():
            raise MalformedHeader(f"non-numeric header field {tok!r}")
        fields.append(int(tok))
    width, height, maxval = fields
    if maxval != 255:
        raise UnsupportedMaxval(f"maxval {maxval} (only 255 is supported)")
    if pos >= len(data) and width * height > 0:
        raise TruncatedPixelData("no pixel payload")
    pos += 1  # exactly one whitespace byte after maxval
    need = 3 * width * height
    payload = data[pos:pos + need]
    if len(payload) < need:
        raise TruncatedPixelData(f"expected {need} payload bytes, found {len(payload)}")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return ImageRGB(width, height, pixels)


def load_ppm(path) -> ImageRGB:
    """Read a binary (P6, maxval 255) PPM file."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return parse_ppm(data)


def encode_ppm(image: ImageRGB) -> bytes:
    header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + image.pixels.tobytes()


def store_ppm(image: ImageRGB, path) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(encode_ppm(image))
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def blacken_masked(image: ImageRGB, mask: SkyMask) -> ImageRGB:
    _check_dims(image, mask)
    px = image.pixels.copy()
    px[~mask.visible()] = 0
    return ImageRGB(image.width, image.height, px)


def ensure_dir(path) -> None:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
