"""Binary PNM (P5/P6) reading and writing for images and 16-bit depth maps."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from .errors import DataError


class PnmError(DataError):
    """Base class for malformed PNM input."""


class UnsupportedMagicError(PnmError):
    pass


class UnsupportedMaxvalError(PnmError):
    pass


class TruncatedPnmError(PnmError):
    pass


class BadDimensionsError(PnmError):
    pass


@dataclass(frozen=True, eq=False)
class Image:
    """8-bit raster, ``pixels`` shaped H x W x C with C in {1, 3}."""

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if p.dtype != np.uint8 or p.ndim != 3 or p.shape[2] not in (1, 3):
            raise ValueError(f"Image pixels must be uint8 H x W x {{1,3}}, got {p.dtype} {p.shape}")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError(f"Image dimensions must be positive, got {p.shape}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(self.pixels, other.pixels)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Per-pixel depth in millimetres, H x W uint16; 0 means no reading."""

    depths: np.ndarray

    def __post_init__(self):
        if self.depths.dtype != np.uint16 or self.depths.ndim != 2:
            raise ValueError(f"DepthMap must be uint16 H x W, got {self.depths.dtype} {self.depths.shape}")

    @property
    def width(self) -> int:
        return self.depths.shape[1]

    @property
    def height(self) -> int:
        return self.depths.shape[0]

    def __eq__(self, other):
        if not isinstance(other, DepthMap):
            return NotImplemented
        return self.depths.shape == other.depths.shape and np.array_equal(self.depths, other.depths)

    __hash__ = None


_WHITESPACE = b" \t\n\r\x0b\x0c"


def _parse_header(data: bytes) -> Tuple[bytes, int, int, int, int]:
    """Return (magic, width, height, maxval, body offset)."""
    if len(data) < 2:
        raise TruncatedPnmError("truncated header: file shorter than the magic number")
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise UnsupportedMagicError(f"unsupported magic {magic!r}; expected P5 or P6")
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and (data[pos] in _WHITESPACE or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < len(data) and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < len(data) and data[pos] not in _WHITESPACE and data[pos] != ord("#"):
            pos += 1
        if start == pos:
            raise TruncatedPnmError("truncated header: missing width/height/maxval")
        token = data[start:pos]
        if not token.isdigit():
            raise BadDimensionsError(f"header field {token!r} is not a non-negative integer")
        fields.append(int(token))
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise TruncatedPnmError("truncated header: no whitespace after maxval")
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise BadDimensionsError(f"dimensions must be positive, got {width}x{height}")
    return magic, width, height, maxval, pos + 1


def read_pnm(data: bytes) -> Image:
    magic, width, height, maxval, offset = _parse_header(data)
    if maxval != 255:
        raise UnsupportedMaxvalError(f"unsupported maxval {maxval}; images must use maxval 255")
    channels = 1 if magic == b"P5" else 3
    size = width * height * channels
    body = data[offset : offset + size]
    if len(body) < size:
        raise TruncatedPnmError(f"truncated body: expected {size} bytes, found {len(body)}")
    pixels = np.frombuffer(body, dtype=np.uint8).reshape(height, width, channels).copy()
    return Image(pixels)


def write_pnm(img: Image) -> bytes:
    magic = b"P5" if img.channels == 1 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, img.width, img.height)
    return header + np.ascontiguousarray(img.pixels).tobytes()


def read_depth(data: bytes) -> DepthMap:
    magic, width, height, maxval, offset = _parse_header(data)
    if magic != b"P5":
        raise UnsupportedMagicError(f"depth maps must be P5, got {magic!r}")
    if maxval != 65535:
        raise UnsupportedMaxvalError(f"expected 16-bit depth (maxval 65535), got maxval {maxval}")
    size = width * height * 2
    body = data[offset : offset + size]
    if len(body) < size:
        raise TruncatedPnmError(f"truncated body: expected {size} bytes, found {len(body)}")
    depths = np.frombuffer(body, dtype=">u2").reshape(height, width).astype(np.uint16)
    return DepthMap(depths)


def write_depth(depth: DepthMap) -> bytes:
    header = b"P5\n%d %d\n65535\n" % (depth.width, depth.height)
    return header + depth.depths.astype(">u2").tobytes()


PathLike = Union[str, Path]


def load_image(path: PathLike) -> Image:
    """Read a PNM file; PNG/JPEG fall back to Pillow when it is installed."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc.strerror})") from exc
    if path.suffix.lower() in (".ppm", ".pgm", ".pnm"):
        try:
            return read_pnm(data)
        except PnmError as exc:
            raise type(exc)(f"{path}: {exc}") from exc
    return _load_with_pillow(path)


def _load_with_pillow(path: Path) -> Image:
    try:
        from PIL import Image as PILImage
    except ImportError as exc:  # pragma: no cover
        raise DataError(f"{path}: non-PNM input needs Pillow") from exc
    try:
        with PILImage.open(path) as im:
            mode = "L" if im.mode in ("L", "I", "I;16", "1") else "RGB"
            arr = np.asarray(im.convert(mode), dtype=np.uint8)
    except OSError as exc:
        raise DataError(f"{path}: cannot decode image ({exc})") from exc
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return Image(arr.copy())


def save_image(path: PathLike, img: Image) -> None:
    Path(path).write_bytes(write_pnm(img))


def load_depth(path: PathLike) -> DepthMap:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        return read_depth(data)
    except PnmError as exc:
        raise type(exc)(f"{path}: {exc}") from exc
