"""Image conditioning: resize, blur, Otsu segmentation, cropping, normalization.

The full chain used by :func:`preprocess_image` is

    blur -> gray -> Otsu -> border-contact foreground -> (AND depth band)
    -> largest 4-connected component -> mask + crop -> resize

with :func:`normalize_to_tensor` applied when a sample is fed to a model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import ndimage

from .errors import DataError
from .imageio import DepthMap, Image

CROP_MARGIN = 0.05
NORM_MEAN = 0.5
NORM_STD = 0.5


class SegmentationError(DataError):
    """Segmentation could not isolate an object (degenerate histogram, empty mask)."""


class BBox(NamedTuple):
    """Inclusive pixel bounds."""

    x0: int
    y0: int
    x1: int
    y1: int


def round_half_away(values: np.ndarray) -> np.ndarray:
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


def _to_uint8(values: np.ndarray) -> np.ndarray:
    return np.clip(round_half_away(values), 0, 255).astype(np.uint8)


def _source_coords(out_n: int, in_n: int) -> np.ndarray:
    s = (np.arange(out_n, dtype=np.float64) + 0.5) * (in_n / out_n) - 0.5
    return np.clip(s, 0.0, in_n - 1)


def resize_bilinear(img: Image, out_w: int, out_h: int) -> Image:
    """Bilinear resize with half-pixel-centre sampling."""
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output size must be >= 1, got {out_w}x{out_h}")
    if (out_w, out_h) == (img.width, img.height):
        return Image(img.pixels.copy())
    src = img.pixels.astype(np.float64)
    sy = _source_coords(out_h, img.height)
    sx = _source_coords(out_w, img.width)
    y0 = np.floor(sy).astype(int)
    x0 = np.floor(sx).astype(int)
    y1 = np.minimum(y0 + 1, img.height - 1)
    x1 = np.minimum(x0 + 1, img.width - 1)
    fy = (sy - y0)[:, None, None]
    fx = (sx - x0)[None, :, None]
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bottom = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    return Image(_to_uint8(top * (1 - fy) + bottom * fy))


def gaussian_kernel(sigma: float) -> np.ndarray:
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    r = math.ceil(3 * sigma)
    i = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(i * i) / (2 * sigma * sigma))
    return g / g.sum()


def _blur_axis(arr: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    r = len(kernel) // 2
    pad = [(0, 0)] * arr.ndim
    pad[axis] = (r, r)
    padded = np.pad(arr, pad, mode="reflect")
    n = arr.shape[axis]
    out = np.zeros_like(arr)
    for k, weight in enumerate(kernel):
        out += weight * np.take(padded, np.arange(k, k + n), axis=axis)
    return out


def gaussian_blur(img: Image, sigma: float) -> Image:
    """Separable Gaussian blur, radius ceil(3 sigma), reflected borders.

    Reflection excludes the edge pixel (``d c b | a b c d``). Both passes run in
    float64 and the result is rounded once.
    """
    kernel = gaussian_kernel(sigma)
    arr = img.pixels.astype(np.float64)
    arr = _blur_axis(arr, kernel, 0)
    arr = _blur_axis(arr, kernel, 1)
    return Image(_to_uint8(arr))


def to_gray(img: Image) -> Image:
    """ITU-R 601 luma, gray = round(0.299 R + 0.587 G + 0.114 B), in integers."""
    if img.channels == 1:
        return img
    p = img.pixels.astype(np.int64)
    gray = (299 * p[:, :, 0] + 587 * p[:, :, 1] + 114 * p[:, :, 2] + 500) // 1000
    return Image(gray.astype(np.uint8)[:, :, None])


def histogram(gray: Image) -> np.ndarray:
    if gray.channels != 1:
        raise ValueError("histogram needs a single-channel image")
    return np.bincount(gray.pixels.ravel(), minlength=256).astype(np.int64)


def otsu_threshold(gray: Image) -> int:
    """Threshold t maximizing the between-class variance; class 0 is ``<= t``.

    With n0, n1 the class counts, S0, S1 the class intensity sums and N the
    total, the criterion equals (S0 n1 - S1 n0)^2 / (N^2 n0 n1). It is compared
    in exact integer arithmetic so ties resolve to the smallest t reliably.
    """
    if gray.channels != 1:
        raise ValueError("otsu_threshold needs a single-channel image")
    counts = histogram(gray)
    if np.count_nonzero(counts) < 2:
        raise SegmentationError("degenerate histogram: a single gray level has no threshold")
    levels = np.arange(256, dtype=np.int64)
    n0 = np.cumsum(counts).tolist()
    s0 = np.cumsum(counts * levels).tolist()
    total_n, total_s = n0[-1], s0[-1]
    best_t, best_num, best_den = 0, 0, 1
    for t in range(256):
        a, b = n0[t], total_n - n0[t]
        if a == 0 or b == 0:
            continue
        num = (s0[t] * b - (total_s - s0[t]) * a) ** 2
        den = a * b
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def foreground_mask(gray: Image, t: int) -> np.ndarray:
    """Binarize at t and pick as foreground the class touching the border least.

    Ties go to the bright (``> t``) class. Returns an H x W bool array.
    """
    if not 0 <= t <= 255:
        raise ValueError(f"threshold must be in 0..255, got {t}")
    high = gray.pixels[:, :, 0] > t
    frame = np.zeros_like(high)
    frame[0, :] = frame[-1, :] = True
    frame[:, 0] = frame[:, -1] = True
    high_on_border = int(np.count_nonzero(high & frame))
    low_on_border = int(np.count_nonzero(frame)) - high_on_border
    return high if high_on_border <= low_on_border else ~high


def largest_component_bbox(mask: np.ndarray) -> BBox:
    """Bounding box of the largest 4-connected foreground component.

    Equal-sized components resolve to the one reached first in row-major
    order; ``ndimage.label`` numbers components in exactly that order.
    """
    labels, count = ndimage.label(mask)
    if count == 0:
        raise SegmentationError("no foreground: mask is empty")
    sizes = np.bincount(labels.ravel())[1:]
    winner = int(np.argmax(sizes)) + 1
    ys, xs = np.nonzero(labels == winner)
    return BBox(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))


def depth_foreground_mask(depth: DepthMap, near_mm: int, far_mm: int) -> np.ndarray:
    if not near_mm < far_mm:
        raise ValueError(f"inverted depth range [{near_mm}, {far_mm}]")
    d = depth.depths
    return (d != 0) & (d >= near_mm) & (d <= far_mm)


def combine_masks(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ValueError(f"mask dimensions differ: {a.shape} vs {b.shape}")
    return a & b


def expand_box(box: BBox, width: int, height: int, margin: float = CROP_MARGIN) -> BBox:
    mx = int(round_half_away(np.float64(margin * (box.x1 - box.x0 + 1))))
    my = int(round_half_away(np.float64(margin * (box.y1 - box.y0 + 1))))
    return BBox(max(box.x0 - mx, 0), max(box.y0 - my, 0),
                min(box.x1 + mx, width - 1), min(box.y1 + my, height - 1))


def segment_and_crop(img: Image, mask: np.ndarray, box: BBox, out_size: int,
                     margin: float = CROP_MARGIN) -> Image:
    """Zero the background, crop to the margin-expanded box, resize to a square."""
    if mask.shape != (img.height, img.width):
        raise ValueError(f"mask {mask.shape} does not match image {img.height}x{img.width}")
    if not (0 <= box.x0 <= box.x1 < img.width and 0 <= box.y0 <= box.y1 < img.height):
        raise ValueError(f"box {box} lies outside a {img.width}x{img.height} image")
    masked = np.where(mask[:, :, None], img.pixels, 0).astype(np.uint8)
    b = expand_box(box, img.width, img.height, margin)
    crop = Image(np.ascontiguousarray(masked[b.y0 : b.y1 + 1, b.x0 : b.x1 + 1]))
    return resize_bilinear(crop, out_size, out_size)


def normalize_to_tensor(img: Image, dtype=np.float32) -> np.ndarray:
    """Map 8-bit HWC pixels to a C x H x W tensor in [-1, 1]."""
    v = img.pixels.astype(np.float64) / 255.0
    v = (v - NORM_MEAN) / NORM_STD
    return np.ascontiguousarray(v.transpose(2, 0, 1)).astype(dtype)


def denormalize(tensor: np.ndarray) -> Image:
    v = (np.asarray(tensor, dtype=np.float64) * NORM_STD + NORM_MEAN) * 255.0
    return Image(_to_uint8(v.transpose(1, 2, 0)))


@dataclass
class PreprocessConfig:
    out_size: int = 224
    sigma: float = 1.0
    margin: float = CROP_MARGIN
    use_depth: bool = False
    depth_near_mm: int = 1
    depth_far_mm: int = 65535


def preprocess_image(img: Image, cfg: PreprocessConfig, depth: Optional[DepthMap] = None) -> Image:
    """Run the segmentation chain on one image and return the cropped square."""
    blurred = gaussian_blur(img, cfg.sigma)
    gray = to_gray(blurred)
    mask = foreground_mask(gray, otsu_threshold(gray))
    if cfg.use_depth:
        if depth is None:
            raise DataError("depth-assisted masking requested but no depth map was given")
        if (depth.width, depth.height) != (img.width, img.height):
            raise DataError(
                f"depth map {depth.width}x{depth.height} is not aligned with image {img.width}x{img.height}"
            )
        mask = combine_masks(mask, depth_foreground_mask(depth, cfg.depth_near_mm, cfg.depth_far_mm))
    box = largest_component_bbox(mask)
    return segment_and_crop(blurred, mask, box, cfg.out_size, cfg.margin)
