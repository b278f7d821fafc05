"""Seeded rotation / flip / brightness augmentation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .imageio import Image
from .preprocess import _to_uint8
from .rng import Rng


@dataclass(frozen=True)
class AugmentConfig:
    rotation_max_deg: float = 30.0
    p_flip_h: float = 0.5
    p_flip_v: float = 0.0
    brightness_max_delta: int = 40
    seed: int = 0

    def __post_init__(self):
        for name in ("p_flip_h", "p_flip_v"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be a probability, got {p}")
        if not self.rotation_max_deg >= 0:
            raise ValueError(f"rotation_max_deg must be >= 0, got {self.rotation_max_deg}")
        if not 0 <= self.brightness_max_delta <= 255:
            raise ValueError(f"brightness_max_delta must be in 0..255, got {self.brightness_max_delta}")


IDENTITY = AugmentConfig(rotation_max_deg=0.0, p_flip_h=0.0, p_flip_v=0.0, brightness_max_delta=0)


class AugmentDraw(NamedTuple):
    angle_deg: float
    flip_h: bool
    flip_v: bool
    delta: int


def _exact_trig(angle_deg: float):
    quarter = angle_deg / 90.0
    if quarter == round(quarter):
        return [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][int(round(quarter)) % 4]
    rad = math.radians(angle_deg)
    return math.cos(rad), math.sin(rad)


def rotate(img: Image, angle_deg: float) -> Image:
    """Rotate counter-clockwise (as displayed) about ((w-1)/2, (h-1)/2).

    Inverse mapping with bilinear sampling; destination pixels whose source
    falls outside the image take the per-channel image mean. Multiples of 90
    degrees use exact trigonometry so they are pure pixel permutations on
    square images.
    """
    if not math.isfinite(angle_deg):
        raise ValueError(f"rotation angle must be finite, got {angle_deg}")
    if angle_deg == 0:
        return Image(img.pixels.copy())
    h, w = img.height, img.width
    cos, sin = _exact_trig(angle_deg)
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = xx - cx, yy - cy
    # y grows downward, so a visually counter-clockwise turn is clockwise in (x, y).
    sx = cos * dx - sin * dy + cx
    sy = sin * dx + cos * dy + cy
    tol = 1e-6
    inside = (sx >= -tol) & (sx <= w - 1 + tol) & (sy >= -tol) & (sy <= h - 1 + tol)
    sx = np.clip(sx, 0, w - 1)
    sy = np.clip(sy, 0, h - 1)
    x0 = np.floor(sx).astype(int)
    y0 = np.floor(sy).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (sx - x0)[:, :, None]
    fy = (sy - y0)[:, :, None]
    src = img.pixels.astype(np.float64)
    top = src[y0, x0] * (1 - fx) + src[y0, x1] * fx
    bottom = src[y1, x0] * (1 - fx) + src[y1, x1] * fx
    out = top * (1 - fy) + bottom * fy
    fill = src.reshape(-1, img.channels).mean(axis=0)
    out = np.where(inside[:, :, None], out, fill[None, None, :])
    return Image(_to_uint8(out))


def flip(img: Image, axis: str) -> Image:
    """Mirror left-right (``"horizontal"``) or top-bottom (``"vertical"``)."""
    if axis == "horizontal":
        return Image(np.ascontiguousarray(img.pixels[:, ::-1]))
    if axis == "vertical":
        return Image(np.ascontiguousarray(img.pixels[::-1]))
    raise ValueError(f"unknown flip axis {axis!r}")


def adjust_brightness(img: Image, delta: int) -> Image:
    if abs(delta) > 255:
        raise ValueError(f"|delta| must be <= 255, got {delta}")
    return Image(np.clip(img.pixels.astype(np.int16) + int(delta), 0, 255).astype(np.uint8))


def draw_augmentation(cfg: AugmentConfig, rng: Rng) -> AugmentDraw:
    """Consume the four draws in their fixed order.

    Every draw happens regardless of the configured magnitudes so that the
    stream position after this call never depends on the config.
    """
    angle = float(rng.uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg))
    flip_h = bool(rng.random() < cfg.p_flip_h)
    flip_v = bool(rng.random() < cfg.p_flip_v)
    m = cfg.brightness_max_delta
    # integers() skips the generator when the range is a single value, so
    # scale one double instead to keep the stream position fixed.
    delta = min(int(math.floor(rng.random() * (2 * m + 1))), 2 * m) - m
    return AugmentDraw(angle, flip_h, flip_v, delta)


def apply_augmentation(img: Image, draw: AugmentDraw) -> Image:
    out = rotate(img, draw.angle_deg)
    if draw.flip_h:
        out = flip(out, "horizontal")
    if draw.flip_v:
        out = flip(out, "vertical")
    return adjust_brightness(out, draw.delta)


def augment_sample(img: Image, cfg: AugmentConfig, rng: Rng) -> Image:
    return apply_augmentation(img, draw_augmentation(cfg, rng))
