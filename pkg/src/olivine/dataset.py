"""Class-per-directory corpora, manifests, stratified splits, batching, and the
synthetic five-shape benchmark."""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence

import numpy as np

from .errors import DataError
from .imageio import DepthMap, Image, load_image, write_depth, write_pnm
from .preprocess import normalize_to_tensor, to_gray
from .rng import Rng, make_rng

SPLITS = ("train", "val", "test")
IMAGE_SUFFIXES = (".ppm", ".pgm", ".pnm", ".png", ".jpg", ".jpeg")
DEPTH_SUFFIX = ".depth.pgm"
MANIFEST_HEADER = ["path", "class_name", "class_index", "split"]
SYNTHETIC_CLASSES = ("ellipse", "rectangle", "triangle", "cross", "ring")


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    class_name: str
    class_index: int
    split: str = ""  # empty until stratified_split assigns one


@dataclass(frozen=True)
class SplitSpec:
    f_train: float = 0.8
    f_val: float = 0.1
    f_test: float = 0.1

    def __post_init__(self):
        fractions = (self.f_train, self.f_val, self.f_test)
        if any(f < 0 for f in fractions):
            raise ValueError(f"split fractions must be >= 0, got {fractions}")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(fractions)}")


@dataclass
class Batch:
    inputs: np.ndarray  # N x C x H x W
    labels: List[int]


def is_image_file(path: Path) -> bool:
    name = path.name.lower()
    return path.is_file() and name.endswith(IMAGE_SUFFIXES) and not name.endswith(DEPTH_SUFFIX)


def depth_path_for(image_path) -> Path:
    p = Path(image_path)
    return p.with_name(p.stem + DEPTH_SUFFIX)


def scan_directory(root, validate: bool = True) -> List[ManifestRecord]:
    """One record per image under ``root/<class_name>/``.

    Classes are the subdirectory names in lexicographic order. With
    ``validate`` every file is decoded once so unreadable files surface here.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"{root}: not a directory")
    class_dirs = sorted((d for d in root.iterdir() if d.is_dir()), key=lambda d: d.name)
    if len(class_dirs) < 2:
        raise DataError(f"{root}: need >= 2 classes, found {len(class_dirs)}")
    records = []
    for index, d in enumerate(class_dirs):
        files = sorted((f for f in d.iterdir() if is_image_file(f)), key=lambda f: f.name)
        if not files:
            raise DataError(f"{d}: class directory contains no images")
        for f in files:
            if validate:
                load_image(f)
            records.append(ManifestRecord(str(f), d.name, index))
    return records


def class_names(records: Sequence[ManifestRecord]) -> List[str]:
    names: Dict[int, str] = {}
    for r in records:
        names.setdefault(r.class_index, r.class_name)
    return [names[i] for i in sorted(names)]


def stratified_split(records: Sequence[ManifestRecord], spec: SplitSpec = SplitSpec(),
                     seed: int = 0) -> List[ManifestRecord]:
    """Tag every record train/val/test, class by class.

    Within a class the records are ordered by path and shuffled with a stream
    seeded by ``(seed, class_index)``, so the result does not depend on the
    input order. Counts are ``floor(n * f)`` for train and val, the remainder
    for test; an empty val or test split takes one record from train.
    """
    by_class: Dict[int, List[int]] = {}
    for i, r in enumerate(records):
        by_class.setdefault(r.class_index, []).append(i)
    tags: Dict[int, str] = {}
    for class_index in sorted(by_class):
        members = sorted(by_class[class_index], key=lambda i: records[i].path)
        n = len(members)
        if n < 3:
            raise DataError(
                f"class {records[members[0]].class_name!r} has {n} records; stratified split needs >= 3"
            )
        n_train = math.floor(n * spec.f_train + 1e-9)
        n_val = math.floor(n * spec.f_val + 1e-9)
        n_test = n - n_train - n_val
        if n_val == 0:
            n_train, n_val = n_train - 1, 1
        if n_test == 0:
            n_train, n_test = n_train - 1, 1
        order = make_rng(seed, class_index).permutation(n)
        for rank, j in enumerate(order):
            if rank < n_train:
                tag = "train"
            elif rank < n_train + n_val:
                tag = "val"
            else:
                tag = "test"
            tags[members[j]] = tag
    return [replace(r, split=tags[i]) for i, r in enumerate(records)]


def split_counts(records: Sequence[ManifestRecord]) -> Dict[str, Dict[str, int]]:
    """``{class_name: {split: count}}`` for reporting."""
    out: Dict[str, Dict[str, int]] = {}
    for r in records:
        out.setdefault(r.class_name, {s: 0 for s in SPLITS})
        if r.split:
            out[r.class_name][r.split] += 1
    return out


def write_manifest(records: Sequence[ManifestRecord]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for r in records:
        row = [r.path, r.class_name, str(r.class_index), r.split]
        for field in row:
            if "," in field or "\n" in field or "\r" in field:
                raise DataError(f"manifest field {field!r} contains a comma or newline")
        if r.split not in SPLITS + ("",):
            raise DataError(f"unknown split tag {r.split!r} for {r.path}")
        writer.writerow(row)
    return buf.getvalue().encode("utf-8")


def read_manifest(data: bytes) -> List[ManifestRecord]:
    text = data.decode("utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != MANIFEST_HEADER:
        raise DataError(f"manifest header must be {','.join(MANIFEST_HEADER)}")
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise DataError(f"manifest line {lineno}: expected 4 fields, got {len(row)}")
        path, name, index, split = row
        try:
            class_index = int(index)
        except ValueError:
            raise DataError(f"manifest line {lineno}: class_index {index!r} is not an integer") from None
        if split not in SPLITS + ("",):
            raise DataError(f"manifest line {lineno}: unknown split tag {split!r}")
        records.append(ManifestRecord(path, name, class_index, split))
    _check_class_indices(records)
    return records


def _check_class_indices(records: Sequence[ManifestRecord]) -> None:
    name_of: Dict[int, str] = {}
    for r in records:
        if name_of.setdefault(r.class_index, r.class_name) != r.class_name:
            raise DataError(f"class index {r.class_index} names both {name_of[r.class_index]!r} and {r.class_name!r}")
    if len(set(name_of.values())) != len(name_of):
        raise DataError("a class name maps to more than one class index")
    if sorted(name_of) != list(range(len(name_of))):
        raise DataError(f"class indices are not contiguous from 0: {sorted(name_of)}")


def load_manifest(path) -> List[ManifestRecord]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: cannot read manifest ({exc.strerror})") from exc
    try:
        return read_manifest(data)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc


def save_manifest(path, records: Sequence[ManifestRecord]) -> None:
    Path(path).write_bytes(write_manifest(records))


Hook = Callable[[Image, Rng], Image]


def _sample_tensor(record, position, load, hooks, epoch_seed, in_channels):
    img = load(record)
    if hooks:
        rng = make_rng(epoch_seed, position)
        for hook in hooks:
            img = hook(img, rng)
    if in_channels == 1 and img.channels == 3:
        img = to_gray(img)
    elif in_channels == 3 and img.channels == 1:
        img = Image(np.repeat(img.pixels, 3, axis=2))
    return normalize_to_tensor(img)


def batch_iterator(records: Sequence[ManifestRecord], split: str, batch_size: int, epoch_seed: int,
                   load: Callable[[ManifestRecord], Image] = lambda r: load_image(r.path),
                   hooks: Sequence[Hook] = (), in_channels: Optional[int] = None,
                   workers: int = 0) -> Iterator[Batch]:
    """Yield batches of one split.

    The train split is shuffled with ``epoch_seed``; val and test keep manifest
    order. Each hook receives the image and a stream seeded by
    ``(epoch_seed, manifest position)``, so results do not depend on
    ``workers``.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    members = [(i, r) for i, r in enumerate(records) if r.split == split]
    if not members:
        raise DataError(f"split {split!r} is empty")
    if split == "train":
        order = make_rng(epoch_seed).permutation(len(members))
        members = [members[j] for j in order]
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 0 else None
    try:
        for start in range(0, len(members), batch_size):
            chunk = members[start : start + batch_size]
            job = lambda item: _sample_tensor(item[1], item[0], load, hooks, epoch_seed, in_channels)
            tensors = list(pool.map(job, chunk)) if pool else [job(item) for item in chunk]
            yield Batch(np.stack(tensors), [r.class_index for _, r in chunk])
    finally:
        if pool:
            pool.shutdown()


def _shape_mask(kind: str, h: int, w: int, cx: float, cy: float, r: float) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = xx - cx, yy - cy
    if kind == "ellipse":
        return (dx / (1.2 * r)) ** 2 + (dy / (0.85 * r)) ** 2 <= 1.0
    if kind == "rectangle":
        return (np.abs(dx) <= 1.15 * r) & (np.abs(dy) <= 0.8 * r)
    if kind == "triangle":
        t = (dy + r) / (1.8 * r)  # 0 at the apex, 1 at the base
        return (t >= 0) & (t <= 1) & (np.abs(dx) <= t * 1.1 * r)
    if kind == "cross":
        arm = 0.38 * r
        return ((np.abs(dx) <= r) & (np.abs(dy) <= arm)) | ((np.abs(dy) <= r) & (np.abs(dx) <= arm))
    if kind == "ring":
        d = np.hypot(dx, dy)
        return (d <= r) & (d >= 0.55 * r)
    raise ValueError(f"unknown synthetic shape {kind!r}")


def render_synthetic(kind: str, size: int, rng: Rng):
    """Render one synthetic sample; returns ``(image, depth_map)``."""
    shade = rng.uniform(170, 235)
    background = np.clip(shade + rng.uniform(-10, 10, 3), 0, 255)
    color = rng.uniform(0, 120, 3)
    cx = size / 2 + rng.uniform(-0.1, 0.1) * size
    cy = size / 2 + rng.uniform(-0.1, 0.1) * size
    r = 0.28 * size * rng.uniform(0.8, 1.2)
    mask = _shape_mask(kind, size, size, cx, cy, r)
    gray = lambda c: 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
    assert gray(background) - gray(color) >= 30, "synthetic shape is not segmentable"
    clean = np.where(mask[:, :, None], color, background)
    noisy = clean + rng.normal(0.0, 8.0, clean.shape)
    pixels = np.clip(np.floor(noisy + 0.5), 0, 255).astype(np.uint8)
    g = pixels.astype(np.float64) @ np.array([0.299, 0.587, 0.114])
    assert g[~mask].mean() - g[mask].mean() >= 30, "synthetic shape is not segmentable"
    depth = np.where(mask, 400, 650).astype(np.uint16)
    return Image(pixels), DepthMap(depth)


def generate_synthetic(root, n_per_class: int, image_size: int = 128, seed: int = 0,
                       with_depth: bool = False) -> List[ManifestRecord]:
    """Write ``n_per_class`` P6 images per shape class under ``root/<class>/``.

    Returns the records of the written files (unsplit) and also saves them to
    ``root/manifest.csv`` with paths relative to ``root``.
    """
    if n_per_class < 3:
        raise ValueError(f"n_per_class must be >= 3, got {n_per_class}")
    root = Path(root)
    try:
        root.mkdir(parents=True, exist_ok=True)
        records = []
        names = sorted(SYNTHETIC_CLASSES)
        for class_index, kind in enumerate(names):
            d = root / kind
            d.mkdir(exist_ok=True)
            for i in range(n_per_class):
                img, depth = render_synthetic(kind, image_size, make_rng(seed, class_index, i))
                path = d / f"{kind}_{i:04d}.ppm"
                path.write_bytes(write_pnm(img))
                if with_depth:
                    depth_path_for(path).write_bytes(write_depth(depth))
                records.append(ManifestRecord(f"{kind}/{path.name}", kind, class_index))
        save_manifest(root / "manifest.csv", records)
    except OSError as exc:
        raise DataError(f"{root}: cannot write synthetic dataset ({exc.strerror})") from exc
    return records


def relativize(records: Sequence[ManifestRecord], base) -> List[ManifestRecord]:
    base = Path(base).resolve()
    return [replace(r, path=Path(os.path.relpath(Path(r.path).resolve(), base)).as_posix()) for r in records]


def resolve(records: Sequence[ManifestRecord], base) -> List[ManifestRecord]:
    base = Path(base)
    return [r if Path(r.path).is_absolute() else replace(r, path=str(base / r.path)) for r in records]
