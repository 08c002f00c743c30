"""Annotation ingestion, synthetic scene generation, and augmentation.

Annotations are line-oriented text: ``class,x,y`` for points, or
``class,x1,y1,x2,y2`` for boxes (converted to centers on load).  Samples
pair a (3, H, W) image in [0, 1] with a :class:`PointAnnotationSet`;
manifests list ``image_path,annotation_path`` pairs, resolved relative to
the manifest's directory.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .gridio import load_ppm, save_ppm
from .groundtruth import PointAnnotationSet

# Disc colors per class, cycled; classes stay tellable-apart in RGB.
_PALETTE = (
    (0.95, 0.35, 0.25),
    (0.25, 0.45, 0.95),
    (0.30, 0.85, 0.35),
    (0.90, 0.80, 0.25),
)


def derive_seed(base_seed: int, index: int) -> int:
    """Splitmix-style per-index stream: hash the index, xor into the base."""
    z = (index + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    z ^= z >> 31
    return (base_seed ^ z) & 0xFFFFFFFFFFFFFFFF


@dataclass
class SceneConfig:
    height: int = 128
    width: int = 128
    num_classes: int = 2
    radius_ranges: tuple[tuple[float, float], ...] = ((2.5, 4.5), (7.0, 11.0))
    count_ranges: tuple[tuple[int, int], ...] = ((8, 20), (4, 10))
    intensity_ranges: tuple[tuple[float, float], ...] = ((0.55, 0.95),
                                                         (0.45, 0.85))
    noise_level: float = 0.06
    seed: int = 0

    def __post_init__(self):
        if not (64 <= self.height <= 512 and 64 <= self.width <= 512):
            raise ValueError("scene extents must be within [64, 512]")
        if self.height % 8 or self.width % 8:
            raise ValueError("scene extents must be divisible by 8")
        per_class = (self.radius_ranges, self.count_ranges,
                     self.intensity_ranges)
        if any(len(r) != self.num_classes for r in per_class):
            raise ValueError("per-class ranges must match num_classes")
        if any(lo <= 0 for lo, _ in self.radius_ranges):
            raise ValueError("radius ranges must be positive")
        if any(lo < 0 for lo, _ in self.count_ranges):
            raise ValueError("count ranges must be nonnegative")


@dataclass
class Sample:
    image: np.ndarray  # (3, H, W) float64 in [0, 1]
    annotations: PointAnnotationSet

    @property
    def extent(self) -> tuple[int, int]:
        return self.image.shape[1], self.image.shape[2]


def load_annotations(path, num_classes: int,
                     image_extent: tuple[int, int] | None = None,
                     class_map: dict[int, int] | None = None
                     ) -> PointAnnotationSet:
    """Parse point/box records; bounds are checked when the extent is known.

    ``class_map`` optionally remaps raw class ids (category merging) before
    the range check.
    """
    path = Path(path)
    classes: list[list[tuple[float, float]]] = [[] for _ in range(num_classes)]
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = [f.strip() for f in line.split(",")]
            try:
                raw_id = int(fields[0])
                values = [float(f) for f in fields[1:]]
            except (ValueError, IndexError):
                raise ValueError(f"{path}:{lineno}: malformed record") from None
            if class_map is not None:
                raw_id = class_map.get(raw_id, raw_id)
            if not 0 <= raw_id < num_classes:
                raise ValueError(
                    f"{path}:{lineno}: class {raw_id} out of range")
            if len(values) == 2:
                x, y = values
            elif len(values) == 4:
                x1, y1, x2, y2 = values
                x, y = (x1 + x2) / 2.0, (y1 + y2) / 2.0
            else:
                raise ValueError(
                    f"{path}:{lineno}: expected 3 or 5 fields, got "
                    f"{len(fields)}")
            classes[raw_id].append((x, y))
    ann = PointAnnotationSet(image_id=path.stem, classes=classes)
    if image_extent is not None:
        ann.validate_bounds(image_extent)
    return ann


def save_annotations(path, ann: PointAnnotationSet) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for k, points in enumerate(ann.classes):
            for x, y in points:
                fh.write(f"{k},{x!r},{y!r}\n")


def synth_scene(cfg: SceneConfig) -> Sample:
    """Anti-aliased discs over Gaussian noise; one color band per class.

    Disc centers are snapped to a quarter-pixel grid so flip bookkeeping
    stays exact in float64; centers keep a radius-wide margin from the edge.
    """
    rng = np.random.default_rng(cfg.seed)
    h, w = cfg.height, cfg.width
    image = np.clip(rng.normal(loc=0.25, scale=cfg.noise_level,
                               size=(3, h, w)), 0.0, 1.0)
    cols = np.arange(w, dtype=np.float64)
    rows = np.arange(h, dtype=np.float64)
    classes: list[list[tuple[float, float]]] = []
    for k in range(cfg.num_classes):
        lo, hi = cfg.count_ranges[k]
        count = int(rng.integers(lo, hi + 1))
        r_lo, r_hi = cfg.radius_ranges[k]
        i_lo, i_hi = cfg.intensity_ranges[k]
        color = np.array(_PALETTE[k % len(_PALETTE)])
        points: list[tuple[float, float]] = []
        margin = r_hi + 1.0
        for _ in range(count):
            cx = np.round(rng.uniform(margin, w - 1 - margin) * 4.0) / 4.0
            cy = np.round(rng.uniform(margin, h - 1 - margin) * 4.0) / 4.0
            radius = rng.uniform(r_lo, r_hi)
            intensity = rng.uniform(i_lo, i_hi)
            dist = np.sqrt((cols[None, :] - cx) ** 2 + (rows[:, None] - cy) ** 2)
            coverage = np.clip(radius + 0.5 - dist, 0.0, 1.0)
            for c in range(3):
                image[c] = image[c] * (1.0 - coverage) \
                    + coverage * intensity * color[c]
            points.append((float(cx), float(cy)))
        classes.append(points)
    ann = PointAnnotationSet(image_id=f"scene-{cfg.seed}", classes=classes)
    return Sample(image=image, annotations=ann)


def synth_dataset(cfg: SceneConfig, count: int) -> list[Sample]:
    """``count`` scenes with per-index seeds derived from cfg.seed."""
    return [synth_scene(replace(cfg, seed=derive_seed(cfg.seed, i)))
            for i in range(count)]


def flip_augment(sample: Sample) -> Sample:
    """Horizontal mirror; point x becomes (W-1) - x."""
    _, width = sample.extent
    image = sample.image[:, :, ::-1].copy()
    classes = [[((width - 1) - x, y) for x, y in pts]
               for pts in sample.annotations.classes]
    ann = PointAnnotationSet(image_id=sample.annotations.image_id,
                             classes=classes)
    return Sample(image=image, annotations=ann)


def random_crop(sample: Sample, crop_extent: tuple[int, int],
                seed: int) -> Sample:
    """Uniform window; points outside are dropped, the rest re-origined."""
    height, width = sample.extent
    ch, cw = crop_extent
    if ch > height or cw > width:
        raise ValueError(f"crop {ch}x{cw} exceeds image {height}x{width}")
    if ch % 8 or cw % 8:
        raise ValueError("crop extents must be divisible by 8")
    rng = np.random.default_rng(seed)
    y0 = int(rng.integers(0, height - ch + 1))
    x0 = int(rng.integers(0, width - cw + 1))
    image = sample.image[:, y0:y0 + ch, x0:x0 + cw].copy()
    classes = []
    for pts in sample.annotations.classes:
        kept = [(x - x0, y - y0) for x, y in pts
                if x0 <= x <= x0 + cw - 1 and y0 <= y <= y0 + ch - 1]
        classes.append(kept)
    ann = PointAnnotationSet(image_id=sample.annotations.image_id,
                             classes=classes)
    return Sample(image=image, annotations=ann)


# -- on-disk datasets ------------------------------------------------------------


def write_dataset(samples: list[Sample], out_dir) -> Path:
    """Materialize samples as ppm/txt pairs plus a manifest; returns its path."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "annotations").mkdir(parents=True, exist_ok=True)
    lines = []
    for i, sample in enumerate(samples):
        image_rel = f"images/scene_{i:04d}.ppm"
        ann_rel = f"annotations/scene_{i:04d}.txt"
        save_ppm(out_dir / image_rel, sample.image)
        save_annotations(out_dir / ann_rel, sample.annotations)
        lines.append(f"{image_rel},{ann_rel}\n")
    manifest = out_dir / "manifest.txt"
    manifest.write_text("".join(lines), encoding="ascii")
    return manifest


def read_manifest(manifest_path, num_classes: int) -> list[Sample]:
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    samples = []
    with open(manifest_path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(
                    f"{manifest_path}:{lineno}: expected image,annotation")
            image = load_ppm(base / parts[0])
            extent = image.shape[1], image.shape[2]
            ann = load_annotations(base / parts[1], num_classes,
                                   image_extent=extent)
            samples.append(Sample(image=image, annotations=ann))
    if not samples:
        raise ValueError(f"{manifest_path}: empty manifest")
    return samples
