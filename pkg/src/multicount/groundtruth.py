"""Per-class training targets from point annotations.

Three constructions: Gaussian density maps whose channel sums equal the
per-class counts, exact Euclidean distance maps, and binary foreground
pseudo-masks obtained by thresholding the distance map.

Targets can be rendered at a reduced resolution (``output_scale``).  Point
coordinates map to the coarse grid with the half-pixel-center convention
x_out = (x + 0.5) * scale - 0.5, the same convention the bilinear upsampler
uses; this keeps rendering exactly mirror-symmetric, so flipping an image
and flipping its targets agree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Point = tuple[float, float]


@dataclass
class PointAnnotationSet:
    """Per-image, per-class lists of (x, y) points; x is the column."""

    image_id: str
    classes: list[list[Point]]

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def counts(self) -> list[int]:
        return [len(c) for c in self.classes]

    def validate_bounds(self, image_extent: tuple[int, int]) -> None:
        height, width = image_extent
        for k, points in enumerate(self.classes):
            for x, y in points:
                if not (0.0 <= x <= width - 1 and 0.0 <= y <= height - 1):
                    raise ValueError(
                        f"{self.image_id}: class {k} point ({x}, {y}) outside "
                        f"{height}x{width}"
                    )


@dataclass
class DensityConfig:
    sigma_per_class: tuple[float, ...] = (4.0, 8.0)
    truncation_sigmas: float = 4.0
    renormalize_blobs: bool = True
    output_scale: float = 0.25

    def __post_init__(self):
        if any(s <= 0 for s in self.sigma_per_class):
            raise ValueError("sigma_per_class must be positive")
        if self.truncation_sigmas < 2.0:
            raise ValueError("truncation_sigmas must be at least 2")
        if not 0.0 < self.output_scale <= 1.0:
            raise ValueError("output_scale must be in (0, 1]")


@dataclass
class MaskConfig:
    threshold_J: float = 20.0

    def __post_init__(self):
        if self.threshold_J <= 0:
            raise ValueError("threshold_J must be positive")


def grid_extent(image_extent: tuple[int, int], scale: float) -> tuple[int, int]:
    """Target grid size; the scaled extents must come out integral."""
    height, width = image_extent
    gh, gw = height * scale, width * scale
    if gh != int(gh) or gw != int(gw):
        raise ValueError(
            f"extent {height}x{width} is not divisible by 1/{scale}"
        )
    return int(gh), int(gw)


def scale_to_grid(coord: float, scale: float) -> float:
    return (coord + 0.5) * scale - 0.5


def render_density_maps(ann: PointAnnotationSet, cfg: DensityConfig,
                        image_extent: tuple[int, int]) -> np.ndarray:
    """Sum of truncated Gaussian blobs per class, one channel per class.

    With renormalize_blobs each blob carries discrete mass exactly 1 even
    when clipped by the grid border, so channel k sums to the class count.
    """
    if ann.num_classes != len(cfg.sigma_per_class):
        raise ValueError(
            f"{ann.num_classes} annotation classes vs "
            f"{len(cfg.sigma_per_class)} sigmas"
        )
    gh, gw = grid_extent(image_extent, cfg.output_scale)
    stack = np.zeros((ann.num_classes, gh, gw))
    for k, points in enumerate(ann.classes):
        sigma = cfg.sigma_per_class[k] * cfg.output_scale
        radius = cfg.truncation_sigmas * sigma
        channel = stack[k]
        for x, y in points:
            cx = scale_to_grid(x, cfg.output_scale)
            cy = scale_to_grid(y, cfg.output_scale)
            x0 = max(0, int(np.ceil(cx - radius)))
            x1 = min(gw - 1, int(np.floor(cx + radius)))
            y0 = max(0, int(np.ceil(cy - radius)))
            y1 = min(gh - 1, int(np.floor(cy + radius)))
            xs = np.arange(x0, x1 + 1, dtype=np.float64)
            ys = np.arange(y0, y1 + 1, dtype=np.float64)
            d2 = (xs[None, :] - cx) ** 2 + (ys[:, None] - cy) ** 2
            blob = np.exp(-d2 / (2.0 * sigma * sigma))
            blob[d2 > radius * radius] = 0.0
            if cfg.renormalize_blobs:
                blob /= blob.sum()
            channel[y0:y1 + 1, x0:x1 + 1] += blob
    return stack


def distance_transform(points: list[Point],
                       extent: tuple[int, int]) -> np.ndarray:
    """Minimum Euclidean distance from every pixel to the point set.

    Exact brute force: one vectorized squared-distance grid per point,
    square root of the running minimum at the end.
    """
    if not points:
        raise ValueError("distance_transform needs at least one point")
    height, width = extent
    cols = np.arange(width, dtype=np.float64)
    rows = np.arange(height, dtype=np.float64)
    best = np.full((height, width), np.inf)
    for x, y in points:
        d2 = (cols[None, :] - x) ** 2 + (rows[:, None] - y) ** 2
        np.minimum(best, d2, out=best)
    return np.sqrt(best)


def make_pseudo_mask(distance: np.ndarray, cfg: MaskConfig) -> np.ndarray:
    """Foreground where distance <= J (boundary inclusive), as 0/1 floats."""
    if np.any(distance < 0):
        raise ValueError("distance grid must be nonnegative")
    return (distance <= cfg.threshold_J).astype(np.float64)


def render_pseudo_masks(ann: PointAnnotationSet, cfg: MaskConfig,
                        image_extent: tuple[int, int],
                        output_scale: float = 0.25) -> np.ndarray:
    """Per-class binary masks at the target grid resolution.

    Coordinates and the threshold scale together so the foreground radius
    stays J image pixels.  A class with no points gets an all-zero mask.
    """
    gh, gw = grid_extent(image_extent, output_scale)
    stack = np.zeros((ann.num_classes, gh, gw))
    scaled_cfg = MaskConfig(threshold_J=cfg.threshold_J * output_scale)
    for k, points in enumerate(ann.classes):
        if not points:
            continue
        scaled = [(scale_to_grid(x, output_scale),
                   scale_to_grid(y, output_scale)) for x, y in points]
        stack[k] = make_pseudo_mask(distance_transform(scaled, (gh, gw)),
                                    scaled_cfg)
    return stack
