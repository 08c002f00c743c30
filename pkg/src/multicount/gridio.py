"""On-disk formats for grids and images.

Raw grid stacks are a one-line text header ``GRIDS N H W`` followed by
N*H*W little-endian float32 values.  Images travel as binary portable
pixmaps (P6) and single grids as binary graymaps (P5) for eyeballing.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

GRID_MAGIC = "GRIDS"


def save_grid_stack(path, stack: np.ndarray) -> None:
    stack = np.asarray(stack, dtype=np.float64)
    if stack.ndim == 2:
        stack = stack[None]
    if stack.ndim != 3:
        raise ValueError(f"grid stack must be (N, H, W), got {stack.shape}")
    n, h, w = stack.shape
    with open(path, "wb") as fh:
        fh.write(f"{GRID_MAGIC} {n} {h} {w}\n".encode("ascii"))
        fh.write(stack.astype("<f4").tobytes())


def load_grid_stack(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 4 or header[0] != GRID_MAGIC:
            raise ValueError(f"{path}: not a grid stack file")
        n, h, w = (int(v) for v in header[1:])
        raw = fh.read(n * h * w * 4)
    if len(raw) != n * h * w * 4:
        raise ValueError(f"{path}: truncated grid stack")
    values = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    return values.reshape(n, h, w)


def save_pgm(path, grid: np.ndarray) -> None:
    """8-bit graymap, normalized to the grid's own maximum."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ValueError(f"pgm wants a single 2-D grid, got {grid.shape}")
    top = grid.max()
    scaled = grid / top if top > 0 else grid
    pixels = np.clip(np.rint(scaled * 255.0), 0, 255).astype(np.uint8)
    h, w = grid.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def save_ppm(path, image: np.ndarray) -> None:
    """Binary pixmap from a (3, H, W) image with values in [0, 1]."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"ppm wants (3, H, W), got {image.shape}")
    pixels = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    _, h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.transpose(1, 2, 0).tobytes())


def load_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P6":
            raise ValueError(f"{path}: not a binary pixmap")
        dims = fh.readline().split()
        while dims and dims[0].startswith(b"#"):
            dims = fh.readline().split()
        w, h = int(dims[0]), int(dims[1])
        maxval = int(fh.readline())
        if maxval != 255:
            raise ValueError(f"{path}: unsupported maxval {maxval}")
        raw = fh.read(w * h * 3)
    if len(raw) != w * h * 3:
        raise ValueError(f"{path}: truncated pixmap")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3)
    return pixels.transpose(2, 0, 1).astype(np.float64) / 255.0


def ensure_dir(path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path
