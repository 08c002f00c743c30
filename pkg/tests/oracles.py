"""Independent brute-force references the fast implementations are checked
against.  Everything here is deliberately naive: plain Python loops and the
textbook formulas, no shared code with the package under test."""

import numpy as np


def conv2d_oracle(x, w, b, stride=1, padding=0, dilation=1):
    """Nested-loop dilated cross-correlation with zero padding."""
    B, C, H, W = x.shape
    O, _, k, _ = w.shape
    eff = dilation * (k - 1) + 1
    Ho = (H + 2 * padding - eff) // stride + 1
    Wo = (W + 2 * padding - eff) // stride + 1
    out = np.zeros((B, O, Ho, Wo))
    for bi in range(B):
        for oi in range(O):
            for ho in range(Ho):
                for wo in range(Wo):
                    acc = 0.0
                    for ci in range(C):
                        for ki in range(k):
                            for kj in range(k):
                                hi = ho * stride + ki * dilation - padding
                                wi = wo * stride + kj * dilation - padding
                                if 0 <= hi < H and 0 <= wi < W:
                                    acc += x[bi, ci, hi, wi] * w[oi, ci, ki, kj]
                    out[bi, oi, ho, wo] = acc + b[oi]
    return out


def maxpool2d_oracle(x):
    B, C, H, W = x.shape
    out = np.zeros((B, C, H // 2, W // 2))
    for bi in range(B):
        for ci in range(C):
            for i in range(H // 2):
                for j in range(W // 2):
                    out[bi, ci, i, j] = x[bi, ci, 2 * i: 2 * i + 2,
                                              2 * j: 2 * j + 2].max()
    return out


def upsample_bilinear_oracle(x, scale):
    """Per-pixel half-pixel-center interpolation with edge clamping."""
    B, C, H, W = x.shape
    out = np.zeros((B, C, H * scale, W * scale))
    for ho in range(H * scale):
        sy = min(max((ho + 0.5) / scale - 0.5, 0.0), H - 1.0)
        y0 = int(np.floor(sy))
        y1 = min(y0 + 1, H - 1)
        fy = sy - y0
        for wo in range(W * scale):
            sx = min(max((wo + 0.5) / scale - 0.5, 0.0), W - 1.0)
            x0 = int(np.floor(sx))
            x1 = min(x0 + 1, W - 1)
            fx = sx - x0
            out[:, :, ho, wo] = ((1 - fy) * (1 - fx) * x[:, :, y0, x0]
                                 + (1 - fy) * fx * x[:, :, y0, x1]
                                 + fy * (1 - fx) * x[:, :, y1, x0]
                                 + fy * fx * x[:, :, y1, x1])
    return out


def distance_transform_oracle(points, height, width):
    """O(pixels * points) minimum Euclidean distance, sqrt per point."""
    out = np.zeros((height, width))
    for row in range(height):
        for col in range(width):
            best = np.inf
            for px, py in points:
                dx = col - px
                dy = row - py
                d = np.sqrt(dx * dx + dy * dy)
                if d < best:
                    best = d
            out[row, col] = best
    return out


def density_blob_oracle(points, sigma, height, width, truncation_sigmas,
                        renormalize):
    """Full-grid per-point Gaussian accumulation with a Euclidean cutoff."""
    out = np.zeros((height, width))
    cols, rows = np.meshgrid(np.arange(width), np.arange(height))
    radius = truncation_sigmas * sigma
    for px, py in points:
        d2 = (cols - px) ** 2 + (rows - py) ** 2
        blob = np.exp(-d2 / (2.0 * sigma * sigma))
        blob[d2 > radius * radius] = 0.0
        if renormalize:
            blob /= blob.sum()
        out += blob
    return out


def central_difference(fn, arr, index, h=1e-6):
    """d fn / d arr[index] by central differences; fn() returns a float."""
    original = arr[index]
    arr[index] = original + h
    fp = fn()
    arr[index] = original - h
    fm = fn()
    arr[index] = original
    return (fp - fm) / (2.0 * h)


def rel_error(a, b, floor=1e-12):
    return abs(a - b) / max(abs(a), abs(b), floor)
