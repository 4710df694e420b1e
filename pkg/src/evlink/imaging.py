"""Small image helpers shared by the simulator, encoders and augmentation."""
from __future__ import annotations

import numpy as np

# Rec. 601 luma
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def luminance(rgb: np.ndarray) -> np.ndarray:
    """HxWx3 array in [0, 1] -> HxW luminance."""
    return rgb[..., 0] * LUMA_WEIGHTS[0] + rgb[..., 1] * LUMA_WEIGHTS[1] + rgb[..., 2] * LUMA_WEIGHTS[2]


def bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray, mode: str = "edge", fill: float = 0.0):
    """Sample ``img[..., H, W]`` at real coordinates (xs, ys) with bilinear weights.

    ``mode="edge"`` replicates border pixels, ``mode="constant"`` uses ``fill``
    for any tap that falls outside the grid.
    """
    h, w = img.shape[-2:]
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0

    def tap(yy, xx):
        if mode == "edge":
            return img[..., np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
        inside = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
        v = img[..., np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
        return np.where(inside, v, fill)

    top = tap(y0, x0) * (1.0 - fx) + tap(y0, x0 + 1) * fx
    bottom = tap(y0 + 1, x0) * (1.0 - fx) + tap(y0 + 1, x0 + 1) * fx
    return top * (1.0 - fy) + bottom * fy


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int | None = None) -> np.ndarray:
    """Resize the last two axes with half-pixel-centre bilinear interpolation."""
    out_w = out_h if out_w is None else out_w
    h, w = img.shape[-2:]
    if (h, w) == (out_h, out_w):
        return img.copy()
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    return bilinear_sample(img, gx, gy, mode="edge")


def rotate(img: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate the last two axes about the image centre; uncovered pixels become 0."""
    if degrees == 0:
        return img.copy()
    h, w = img.shape[-2:]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    a = np.deg2rad(degrees)
    c, s = np.cos(a), np.sin(a)
    gy, gx = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float), indexing="ij")
    # inverse map: output pixel -> source coordinate
    dx, dy = gx - cx, gy - cy
    sx = c * dx + s * dy + cx
    sy = -s * dx + c * dy + cy
    return bilinear_sample(img, sx, sy, mode="constant", fill=0.0)
