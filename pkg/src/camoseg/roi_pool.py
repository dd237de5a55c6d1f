"""RoI feature pooling: quantized max pooling, sampled bilinear averaging
and Precise RoI Pooling (exact integral average with box gradients).

All three operators read the feature map through the same continuous
extension: feature ``f[c, i, j]`` sits at the pixel center
``(j + 0.5, i + 0.5)`` and values in between are bilinearly interpolated.
Beyond the outermost centers the map is padded with zero-valued virtual
pixels, so the extension decays linearly to zero one pixel outside the map.

In this form the interpolant separates into a sum of tent functions,

    F(x, y) = sum_ij f[i, j] * tent(x - 0.5 - j) * tent(y - 0.5 - i),

which is what makes the Precise RoI integral closed form: the double
integral over a rectangle factorizes into per-column and per-row integrals
of the tent kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Box, ValidationError, as_feature_map

ROI_POOL_MAX = "roi_pool_max"
ROI_ALIGN = "roi_align"
PRROI = "prroi"
OPERATORS = (ROI_POOL_MAX, ROI_ALIGN, PRROI)


@dataclass(frozen=True)
class PoolSpec:
    bins_x: int = 7
    bins_y: int = 7
    operator: str = PRROI

    def __post_init__(self):
        if self.bins_x <= 0 or self.bins_y <= 0:
            raise ValidationError("bin counts must be positive")
        if self.operator not in OPERATORS:
            raise ValidationError(f"unknown pooling operator {self.operator!r}")


@dataclass(frozen=True, eq=False)
class PoolResult:
    values: np.ndarray  # (bins_y, bins_x, C)
    operator: str


@dataclass(frozen=True, eq=False)
class PoolGradients:
    d_features: np.ndarray  # same shape as the input feature map
    d_box: np.ndarray  # d/dx1, d/dy1, d/dx2, d/dy2


def _tent(t):
    return np.maximum(0.0, 1.0 - np.abs(t))


def _tent_cdf(t):
    """Antiderivative of the tent kernel, zero at -inf and one at +inf."""
    t = np.clip(t, -1.0, 1.0)
    return np.where(t <= 0.0, 0.5 * (t + 1.0) ** 2, 1.0 - 0.5 * (1.0 - t) ** 2)


def bilinear_at(f: np.ndarray, x: float, y: float, c: int = 0) -> float:
    """Interpolated value of channel ``c`` at continuous point ``(x, y)``."""
    f = np.asarray(f, dtype=np.float64)
    _, h, w = f.shape
    u = x - 0.5
    v = y - 0.5
    j0 = int(np.floor(u))
    i0 = int(np.floor(v))
    total = 0.0
    for i in (i0, i0 + 1):
        if not 0 <= i < h:
            continue
        wy = _tent(v - i)
        for j in (j0, j0 + 1):
            if 0 <= j < w:
                total += f[c, i, j] * wy * _tent(u - j)
    return float(total)


def _bilinear_grid(f: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Interpolate all channels on the tensor grid ``ys x xs``; returns
    ``(C, len(ys), len(xs))``."""
    _, h, w = f.shape
    wx = _tent(xs[:, None] - 0.5 - np.arange(w)[None, :])  # (nx, W)
    wy = _tent(ys[:, None] - 0.5 - np.arange(h)[None, :])  # (ny, H)
    return np.einsum("yi,cij,xj->cyx", wy, f, wx)


def _bin_edges(lo: float, hi: float, n: int) -> np.ndarray:
    return lo + (hi - lo) * np.arange(n + 1) / n


def roi_pool_max(f: np.ndarray, b: Box, spec: PoolSpec = PoolSpec(operator=ROI_POOL_MAX)) -> PoolResult:
    """Quantized RoI max pooling.

    Box corners are rounded to whole pixels, cells come from integer floor /
    ceil division of the rounded RoI, and each cell takes the per-channel
    maximum over its pixels. Cells that end up empty after clamping to the
    map are zero.
    """
    f = as_feature_map(f)
    c, h, w = f.shape
    x1, y1 = int(round(b.x1)), int(round(b.y1))
    x2, y2 = int(round(b.x2)), int(round(b.y2))
    roi_w = max(x2 - x1, 1)
    roi_h = max(y2 - y1, 1)
    if x1 >= w or y1 >= h or x1 + roi_w <= 0 or y1 + roi_h <= 0:
        raise ValidationError("empty RoI: box does not intersect the feature map")

    out = np.zeros((spec.bins_y, spec.bins_x, c))
    for by in range(spec.bins_y):
        ys = min(max(y1 + (by * roi_h) // spec.bins_y, 0), h)
        ye = min(max(y1 + -((-(by + 1) * roi_h) // spec.bins_y), 0), h)
        for bx in range(spec.bins_x):
            xs = min(max(x1 + (bx * roi_w) // spec.bins_x, 0), w)
            xe = min(max(x1 + -((-(bx + 1) * roi_w) // spec.bins_x), 0), w)
            if ye > ys and xe > xs:
                out[by, bx] = f[:, ys:ye, xs:xe].max(axis=(1, 2))
    return PoolResult(out, ROI_POOL_MAX)


def roi_align(
    f: np.ndarray,
    b: Box,
    spec: PoolSpec = PoolSpec(operator=ROI_ALIGN),
    samples_per_axis: int = 2,
) -> PoolResult:
    """Average of ``samples_per_axis**2`` bilinear samples per bin, taken at
    the sub-cell centers ``(k + 0.5) / n`` of each bin. No rounding."""
    f = as_feature_map(f)
    n = int(samples_per_axis)
    if n <= 0:
        raise ValidationError("samples_per_axis must be positive")
    frac = (np.arange(n) + 0.5) / n
    bw = b.width / spec.bins_x
    bh = b.height / spec.bins_y
    xs = b.x1 + bw * (np.arange(spec.bins_x)[:, None] + frac[None, :]).ravel()
    ys = b.y1 + bh * (np.arange(spec.bins_y)[:, None] + frac[None, :]).ravel()
    grid = _bilinear_grid(f, xs, ys)  # (C, by*n, bx*n)
    cch = f.shape[0]
    grid = grid.reshape(cch, spec.bins_y, n, spec.bins_x, n)
    return PoolResult(grid.mean(axis=(2, 4)).transpose(1, 2, 0), ROI_ALIGN)


def _axis_weights(edges: np.ndarray, size: int) -> np.ndarray:
    """Integral of each tent column over each bin interval, ``(bins, size)``."""
    centers = np.arange(size) + 0.5
    cdf = _tent_cdf(edges[:, None] - centers[None, :])
    return cdf[1:] - cdf[:-1]


def _check_bins(b: Box, spec: PoolSpec):
    bw = b.width / spec.bins_x
    bh = b.height / spec.bins_y
    if not (bw > 0.0 and bh > 0.0):
        raise ValidationError("degenerate bin: zero-area pooling bin")
    return bw, bh


def prroi_forward(f: np.ndarray, b: Box, spec: PoolSpec = PoolSpec()) -> PoolResult:
    """Precise RoI Pooling: exact average of the interpolated feature over
    every bin rectangle."""
    f = as_feature_map(f)
    _, h, w = f.shape
    bw, bh = _check_bins(b, spec)
    ix = _axis_weights(_bin_edges(b.x1, b.x2, spec.bins_x), w)  # (bx, W)
    iy = _axis_weights(_bin_edges(b.y1, b.y2, spec.bins_y), h)  # (by, H)
    values = np.einsum("yi,cij,xj->yxc", iy, f, ix) / (bw * bh)
    return PoolResult(values, PRROI)


def prroi_backward(
    f: np.ndarray, b: Box, spec: PoolSpec, upstream: np.ndarray
) -> PoolGradients:
    """Gradients of ``sum(upstream * prroi_forward(f, b).values)`` with
    respect to the feature map and the four box coordinates."""
    f = as_feature_map(f)
    _, h, w = f.shape
    nx, ny = spec.bins_x, spec.bins_y
    bw, bh = _check_bins(b, spec)
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != (ny, nx, f.shape[0]):
        raise ValidationError(f"upstream must have shape {(ny, nx, f.shape[0])}, got {g.shape}")

    ex = _bin_edges(b.x1, b.x2, nx)
    ey = _bin_edges(b.y1, b.y2, ny)
    ix = _axis_weights(ex, w)
    iy = _axis_weights(ey, h)
    area = bw * bh

    d_features = np.einsum("yxc,yi,xj->cij", g, iy, ix) / area

    # Integral of a bin = sum_ij f_ij Ix_j Iy_i. Moving an edge changes one
    # axis integral by +-tent(edge - center); moving x1/x2 also drags every
    # interior bin edge and rescales the bin area.
    centers_x = np.arange(w) + 0.5
    centers_y = np.arange(h) + 0.5
    tx = _tent(ex[:, None] - centers_x[None, :])  # (nx+1, W)
    ty = _tent(ey[:, None] - centers_y[None, :])  # (ny+1, H)
    # Line integrals of the feature along each vertical / horizontal edge,
    # restricted to a bin's extent in the other axis: (C, by, nx+1) etc.
    col_line = np.einsum("yi,cij,ej->cye", iy, f, tx)
    row_line = np.einsum("ei,cij,xj->cex", ty, f, ix)
    integral = np.einsum("yi,cij,xj->cyx", iy, f, ix)
    value = integral / area  # (C, by, bx)
    gc = g.transpose(2, 0, 1)  # (C, by, bx)

    k = np.arange(nx)
    # d(lo edge of bin k)/dx1 = 1 - k/n, d(hi edge)/dx1 = 1 - (k+1)/n
    lo_dx1, hi_dx1 = 1.0 - k / nx, 1.0 - (k + 1) / nx
    lo_dx2, hi_dx2 = k / nx, (k + 1) / nx
    ds_dlo_x = -col_line[:, :, :-1]
    ds_dhi_x = col_line[:, :, 1:]
    ds_dx1 = ds_dlo_x * lo_dx1 + ds_dhi_x * hi_dx1
    ds_dx2 = ds_dlo_x * lo_dx2 + ds_dhi_x * hi_dx2
    # bin area = (x2-x1)(y2-y1)/(nx ny)
    da_dx = bh / nx
    dv_dx1 = (ds_dx1 + value * da_dx) / area
    dv_dx2 = (ds_dx2 - value * da_dx) / area

    k = np.arange(ny)[:, None]
    lo_dy1, hi_dy1 = 1.0 - k / ny, 1.0 - (k + 1) / ny
    lo_dy2, hi_dy2 = k / ny, (k + 1) / ny
    ds_dlo_y = -row_line[:, :-1, :]
    ds_dhi_y = row_line[:, 1:, :]
    ds_dy1 = ds_dlo_y * lo_dy1 + ds_dhi_y * hi_dy1
    ds_dy2 = ds_dlo_y * lo_dy2 + ds_dhi_y * hi_dy2
    da_dy = bw / ny
    dv_dy1 = (ds_dy1 + value * da_dy) / area
    dv_dy2 = (ds_dy2 - value * da_dy) / area

    d_box = np.array([
        np.sum(gc * dv_dx1),
        np.sum(gc * dv_dy1),
        np.sum(gc * dv_dx2),
        np.sum(gc * dv_dy2),
    ])
    return PoolGradients(d_features, d_box)


def pool(f: np.ndarray, b: Box, spec: PoolSpec, samples_per_axis: int = 2) -> PoolResult:
    """Dispatch on ``spec.operator``."""
    if spec.operator == ROI_POOL_MAX:
        return roi_pool_max(f, b, spec)
    if spec.operator == ROI_ALIGN:
        return roi_align(f, b, spec, samples_per_axis)
    return prroi_forward(f, b, spec)
