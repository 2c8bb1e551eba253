"""Edge-preserving bilateral smoothing applied to frames before graph construction."""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BilateralParams:
    sigma_spatial: float = 3.0
    sigma_range: float = 25.0
    radius: int = 6

    def __post_init__(self):
        if self.sigma_spatial <= 0 or self.sigma_range <= 0:
            raise ValueError("bilateral sigmas must be strictly positive")
        if self.radius < 1:
            raise ValueError("bilateral radius must be >= 1")


_RANGE_LUT_CACHE: dict = {}

# Weight tables are built with scalar math.exp so that a per-pixel reference
# evaluation reproduces the filter bit-exactly (numpy's vectorized exp is not
# ulp-identical to libm).


def _spatial_table(sigma: float, radius: int) -> np.ndarray:
    inv = 1.0 / (2.0 * sigma * sigma)
    size = 2 * radius + 1
    table = np.empty((size, size), dtype=np.float64)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            table[dy + radius, dx + radius] = math.exp(-(dx * dx + dy * dy) * inv)
    return table


def _range_table(sigma: float) -> np.ndarray:
    key = float(sigma)
    table = _RANGE_LUT_CACHE.get(key)
    if table is None:
        inv = 1.0 / (2.0 * sigma * sigma)
        table = np.array([math.exp(-d2 * inv) for d2 in range(3 * 255 * 255 + 1)])
        _RANGE_LUT_CACHE[key] = table
    return table


def bilateral_filter(frame: np.ndarray, params: BilateralParams) -> np.ndarray:
    """Range-and-space weighted Gaussian average over a (2r+1)^2 window.

    The range kernel uses the joint RGB Euclidean distance to the window
    center, the window is clipped at the borders with weights renormalized,
    and each channel is rounded half-up to an integer in [0, 255].
    """
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ValueError("frame must be (H, W, 3)")
    h, w = frame.shape[:2]
    r = params.radius
    src_i = frame.astype(np.int32)
    src_f = frame.astype(np.float64)

    spatial = _spatial_table(params.sigma_spatial, r)
    range_lut = _range_table(params.sigma_range)

    num = np.zeros((h, w, 3), dtype=np.float64)
    den = np.zeros((h, w), dtype=np.float64)
    for dy in range(-r, r + 1):
        ys0, ys1 = max(0, -dy), min(h, h - dy)      # destination rows
        if ys0 >= ys1:
            continue
        for dx in range(-r, r + 1):
            xs0, xs1 = max(0, -dx), min(w, w - dx)  # destination cols
            if xs0 >= xs1:
                continue
            ctr_i = src_i[ys0:ys1, xs0:xs1]
            nbr_i = src_i[ys0 + dy:ys1 + dy, xs0 + dx:xs1 + dx]
            diff = ctr_i - nbr_i
            d2 = diff[..., 0] ** 2 + diff[..., 1] ** 2 + diff[..., 2] ** 2
            wgt = spatial[dy + r, dx + r] * range_lut[d2]
            nbr_f = src_f[ys0 + dy:ys1 + dy, xs0 + dx:xs1 + dx]
            num[ys0:ys1, xs0:xs1] += wgt[..., None] * nbr_f
            den[ys0:ys1, xs0:xs1] += wgt
    out = np.floor(num / den[..., None] + 0.5)
    return np.clip(out, 0, 255).astype(np.uint8)


def filter_sequence(seq: np.ndarray, params: BilateralParams, pool=None) -> np.ndarray:
    """Filter every frame of a (T, H, W, 3) sequence; frames are independent."""
    if pool is None:
        return np.stack([bilateral_filter(f, params) for f in seq])
    return np.stack(list(pool.map(lambda f: bilateral_filter(f, params), seq)))
