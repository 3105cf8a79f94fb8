"""Small statistical helpers shared by the estimation modules."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class Estimate(NamedTuple):
    """Point estimate with a 95% confidence half-width."""

    value: float
    half_width: float


def linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Least-squares line fit.

    Returns (slope, intercept, slope_half_width) where the half-width is
    1.96 standard errors from the residual variance (0 for a perfect fit
    or fewer than 3 points).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m = x.size
    xbar = x.mean()
    sxx = np.sum((x - xbar) ** 2)
    slope, intercept = np.polyfit(x, y, 1)
    if m <= 2 or sxx == 0:
        return float(slope), float(intercept), 0.0
    resid = y - (slope * x + intercept)
    s2 = np.sum(resid**2) / (m - 2)
    return float(slope), float(intercept), float(1.96 * np.sqrt(s2 / sxx))


def combine_path_values(values) -> Estimate:
    """Mean of per-path scalars with 1.96 se(mean) half-width."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("no values to combine")
    if v.size == 1:
        return Estimate(float(v[0]), 0.0)
    return Estimate(float(v.mean()), float(1.96 * v.std(ddof=1) / np.sqrt(v.size)))


def pava_nonincreasing(y: np.ndarray) -> np.ndarray:
    """L2 projection of y onto non-increasing sequences (pool adjacent violators)."""
    y = np.asarray(y, dtype=float)
    n = y.size
    level = y.copy()
    weight = np.ones(n)
    # stack of blocks as (value, weight); merge while increasing
    vals: list[float] = []
    wts: list[float] = []
    sizes: list[int] = []
    for i in range(n):
        v, w, s = level[i], weight[i], 1
        while vals and vals[-1] < v:
            v0, w0, s0 = vals.pop(), wts.pop(), sizes.pop()
            v = (v * w + v0 * w0) / (w + w0)
            w += w0
            s += s0
        vals.append(v)
        wts.append(w)
        sizes.append(s)
    out = np.empty(n)
    pos = 0
    for v, s in zip(vals, sizes):
        out[pos : pos + s] = v
        pos += s
    return out
