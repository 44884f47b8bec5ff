"""Grid resampling primitives shared by prompt extraction, decoding, and evaluation."""

from __future__ import annotations

import math

import numpy as np


def round_half_up(x: float) -> int:
    """Round with ties away from zero toward +inf, matching the encoder's preprocessing."""
    return int(math.floor(x + 0.5))


def bilinear_resize(values: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with pixel-center alignment (align-corners = false).

    Output pixel centers map to source coordinates
    ``(i + 0.5) * in / out - 0.5``, clamped to the source extent, which
    matches the usual image-resize convention of the major frameworks.
    """
    src = np.asarray(values, dtype=np.float64)
    in_h, in_w = src.shape

    ys = np.clip((np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5, 0.0, in_h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5, 0.0, in_w - 1.0)

    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]

    rows0 = src[y0, :]
    rows1 = src[y1, :]
    vert = rows0 * (1.0 - fy) + rows1 * fy
    return vert[:, x0] * (1.0 - fx) + vert[:, x1] * fx


def overlap_matrix(n_cells: int, cell_size: float, n_src: int, src_size: float) -> np.ndarray:
    """Interval-overlap weights between source pixels and destination cells.

    Entry ``[m, i]`` is the length of
    ``[i * src_size, (i+1) * src_size) intersect [m * cell_size, (m+1) * cell_size)``,
    used for exact area-averaged downsampling of an axis-aligned grid.
    """
    cell_lo = np.arange(n_cells, dtype=np.float64) * cell_size
    cell_hi = cell_lo + cell_size
    src_lo = np.arange(n_src, dtype=np.float64) * src_size
    src_hi = src_lo + src_size
    lo = np.maximum(cell_lo[:, None], src_lo[None, :])
    hi = np.minimum(cell_hi[:, None], src_hi[None, :])
    return np.clip(hi - lo, 0.0, None)
