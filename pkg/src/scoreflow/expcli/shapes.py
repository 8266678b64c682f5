"""Procedural shape masks and uniform sampling from mask regions.

Masks are dark (0) inside the shape and white (255) outside, so they can be
written as PGM files and read back by the same sampler.
"""

from __future__ import annotations

import math

import numpy as np

from .pgm import GrayscaleMask

THRESHOLD = 128
SHAPES = ("disk", "heart", "spiral", "square")


def _grid(size):
    # pixel centres in [-1, 1]^2, row 0 at y = +1
    c = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    return np.meshgrid(c, -c)


def disk_mask(size=64, radius=0.8):
    x, y = _grid(size)
    return _to_mask(x * x + y * y <= radius * radius)


def heart_mask(size=64, scale=0.75):
    x, y = _grid(size)
    u, v = x / scale, y / scale + 0.15
    inside = (u * u + v * v - 1.0) ** 3 - u * u * v**3 <= 0.0
    return _to_mask(inside)


def spiral_mask(size=64, turns=2.0, width=0.09, r_max=0.9):
    """Archimedean spiral band ``r = b theta`` with ``theta`` in ``[0, 2 pi turns]``."""
    x, y = _grid(size)
    r = np.hypot(x, y)
    theta = np.mod(np.arctan2(y, x), 2.0 * math.pi)
    span = 2.0 * math.pi * turns
    b = r_max / span
    best = np.full(r.shape, np.inf)
    for k in range(int(math.ceil(turns)) + 1):
        th = np.minimum(theta + 2.0 * math.pi * k, span)
        best = np.minimum(best, np.abs(r - b * th))
    return _to_mask(best <= width / 2.0)


def square_mask(size=64):
    return _to_mask(np.ones((size, size), dtype=bool))


def _to_mask(inside):
    return GrayscaleMask(np.where(inside, 0, 255).astype(np.uint8))


def make_shape(name, size=64):
    makers = {"disk": disk_mask, "heart": heart_mask, "spiral": spiral_mask, "square": square_mask}
    if name not in makers:
        raise ValueError(f"unknown shape {name!r}; expected one of {SHAPES}")
    return makers[name](size)


def shape_sample(mask, n, rng):
    """``n`` points uniform over the mask cells with value below 128, in ``[-1, 1]^2``.

    The longer image side spans ``[-1, 1]``; image row 0 is the top (``y`` high).
    """
    rows, cols = np.nonzero(mask.pixels < THRESHOLD)
    if rows.size == 0:
        raise ValueError("mask has no pixels below the threshold 128")
    n = int(n)
    pick = rng.integers(0, rows.size, size=n)
    jitter = rng.uniform(0.0, 1.0, size=(n, 2))
    h, w = mask.height, mask.width
    s = 2.0 / max(h, w)
    px = cols[pick] + jitter[:, 0]
    py = rows[pick] + jitter[:, 1]
    return np.column_stack(((px - w / 2.0) * s, (h / 2.0 - py) * s))
