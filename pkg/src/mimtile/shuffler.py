"""Pixel-shuffle compression of visual feature grids.

A shuffle with factor ``n = s*s`` merges every ``s x s`` block of
neighbouring features into one feature of ``n * d`` channels, so the
sequence gets ``n`` times shorter while no value is lost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .allocator import EncoderGeometry
from .errors import ShapeError

LAYOUTS = ("block2d", "run1d")


@dataclass(frozen=True)
class FeatureTensor:
    values: np.ndarray  # (grid_h, grid_w, dim_d) float32

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float32)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ShapeError(f"feature tensor must be (grid_h, grid_w, d) with all dims >= 1, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("feature tensor contains NaN or Inf")
        arr = arr.copy() if arr is self.values else arr
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def grid_h(self) -> int:
        return self.values.shape[0]

    @property
    def grid_w(self) -> int:
        return self.values.shape[1]

    @property
    def dim_d(self) -> int:
        return self.values.shape[2]

    @property
    def length(self) -> int:
        return self.grid_h * self.grid_w

    def __eq__(self, other):
        if not isinstance(other, FeatureTensor):
            return NotImplemented
        return self.values.shape == other.values.shape and self.values.tobytes() == other.values.tobytes()

    __hash__ = None


def _block_side(n: int) -> int:
    s = math.isqrt(n) if n >= 1 else 0
    if s < 1 or s * s != n:
        raise ShapeError(f"shuffle factor {n} is not a positive perfect square")
    return s


def pixel_shuffle(t: FeatureTensor, n: int, layout: str = "block2d") -> FeatureTensor:
    """Concatenate groups of ``n`` neighbouring features along the channel axis.

    ``block2d`` groups s x s spatial blocks (row-major inside the block).
    ``run1d`` groups runs of ``n`` consecutive features of the flattened
    sequence and returns a single-row grid.
    """
    x = t.values
    h, w, d = x.shape
    if layout == "run1d":
        _block_side(n)
        if (h * w) % n:
            raise ShapeError(f"sequence length {h * w} is not divisible by n={n}")
        return FeatureTensor(x.reshape(1, h * w // n, n * d))
    if layout != "block2d":
        raise ValueError(f"unknown shuffle layout {layout!r}")
    s = _block_side(n)
    if h % s or w % s:
        raise ShapeError(f"grid {h}x{w} is not divisible by block side {s}")
    y = x.reshape(h // s, s, w // s, s, d).transpose(0, 2, 1, 3, 4)
    return FeatureTensor(y.reshape(h // s, w // s, n * d))


def pixel_unshuffle(
    t: FeatureTensor,
    n: int,
    layout: str = "block2d",
    grid: tuple[int, int] | None = None,
) -> FeatureTensor:
    """Exact inverse of :func:`pixel_shuffle`.

    ``run1d`` flattens away the original grid shape, so ``grid`` must be
    given to restore it (defaults to a single row).
    """
    x = t.values
    h, w, nd = x.shape
    s = _block_side(n)
    if nd % n:
        raise ShapeError(f"feature dim {nd} is not divisible by n={n}")
    d = nd // n
    if layout == "run1d":
        length = h * w * n
        gh, gw = grid or (1, length)
        if gh * gw != length:
            raise ShapeError(f"grid {gh}x{gw} does not hold {length} features")
        return FeatureTensor(x.reshape(gh, gw, d))
    if layout != "block2d":
        raise ValueError(f"unknown shuffle layout {layout!r}")
    y = x.reshape(h, w, s, s, d).transpose(0, 2, 1, 3, 4)
    return FeatureTensor(y.reshape(h * s, w * s, d))


def mock_encode(tile: np.ndarray, geometry: EncoderGeometry | None = None) -> FeatureTensor:
    """Deterministic stand-in for a vision encoder.

    Each patch becomes one feature: per-channel means scaled to [0, 1],
    then the normalised patch row and column, then zeros up to ``d``.
    """
    geometry = geometry or EncoderGeometry()
    v, p, d = geometry.tile_resolution_v, geometry.patch_size, geometry.feature_dim_d
    tile = np.asarray(tile)
    if tile.ndim == 2:
        tile = tile[:, :, None]
    if tile.shape[:2] != (v, v):
        raise ShapeError(f"tile must be {v}x{v}, got {tile.shape[0]}x{tile.shape[1]}")
    c = tile.shape[2]
    if d < c + 2:
        raise ShapeError(f"feature dim {d} too small for {c} channel means plus 2 coordinates")

    g = v // p
    patches = tile.astype(np.float64).reshape(g, p, g, p, c)
    means = patches.mean(axis=(1, 3)) / 255.0
    feats = np.zeros((g, g, d), dtype=np.float32)
    feats[:, :, :c] = means
    rows, cols = np.meshgrid(np.arange(g), np.arange(g), indexing="ij")
    feats[:, :, c] = rows / g
    feats[:, :, c + 1] = cols / g
    return FeatureTensor(feats)
