"""Crop-grid selection and tiling of one image into v x v sub-images."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .allocator import AllocationPlan, EncoderGeometry, ImageSpec
from .errors import InvalidCanvas, InvalidImage, PlanMismatch

PAD_VALUE = 0


@dataclass(frozen=True)
class Rect:
    x: int
    y: int
    w: int
    h: int


@dataclass(frozen=True)
class GridConfig:
    rows_r: int
    cols_c: int
    tile_size: int
    content_rect: Rect
    effective_resolution: int
    wasted_area: int

    @property
    def canvas_h(self) -> int:
        return self.rows_r * self.tile_size

    @property
    def canvas_w(self) -> int:
        return self.cols_c * self.tile_size

    @property
    def n_tiles(self) -> int:
        return self.rows_r * self.cols_c


@dataclass
class TileSet:
    image_id: str
    grid: GridConfig
    sub_tiles: list[np.ndarray]
    global_tile: np.ndarray

    @property
    def dedup_single_tile(self) -> bool:
        return self.grid.n_tiles == 1

    @property
    def tile_count(self) -> int:
        return len(self.sub_tiles) + 1


def _fit_scale(h: int, w: int, canvas_h: int, canvas_w: int) -> Fraction:
    return min(Fraction(canvas_h, h), Fraction(canvas_w, w))


def _content_rect(h: int, w: int, canvas_h: int, canvas_w: int) -> Rect:
    scale = _fit_scale(h, w, canvas_h, canvas_w)
    # at least one pixel, even for extreme aspect ratios
    ch = max(1, math.floor(h * scale))
    cw = max(1, math.floor(w * scale))
    return Rect((canvas_w - cw) // 2, (canvas_h - ch) // 2, cw, ch)


def search_grid(height_px: int, width_px: int, s_alloc: int, geometry: EncoderGeometry | None = None) -> GridConfig:
    """Pick the rows x cols grid that keeps the most source resolution.

    Candidates are every (r, c) with r * c <= s_alloc. The score is the
    aspect-preserving fitted area, capped at the source area; ties go to
    less padding, then fewer tiles, then squarer grids, then fewer rows.
    """
    v = (geometry or EncoderGeometry()).tile_resolution_v
    if s_alloc < 1:
        raise ValueError(f"s_alloc must be >= 1, got {s_alloc}")
    h, w = height_px, width_px
    source_area = h * w

    best_key = None
    best = None
    for r in range(1, s_alloc + 1):
        for c in range(1, s_alloc // r + 1):
            scale = _fit_scale(h, w, r * v, c * v)
            effective = min(math.floor(h * scale) * math.floor(w * scale), source_area)
            wasted = r * v * c * v - effective
            key = (-effective, wasted, r * c, abs(r - c), r)
            if best_key is None or key < best_key:
                best_key, best = key, (r, c, effective, wasted)

    r, c, effective, wasted = best
    return GridConfig(r, c, v, _content_rect(h, w, r * v, c * v), effective, wasted)


def _as_rgb_array(image) -> np.ndarray:
    if isinstance(image, Image.Image):
        image = np.asarray(image.convert("RGB"))
    arr = np.asarray(image)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[0] == 0 or arr.shape[1] == 0 or arr.shape[2] not in (1, 3, 4):
        raise InvalidImage(f"expected a non-empty HxWxC raster, got shape {arr.shape}")
    if arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
    return np.ascontiguousarray(arr[:, :, :3], dtype=np.uint8)


def _resize(arr: np.ndarray, height: int, width: int) -> np.ndarray:
    if arr.shape[:2] == (height, width):
        return arr.copy()
    img = Image.fromarray(arr)
    return np.asarray(img.resize((width, height), Image.Resampling.BILINEAR))


def pad_resize(image, grid: GridConfig) -> np.ndarray:
    """Fit ``image`` into the grid canvas, centered, padded with black."""
    arr = _as_rgb_array(image)
    h, w = arr.shape[:2]
    rect = _content_rect(h, w, grid.canvas_h, grid.canvas_w)
    canvas = np.full((grid.canvas_h, grid.canvas_w, 3), PAD_VALUE, dtype=np.uint8)
    canvas[rect.y : rect.y + rect.h, rect.x : rect.x + rect.w] = _resize(arr, rect.h, rect.w)
    return canvas


def split_tiles(canvas: np.ndarray, grid: GridConfig) -> list[np.ndarray]:
    """Cut the canvas into row-major v x v tiles."""
    v = grid.tile_size
    if canvas.shape[:2] != (grid.canvas_h, grid.canvas_w):
        raise InvalidCanvas(
            f"canvas is {canvas.shape[0]}x{canvas.shape[1]}, grid expects {grid.canvas_h}x{grid.canvas_w}"
        )
    return [
        np.ascontiguousarray(canvas[r * v : (r + 1) * v, c * v : (c + 1) * v])
        for r in range(grid.rows_r)
        for c in range(grid.cols_c)
    ]


def reassemble(tiles: Sequence[np.ndarray], rows: int, cols: int) -> np.ndarray:
    if len(tiles) != rows * cols:
        raise InvalidCanvas(f"{len(tiles)} tiles cannot fill a {rows}x{cols} grid")
    return np.concatenate(
        [np.concatenate(tiles[r * cols : (r + 1) * cols], axis=1) for r in range(rows)], axis=0
    )


def partition(image, spec: ImageSpec, s_alloc: int, geometry: EncoderGeometry | None = None) -> TileSet:
    geometry = geometry or EncoderGeometry()
    arr = _as_rgb_array(image)
    if arr.shape[:2] != (spec.height_px, spec.width_px):
        raise InvalidImage(
            f"image {spec.id!r} is {arr.shape[0]}x{arr.shape[1]}, expected {spec.height_px}x{spec.width_px}"
        )
    grid = search_grid(spec.height_px, spec.width_px, s_alloc, geometry)
    v = geometry.tile_resolution_v
    global_tile = _resize(arr, v, v)
    if grid.n_tiles == 1:
        # the single sub-tile would duplicate the global view
        return TileSet(spec.id, grid, [], global_tile)
    return TileSet(spec.id, grid, split_tiles(pad_resize(arr, grid), grid), global_tile)


def load_image(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except (OSError, ValueError) as e:
        raise InvalidImage(f"cannot read image {path}: {e}") from e


def image_size(path) -> tuple[int, int]:
    """(height, width) without decoding pixel data."""
    try:
        with Image.open(path) as img:
            w, h = img.size
    except (OSError, ValueError) as e:
        raise InvalidImage(f"cannot read image {path}: {e}") from e
    return h, w


def save_png(arr: np.ndarray, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path, format="PNG")


def partition_many(
    images: Sequence,
    specs: Sequence[ImageSpec],
    plan: AllocationPlan,
    workers: int = 1,
) -> list[TileSet]:
    """Partition every image of a plan; results follow input order."""
    if [s.id for s in specs] != [a.image_id for a in plan.per_image] or len(images) != len(specs):
        raise PlanMismatch("images, specs and plan entries must line up one-to-one")

    def run(i):
        return partition(images[i], specs[i], plan.per_image[i].s_alloc, plan.geometry)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(run, range(len(specs))))
