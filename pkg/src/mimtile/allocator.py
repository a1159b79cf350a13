"""Sub-image budget allocation across the images of one sample.

Each image first gets ``floor(h / v) * floor(w / v)`` sub-images. When the
total exceeds the budget ``M`` the counts are scaled down by ``M / total``
and floored. Every image keeps at least one sub-image, and a deterministic
repair pass trims the largest counts if that floor pushes the total back
over budget.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

from .errors import BudgetTooSmall, EmptyInput, ShapeError


@dataclass(frozen=True)
class EncoderGeometry:
    tile_resolution_v: int = 364
    patch_size: int = 14
    raw_features_per_tile_L: int | None = None
    feature_dim_d: int = 1152
    shuffle_factor_n: int = 4

    def __post_init__(self):
        for name in ("tile_resolution_v", "patch_size", "feature_dim_d", "shuffle_factor_n"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ShapeError(f"{name} must be a positive integer, got {value!r}")
        if self.tile_resolution_v % self.patch_size:
            raise ShapeError(
                f"tile resolution {self.tile_resolution_v} is not divisible by patch size {self.patch_size}"
            )
        side = self.tile_resolution_v // self.patch_size
        if self.raw_features_per_tile_L is None:
            object.__setattr__(self, "raw_features_per_tile_L", side * side)
        elif self.raw_features_per_tile_L != side * side:
            raise ShapeError(
                f"raw_features_per_tile_L={self.raw_features_per_tile_L} but the patch grid is {side}x{side}"
            )
        s = math.isqrt(self.shuffle_factor_n)
        if s * s != self.shuffle_factor_n:
            raise ShapeError(f"shuffle factor {self.shuffle_factor_n} is not a perfect square")
        if side % s:
            raise ShapeError(f"patch grid side {side} is not divisible by sqrt(n)={s}")

    @property
    def grid_side(self) -> int:
        return self.tile_resolution_v // self.patch_size

    @property
    def features_per_tile(self) -> int:
        """Sequence length of one tile after pixel shuffle."""
        return self.raw_features_per_tile_L // self.shuffle_factor_n

    @property
    def shuffled_dim(self) -> int:
        return self.feature_dim_d * self.shuffle_factor_n

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderGeometry":
        return cls(**{k: d[k] for k in d if k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class ImageSpec:
    id: str
    height_px: int
    width_px: int
    source_path: str | None = None

    def __post_init__(self):
        if self.height_px < 1 or self.width_px < 1:
            raise ShapeError(f"image {self.id!r} has non-positive size {self.height_px}x{self.width_px}")


@dataclass(frozen=True)
class ImageAllocation:
    image_id: str
    s_initial: int
    s_alloc: int


@dataclass(frozen=True)
class AllocationPlan:
    budget_M: int
    alpha: Fraction
    per_image: tuple[ImageAllocation, ...]
    geometry: EncoderGeometry = field(default_factory=EncoderGeometry)

    @property
    def total(self) -> int:
        return sum(a.s_alloc for a in self.per_image)

    def to_dict(self) -> dict:
        return {
            "budget_M": self.budget_M,
            "alpha": str(self.alpha),
            "per_image": [asdict(a) for a in self.per_image],
            "geometry": self.geometry.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "AllocationPlan":
        return cls(
            budget_M=d["budget_M"],
            alpha=Fraction(d["alpha"]),
            per_image=tuple(ImageAllocation(**a) for a in d["per_image"]),
            geometry=EncoderGeometry.from_dict(d["geometry"]),
        )


def initial_counts(images: Sequence[ImageSpec], geometry: EncoderGeometry) -> list[int]:
    v = geometry.tile_resolution_v
    return [(im.height_px // v) * (im.width_px // v) for im in images]


def scale_counts(counts: Sequence[int], budget_M: int) -> tuple[Fraction, list[int]]:
    """Scale clamped counts so they fit ``budget_M``.

    Returns ``(alpha, scaled)``; ``alpha`` is exact. Counts must already be
    clamped to >= 1. Scaled entries are re-clamped to >= 1, so the sum may
    still exceed the budget; :func:`allocate` repairs that.
    """
    if budget_M < len(counts):
        raise BudgetTooSmall(budget_M, len(counts))
    total = sum(counts)
    if total <= budget_M:
        return Fraction(1), list(counts)
    alpha = Fraction(budget_M, total)
    return alpha, [max(1, math.floor(alpha * c)) for c in counts]


def _repair(alloc: list[int], budget_M: int) -> None:
    # decrement the largest entry > 1, lowest index on ties
    excess = sum(alloc) - budget_M
    while excess > 0:
        i = max(range(len(alloc)), key=lambda j: (alloc[j], -j))
        alloc[i] -= 1
        excess -= 1


def _redistribute(alloc: list[int], counts: Sequence[int], alpha: Fraction, budget_M: int) -> None:
    # largest-remainder top-up, never above an image's unscaled count
    spare = budget_M - sum(alloc)
    order = sorted(
        range(len(alloc)),
        key=lambda j: (-(alpha * counts[j] - math.floor(alpha * counts[j])), j),
    )
    for j in order:
        if spare <= 0:
            break
        if alloc[j] < counts[j]:
            alloc[j] += 1
            spare -= 1


def allocate(
    images: Sequence[ImageSpec],
    geometry: EncoderGeometry | None = None,
    budget_M: int = 50,
    redistribute_remainder: bool = False,
) -> AllocationPlan:
    """Allocate the sub-image budget proportionally to image size."""
    geometry = geometry or EncoderGeometry()
    if not images:
        raise EmptyInput("no images to allocate")
    if budget_M < len(images):
        raise BudgetTooSmall(budget_M, len(images))
    ids = [im.id for im in images]
    if len(set(ids)) != len(ids):
        raise ValueError("image ids must be unique within one request")

    s_initial = initial_counts(images, geometry)
    clamped = [max(1, s) for s in s_initial]
    alpha, alloc = scale_counts(clamped, budget_M)
    _repair(alloc, budget_M)
    if redistribute_remainder and alpha != 1:
        _redistribute(alloc, clamped, alpha, budget_M)

    return AllocationPlan(
        budget_M=budget_M,
        alpha=alpha,
        per_image=tuple(ImageAllocation(i, s, a) for i, s, a in zip(ids, s_initial, alloc)),
        geometry=geometry,
    )
