"""Manifest linking images, allocations, grids, tiles and tensors."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema

from .allocator import AllocationPlan, EncoderGeometry, ImageAllocation, ImageSpec
from .errors import ManifestError
from .partitioner import GridConfig

VERSION = 1


@lru_cache(maxsize=None)
def load_schema(name: str = "manifest") -> dict:
    return json.loads((resources.files("mimtile") / "schemas" / f"{name}.schema.json").read_text(encoding="utf-8"))


@dataclass
class ImageEntry:
    id: str
    path: str
    h: int
    w: int
    s_initial: int
    s_alloc: int
    grid: dict
    canvas: dict
    content_rect: dict
    effective_resolution: int
    tile_paths: list[str] = field(default_factory=list)
    global_tile_path: str | None = None
    dedup_single_tile: bool = False
    tensor_paths: list[str] = field(default_factory=list)

    @property
    def image_id(self) -> str:
        return self.id

    @property
    def n_sub_tiles(self) -> int:
        return 0 if self.dedup_single_tile else self.grid["r"] * self.grid["c"]

    @property
    def tile_count(self) -> int:
        return self.n_sub_tiles + 1

    def spec(self) -> ImageSpec:
        return ImageSpec(self.id, self.h, self.w, self.path)

    @classmethod
    def from_plan(cls, spec: ImageSpec, alloc: ImageAllocation, grid: GridConfig, path: str) -> "ImageEntry":
        r = grid.content_rect
        return cls(
            id=spec.id,
            path=path,
            h=spec.height_px,
            w=spec.width_px,
            s_initial=alloc.s_initial,
            s_alloc=alloc.s_alloc,
            grid={"r": grid.rows_r, "c": grid.cols_c},
            canvas={"h": grid.canvas_h, "w": grid.canvas_w},
            content_rect={"x": r.x, "y": r.y, "w": r.w, "h": r.h},
            effective_resolution=grid.effective_resolution,
            dedup_single_tile=grid.n_tiles == 1,
        )


@dataclass
class Manifest:
    geometry: EncoderGeometry
    budget_M: int
    alpha: Fraction
    images: list[ImageEntry]
    redistribute_remainder: bool = False
    encode: dict | None = None
    base_dir: Path = field(default_factory=Path, repr=False, compare=False)

    def totals(self) -> dict:
        sub = sum(e.n_sub_tiles for e in self.images)
        glob = len(self.images)
        return {
            "sub_tiles": sub,
            "global_tiles": glob,
            "feature_tokens": (sub + glob) * self.geometry.features_per_tile,
        }

    def plan(self) -> AllocationPlan:
        return AllocationPlan(
            self.budget_M,
            self.alpha,
            tuple(ImageAllocation(e.id, e.s_initial, e.s_alloc) for e in self.images),
            self.geometry,
        )

    def resolve(self, rel: str) -> Path:
        return Path(self.base_dir) / rel

    def relative(self, path) -> str:
        return Path(os.path.relpath(Path(path).resolve(), Path(self.base_dir).resolve())).as_posix()

    def to_dict(self) -> dict:
        d = {
            "version": VERSION,
            "geometry": self.geometry.to_dict(),
            "budget_M": self.budget_M,
            "alpha": str(self.alpha),
            "redistribute_remainder": self.redistribute_remainder,
            "images": [{k: v for k, v in vars(e).items()} for e in self.images],
            "totals": self.totals(),
        }
        if self.encode is not None:
            d["encode"] = self.encode
        return d

    def check(self) -> None:
        """Raise :class:`ManifestError` on any internal inconsistency."""
        problems = consistency_problems(self.to_dict())
        if problems:
            raise ManifestError("; ".join(problems))

    def save(self, path) -> None:
        self.check()
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        tmp.replace(path)

    @classmethod
    def from_dict(cls, d: dict, base_dir=".") -> "Manifest":
        try:
            jsonschema.validate(d, load_schema())
        except jsonschema.ValidationError as e:
            raise ManifestError(f"manifest does not match schema: {e.message}") from e
        problems = consistency_problems(d)
        if problems:
            raise ManifestError("; ".join(problems))
        return cls(
            geometry=EncoderGeometry.from_dict(d["geometry"]),
            budget_M=d["budget_M"],
            alpha=Fraction(d["alpha"]),
            images=[ImageEntry(**e) for e in d["images"]],
            redistribute_remainder=d.get("redistribute_remainder", False),
            encode=d.get("encode"),
            base_dir=Path(base_dir),
        )

    @classmethod
    def load(cls, path) -> "Manifest":
        path = Path(path)
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ManifestError(f"cannot read manifest {path}: {e}") from e
        return cls.from_dict(d, path.parent)


def consistency_problems(d: dict) -> list[str]:
    """Cross-field checks the schema cannot express."""
    problems = []
    try:
        geometry = EncoderGeometry.from_dict(d["geometry"])
    except Exception as e:
        return [f"bad geometry: {e}"]
    v = geometry.tile_resolution_v
    ids = [e["id"] for e in d["images"]]
    if len(set(ids)) != len(ids):
        problems.append("duplicate image ids")
    if sum(e["s_alloc"] for e in d["images"]) > d["budget_M"]:
        problems.append("sum of s_alloc exceeds budget_M")

    sub = 0
    for e in d["images"]:
        r, c = e["grid"]["r"], e["grid"]["c"]
        name = e["id"]
        if r * c > e["s_alloc"]:
            problems.append(f"{name}: grid {r}x{c} exceeds s_alloc={e['s_alloc']}")
        if (e["canvas"]["h"], e["canvas"]["w"]) != (r * v, c * v):
            problems.append(f"{name}: canvas does not equal grid x v")
        if e["dedup_single_tile"] != (r * c == 1):
            problems.append(f"{name}: dedup_single_tile disagrees with grid {r}x{c}")
        n_sub = 0 if e["dedup_single_tile"] else r * c
        if e["tile_paths"] and len(e["tile_paths"]) != n_sub:
            problems.append(f"{name}: {len(e['tile_paths'])} tile paths for {n_sub} sub-tiles")
        if e["tensor_paths"] and len(e["tensor_paths"]) != n_sub + 1:
            problems.append(f"{name}: {len(e['tensor_paths'])} tensor paths for {n_sub + 1} tiles")
        rect = e["content_rect"]
        if rect["x"] + rect["w"] > c * v or rect["y"] + rect["h"] > r * v:
            problems.append(f"{name}: content_rect leaves the canvas")
        sub += n_sub

    glob = len(d["images"])
    expected = {"sub_tiles": sub, "global_tiles": glob, "feature_tokens": (sub + glob) * geometry.features_per_tile}
    if d["totals"] != expected:
        problems.append(f"totals {d['totals']} do not match recomputed {expected}")

    enc = d.get("encode")
    if enc is not None and enc["shuffle_n"] != geometry.shuffle_factor_n:
        problems.append("encode.shuffle_n differs from geometry.shuffle_factor_n")
    return problems
