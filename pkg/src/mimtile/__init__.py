"""Adaptive high-resolution multi-image tiling, visual token budgeting and
text-rich multi-image instruction-data tools."""

from .allocator import AllocationPlan, EncoderGeometry, ImageAllocation, ImageSpec, allocate, initial_counts, scale_counts
from .partitioner import GridConfig, TileSet, pad_resize, partition, search_grid, split_tiles
from .sequencer import TokenSequence, assemble_sequence, check_budget, render_image_segment
from .shuffler import FeatureTensor, mock_encode, pixel_shuffle, pixel_unshuffle

__version__ = "0.1.0"

__all__ = [
    "AllocationPlan",
    "EncoderGeometry",
    "FeatureTensor",
    "GridConfig",
    "ImageAllocation",
    "ImageSpec",
    "TileSet",
    "TokenSequence",
    "allocate",
    "assemble_sequence",
    "check_budget",
    "initial_counts",
    "mock_encode",
    "pad_resize",
    "partition",
    "pixel_shuffle",
    "pixel_unshuffle",
    "render_image_segment",
    "scale_counts",
    "search_grid",
    "split_tiles",
]
