"""Construction of text-rich multi-image instruction data."""

from .assemble import DEFAULT_TEMPLATES, ReferringTemplates, assemble_multiturn, referring_phrase
from .instances import (
    InstructionInstance,
    Turn,
    content_hash,
    dedup,
    load_instances,
    normalize_text,
    save_instances,
    with_hash,
)
from .tables import MAX_RENDER_ROWS, TableSpec, TableStyle, render_table, split_table, split_table_at

__all__ = [
    "DEFAULT_TEMPLATES",
    "InstructionInstance",
    "MAX_RENDER_ROWS",
    "ReferringTemplates",
    "TableSpec",
    "TableStyle",
    "Turn",
    "assemble_multiturn",
    "content_hash",
    "dedup",
    "load_instances",
    "normalize_text",
    "referring_phrase",
    "render_table",
    "save_instances",
    "split_table",
    "split_table_at",
    "with_hash",
]
