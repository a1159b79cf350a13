"""Table splitting and deterministic table-to-image rendering."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from ..errors import EmptyTable, FilteredOut, TooSmall

MAX_RENDER_ROWS = 20


class TableStyle(str, Enum):
    PLAIN = "plain"
    BANDED = "banded"
    BOLD_HEADER = "bold_header"
    MINIMAL = "minimal"


@dataclass(frozen=True)
class TableSpec:
    header: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]
    style_id: TableStyle = TableStyle.PLAIN

    def __post_init__(self):
        header = tuple("" if h is None else str(h) for h in self.header)
        rows = tuple(tuple("" if v is None else str(v) for v in row) for row in self.rows)
        for n, row in enumerate(rows):
            if len(row) != len(header):
                raise ValueError(f"row {n} has {len(row)} cells, header has {len(header)}")
        object.__setattr__(self, "header", header)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "style_id", TableStyle(self.style_id))

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_cols(self) -> int:
        return len(self.header)

    def to_record(self) -> dict:
        return {"header": list(self.header), "rows": [list(r) for r in self.rows], "style_id": self.style_id.value}

    @classmethod
    def from_record(cls, rec: dict) -> "TableSpec":
        return cls(tuple(rec["header"]), tuple(tuple(r) for r in rec["rows"]), rec.get("style_id", "plain"))


def split_table_at(t: TableSpec, axis: str, pivot: int) -> tuple[TableSpec, TableSpec]:
    if axis == "row":
        if not 0 < pivot < t.n_rows:
            raise ValueError(f"row pivot {pivot} must be strictly inside (0, {t.n_rows})")
        return (
            TableSpec(t.header, t.rows[:pivot], t.style_id),
            TableSpec(t.header, t.rows[pivot:], t.style_id),
        )
    if axis == "col":
        if not 0 < pivot < t.n_cols:
            raise ValueError(f"column pivot {pivot} must be strictly inside (0, {t.n_cols})")
        return (
            TableSpec(t.header[:pivot], tuple(r[:pivot] for r in t.rows), t.style_id),
            TableSpec(t.header[pivot:], tuple(r[pivot:] for r in t.rows), t.style_id),
        )
    raise ValueError(f"axis must be 'row' or 'col', got {axis!r}")


def split_table(t: TableSpec, seed: int) -> tuple[TableSpec, TableSpec]:
    """Split into two sub-tables along a seeded axis and pivot."""
    if t.n_rows < 2 or t.n_cols < 2:
        raise TooSmall(f"need at least 2 rows and 2 columns to split, table is {t.n_rows}x{t.n_cols}")
    rng = random.Random(f"split:{seed}")
    axis = rng.choice(("row", "col"))
    pivot = rng.randint(1, (t.n_rows if axis == "row" else t.n_cols) - 1)
    return split_table_at(t, axis, pivot)


# -- rendering ---------------------------------------------------------------

PAD_X = 6
PAD_Y = 4
MARGIN = 4

_PALETTES = {
    TableStyle.PLAIN: dict(bg=(255, 255, 255), fg=(0, 0, 0), line=(0, 0, 0), head_bg=(255, 255, 255), head_fg=(0, 0, 0)),
    TableStyle.BANDED: dict(bg=(255, 255, 255), fg=(20, 20, 20), line=(150, 150, 150), head_bg=(200, 200, 200), head_fg=(0, 0, 0), band=(232, 238, 247)),
    TableStyle.BOLD_HEADER: dict(bg=(255, 255, 255), fg=(0, 0, 0), line=(120, 120, 120), head_bg=(40, 40, 90), head_fg=(255, 255, 255)),
    TableStyle.MINIMAL: dict(bg=(250, 250, 245), fg=(30, 30, 30), line=(60, 60, 60), head_bg=(250, 250, 245), head_fg=(0, 0, 0)),
}


@lru_cache(maxsize=1)
def _font():
    # Pillow's embedded bitmap font: fixed 6x11 cells, no FreeType involved
    font = ImageFont.load_default_imagefont()
    boxes = [font.getbbox(chr(c)) for c in range(32, 127)]
    return font, max(b[2] for b in boxes), max(b[3] for b in boxes)


def _printable(s: str) -> str:
    return "".join(ch if 32 <= ord(ch) < 127 else "?" for ch in s)


def table_layout(t: TableSpec) -> tuple[list[int], int]:
    """Column widths and the common row height, in pixels (excluding rules)."""
    _, cw, ch = _font()
    bold = 1 if t.style_id is TableStyle.BOLD_HEADER else 0
    widths = []
    for j in range(t.n_cols):
        chars = max([len(t.header[j])] + [len(r[j]) for r in t.rows])
        widths.append(max(1, chars) * cw + bold + 2 * PAD_X)
    return widths, ch + 2 * PAD_Y


def render_table(t: TableSpec) -> np.ndarray:
    """Rasterise ``t`` as an RGB array; identical input gives identical bytes."""
    if t.n_cols == 0 or t.n_rows == 0:
        raise EmptyTable("table has no columns or no data rows")
    if t.n_rows > MAX_RENDER_ROWS:
        raise FilteredOut(f"table has {t.n_rows} data rows, limit is {MAX_RENDER_ROWS}")

    font, _, _ = _font()
    style = t.style_id
    pal = _PALETTES[style]
    widths, row_h = table_layout(t)
    n_lines = len(t.rows) + 1
    W = 2 * MARGIN + sum(widths) + len(widths) + 1
    H = 2 * MARGIN + n_lines * row_h + n_lines + 1
    img = Image.new("RGB", (W, H), pal["bg"])
    draw = ImageDraw.Draw(img)

    xs = [MARGIN]
    for w in widths:
        xs.append(xs[-1] + w + 1)
    ys = [MARGIN + k * (row_h + 1) for k in range(n_lines + 1)]

    for k in range(n_lines):
        fill = pal["head_bg"] if k == 0 else pal.get("band") if style is TableStyle.BANDED and k % 2 == 0 else None
        if fill is not None:
            draw.rectangle([xs[0], ys[k], xs[-1], ys[k + 1]], fill=fill)

    if style is TableStyle.MINIMAL:
        for y in (ys[0], ys[1], ys[-1]):
            draw.line([xs[0], y, xs[-1], y], fill=pal["line"])
    else:
        for y in ys:
            draw.line([xs[0], y, xs[-1], y], fill=pal["line"])
        vertical = xs if style is not TableStyle.BANDED else (xs[0], xs[-1])
        for x in vertical:
            draw.line([x, ys[0], x, ys[-1]], fill=pal["line"])

    for k, cells in enumerate([t.header, *t.rows]):
        color = pal["head_fg"] if k == 0 else pal["fg"]
        for j, cell in enumerate(cells):
            pos = (xs[j] + 1 + PAD_X, ys[k] + 1 + PAD_Y)
            text = _printable(cell)
            draw.text(pos, text, fill=color, font=font)
            if k == 0 and style is TableStyle.BOLD_HEADER:
                draw.text((pos[0] + 1, pos[1]), text, fill=color, font=font)
    return np.asarray(img)
