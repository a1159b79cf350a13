"""Interleaved image/text token layout and sequence-length budgeting.

Each image is rendered as ``Image {i}: <Img> <features> </Img>``. Feature
token counts are exact; text and marker costs come from a pluggable
estimator because no real tokenizer is involved here.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, Sequence

from .allocator import AllocationPlan, EncoderGeometry
from .errors import EmptyBlock, PlanMismatch

IMG_OPEN = "<Img>"
IMG_CLOSE = "</Img>"
KINDS = ("text", "image_header", "img_open", "feature_block", "img_close")
DEFAULT_MAX_TOKENS = 8192


class TextEstimator(Protocol):
    def text(self, s: str) -> int: ...

    def marker(self, s: str) -> int: ...


class WhitespaceEstimator:
    """Approximate: one token per whitespace-separated word, one per marker."""

    def text(self, s: str) -> int:
        return len(s.split())

    def marker(self, s: str) -> int:
        return 1


class FeaturesOnlyEstimator:
    """Charges nothing for text or markers; only feature tokens count."""

    def text(self, s: str) -> int:
        return 0

    def marker(self, s: str) -> int:
        return 0


ESTIMATORS: dict[str, Callable[[], TextEstimator]] = {
    "whitespace": WhitespaceEstimator,
    "none": FeaturesOnlyEstimator,
}


@dataclass(frozen=True)
class Segment:
    kind: str
    token_count: int
    image_id: str | None = None
    text: str | None = None


@dataclass(frozen=True)
class TokenSequence:
    segments: tuple[Segment, ...] = ()
    max_tokens: int = DEFAULT_MAX_TOKENS

    @property
    def total_tokens(self) -> int:
        return sum(s.token_count for s in self.segments)

    @property
    def feature_tokens(self) -> int:
        return sum(s.token_count for s in self.segments if s.kind == "feature_block")

    def image_order(self) -> list[str | None]:
        return [s.image_id for s in self.segments if s.kind == "img_open"]


@dataclass(frozen=True)
class BudgetExceeded:
    overflow: int
    total_tokens: int
    max_tokens: int

    ok = False


@dataclass(frozen=True)
class BudgetOk:
    total_tokens: int
    max_tokens: int

    ok = True


def render_image_segment(
    index_i: int,
    feature_tokens: int,
    image_id: str | None = None,
    estimator: TextEstimator | None = None,
) -> list[Segment]:
    if index_i < 1:
        raise ValueError(f"image index starts at 1, got {index_i}")
    if feature_tokens < 1:
        raise EmptyBlock(f"image {index_i} has no feature tokens")
    est = estimator or WhitespaceEstimator()
    header = f"Image {index_i}: "
    return [
        Segment("image_header", est.text(header), image_id, header),
        Segment("img_open", est.marker(IMG_OPEN), image_id, IMG_OPEN),
        Segment("feature_block", feature_tokens, image_id),
        Segment("img_close", est.marker(IMG_CLOSE), image_id, IMG_CLOSE),
    ]


@dataclass(frozen=True)
class TextInsert:
    position: int  # number of images preceding the text
    text: str


def assemble_sequence(
    plan: AllocationPlan,
    tilesets: Sequence,
    interleaved_text: Iterable = (),
    geometry: EncoderGeometry | None = None,
    estimator: TextEstimator | None = None,
    max_tokens: int = DEFAULT_MAX_TOKENS,
) -> TokenSequence:
    """Lay out images in plan order with text inserted between them.

    ``tilesets`` only needs ``image_id`` and ``tile_count`` (sub-tiles plus
    the global view) on each item, so manifest entries work as well as
    :class:`~mimtile.partitioner.TileSet` objects.
    """
    geometry = geometry or plan.geometry
    est = estimator or WhitespaceEstimator()
    if len(tilesets) != len(plan.per_image) or any(
        ts.image_id != a.image_id for ts, a in zip(tilesets, plan.per_image)
    ):
        raise PlanMismatch("tilesets must match plan.per_image one-to-one and in order")

    inserts = [t if isinstance(t, TextInsert) else TextInsert(t["position"], t["text"]) for t in interleaved_text]
    by_pos: dict[int, list[str]] = {}
    for t in inserts:
        if not 0 <= t.position <= len(tilesets):
            raise ValueError(f"text position {t.position} outside [0, {len(tilesets)}]")
        by_pos.setdefault(t.position, []).append(t.text)

    per_tile = geometry.features_per_tile
    segments: list[Segment] = []
    for i, ts in enumerate(tilesets):
        for text in by_pos.get(i, ()):
            segments.append(Segment("text", est.text(text), None, text))
        segments.extend(render_image_segment(i + 1, ts.tile_count * per_tile, ts.image_id, est))
    for text in by_pos.get(len(tilesets), ()):
        segments.append(Segment("text", est.text(text), None, text))
    return TokenSequence(tuple(segments), max_tokens)


def check_budget(seq: TokenSequence, max_tokens: int | None = None):
    limit = seq.max_tokens if max_tokens is None else max_tokens
    total = seq.total_tokens
    if total <= limit:
        return BudgetOk(total, limit)
    return BudgetExceeded(total - limit, total, limit)


def validate_sequence(seq: TokenSequence) -> list[str]:
    """Structural problems in ``seq``; an empty list means well-formed."""
    problems = []
    open_id = None
    blocks = 0
    for k, seg in enumerate(seq.segments):
        if seg.kind not in KINDS:
            problems.append(f"segment {k}: unknown kind {seg.kind!r}")
        elif seg.token_count < 0:
            problems.append(f"segment {k}: negative token count")
        elif seg.kind == "img_open":
            if open_id is not None:
                problems.append(f"segment {k}: <Img> opened inside image {open_id!r}")
            open_id, blocks = seg.image_id or "", 0
        elif seg.kind == "feature_block":
            if open_id is None:
                problems.append(f"segment {k}: feature block outside <Img>")
            blocks += 1
        elif seg.kind == "img_close":
            if open_id is None:
                problems.append(f"segment {k}: </Img> without <Img>")
            elif (seg.image_id or "") != open_id:
                problems.append(f"segment {k}: </Img> closes {seg.image_id!r}, open is {open_id!r}")
            elif blocks != 1:
                problems.append(f"segment {k}: image {open_id!r} has {blocks} feature blocks")
            open_id = None
    if open_id is not None:
        problems.append(f"image {open_id!r} never closed")
    return problems


_FEAT = re.compile(r"^<feat:(\d+)>$")
_HEADER = re.compile(r"^Image \d+: $")


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\n", "\\n")


def _unescape(line: str) -> str:
    return re.sub(r"\\(.)", lambda m: "\n" if m.group(1) == "n" else m.group(1), line)


def serialize(seq: TokenSequence) -> str:
    """Line-per-segment text form: literal text, markers, ``<feat:N>``."""
    lines = []
    for seg in seq.segments:
        if seg.kind == "feature_block":
            lines.append(f"<feat:{seg.token_count}>")
        elif seg.kind in ("img_open", "img_close"):
            lines.append(IMG_OPEN if seg.kind == "img_open" else IMG_CLOSE)
        else:
            lines.append(_escape(seg.text or ""))
    return "".join(line + "\n" for line in lines)


def parse(text: str, estimator: TextEstimator | None = None, max_tokens: int = DEFAULT_MAX_TOKENS) -> TokenSequence:
    """Read back :func:`serialize` output. Image ids are not stored, so the
    parsed segments carry ``image_id=None``."""
    est = estimator or WhitespaceEstimator()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    segments = []
    for k, line in enumerate(lines):
        m = _FEAT.match(line)
        if m:
            segments.append(Segment("feature_block", int(m.group(1))))
        elif line in (IMG_OPEN, IMG_CLOSE):
            kind = "img_open" if line == IMG_OPEN else "img_close"
            segments.append(Segment(kind, est.marker(line), None, line))
        else:
            raw = _unescape(line)
            is_header = _HEADER.match(line) and k + 1 < len(lines) and lines[k + 1] == IMG_OPEN
            segments.append(Segment("image_header" if is_header else "text", est.text(raw), None, raw))
    return TokenSequence(tuple(segments), max_tokens)
