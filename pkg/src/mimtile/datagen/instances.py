"""Instruction instances, content hashing, JSONL storage and dedup."""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence, Union

import jsonschema

from ..errors import ImageError, InvalidInstance

ImageRef = Union[str, bytes]  # relative path, or inline image bytes


@dataclass(frozen=True)
class Turn:
    role: str
    text: str


@dataclass
class InstructionInstance:
    images: list[ImageRef]
    turns: list[Turn]
    rationale: str | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.turns = [t if isinstance(t, Turn) else Turn(t["role"], t["text"]) for t in self.turns]
        if not self.images:
            raise InvalidInstance("an instance needs at least one image")
        for k, t in enumerate(self.turns):
            want = "user" if k % 2 == 0 else "assistant"
            if t.role != want:
                raise InvalidInstance(f"turn {k} has role {t.role!r}, expected {want!r}")

    def qa_pairs(self) -> list[tuple[str, str]]:
        return [(self.turns[k].text, self.turns[k + 1].text) for k in range(0, len(self.turns) - 1, 2)]

    def to_record(self) -> dict:
        images = [{"inline": base64.b64encode(im).decode("ascii")} if isinstance(im, bytes) else im for im in self.images]
        rec = {
            "images": images,
            "turns": [{"role": t.role, "text": t.text} for t in self.turns],
            "rationale": self.rationale,
            "meta": self.meta,
        }
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "InstructionInstance":
        images = [base64.b64decode(im["inline"]) if isinstance(im, dict) else im for im in rec["images"]]
        return cls(images, rec["turns"], rec.get("rationale"), dict(rec.get("meta") or {}))


def normalize_text(text: str) -> str:
    return " ".join(text.split())


def image_bytes(ref: ImageRef, base_dir=None) -> bytes:
    if isinstance(ref, bytes):
        return ref
    path = Path(base_dir or ".") / ref
    try:
        return path.read_bytes()
    except OSError as e:
        raise ImageError(f"cannot read image {path}: {e}") from e


def content_hash(inst: InstructionInstance, base_dir=None) -> str:
    digests = [hashlib.sha256(image_bytes(im, base_dir)).hexdigest() for im in inst.images]
    payload = json.dumps(
        {"images": digests, "turns": [normalize_text(t.text) for t in inst.turns]},
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def with_hash(inst: InstructionInstance, base_dir=None) -> InstructionInstance:
    return replace(inst, meta={**inst.meta, "content_hash": content_hash(inst, base_dir)})


def dedup(instances: Sequence[InstructionInstance], base_dir=None) -> list[InstructionInstance]:
    """Keep the first instance for every content hash, preserving order.

    The hash is always recomputed, so stale ``meta.content_hash`` values
    cannot hide or create duplicates.
    """
    seen = set()
    out = []
    for inst in instances:
        h = content_hash(inst, base_dir)
        if h not in seen:
            seen.add(h)
            out.append(inst)
    return out


def dumps_record(rec: dict) -> str:
    return json.dumps(rec, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def read_jsonl(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            if line.strip():
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as e:
                    raise ValueError(f"{path}:{n}: invalid JSON ({e})") from e
    return out


def write_jsonl(path, records: Iterable[dict]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for rec in records:
            f.write(dumps_record(rec) + "\n")


def load_instances(path) -> list[InstructionInstance]:
    from ..manifest import load_schema

    validator = jsonschema.Draft202012Validator(load_schema("instance"))
    out = []
    for n, rec in enumerate(read_jsonl(path), 1):
        err = jsonschema.exceptions.best_match(validator.iter_errors(rec))
        if err is not None:
            raise InvalidInstance(f"{path}: record {n}: {err.message}")
        out.append(InstructionInstance.from_record(rec))
    return out


def save_instances(path, instances: Iterable[InstructionInstance]) -> None:
    write_jsonl(path, (i.to_record() for i in instances))
