"""Prompt templates stored as text files with ``{name}`` placeholders."""

from __future__ import annotations

import logging
import re
from importlib import resources
from pathlib import Path

from ..errors import TemplateError

log = logging.getLogger(__name__)
_warned: set[str] = set()

PLACEHOLDER = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")
UNTRANSCRIBED = re.compile(r"\[\[.*?to be transcribed.*?\]\]")


def builtin_dir() -> Path:
    return Path(str(resources.files(__package__) / "templates"))


class TemplateStore:
    """Looks up ``<id>.txt`` in the given directories, first match wins.

    Only identifier-shaped ``{name}`` tokens are placeholders, so JSON
    examples with quoted keys can appear in a template verbatim.
    """

    def __init__(self, *dirs):
        self.dirs = [Path(d) for d in dirs] or [builtin_dir()]

    def ids(self) -> list[str]:
        found = set()
        for d in self.dirs:
            found.update(p.stem for p in d.glob("*.txt"))
        return sorted(found)

    def __contains__(self, template_id: str) -> bool:
        return any((d / f"{template_id}.txt").is_file() for d in self.dirs)

    def get(self, template_id: str) -> str:
        for d in self.dirs:
            path = d / f"{template_id}.txt"
            if path.is_file():
                text = path.read_text(encoding="utf-8")
                return "".join(line for line in text.splitlines(True) if not line.startswith("#"))
        raise TemplateError(f"unknown prompt template {template_id!r} (searched {', '.join(map(str, self.dirs))})")

    def placeholders(self, template_id: str) -> set[str]:
        return set(PLACEHOLDER.findall(self.get(template_id)))

    def render(self, template_id: str, variables: dict) -> str:
        text = self.get(template_id)
        missing = sorted(set(PLACEHOLDER.findall(text)) - set(variables))
        if missing:
            raise TemplateError(f"template {template_id!r} has unbound placeholders: {', '.join(missing)}")
        if UNTRANSCRIBED.search(text) and template_id not in _warned:
            _warned.add(template_id)
            log.warning("template %r still contains an untranscribed prompt marker", template_id)
        return PLACEHOLDER.sub(lambda m: str(variables[m.group(1)]), text)
