"""Synthetic multi-image samples stacked from single-image QA instances."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Sequence

from ..errors import BadArity, BadIndex, InvalidInstance, NotEnoughInstances
from .instances import InstructionInstance, Turn, with_hash

ORDINALS = ("first", "second", "third", "fourth")
SIDES = ("left", "right")


@dataclass(frozen=True)
class ReferringTemplates:
    """Phrase table used to point a question at one image.

    ``ordinal`` templates get ``{ordinal}``; ``side`` templates get
    ``{side}`` and are only offered when a sample has exactly two images.
    """

    ordinal: tuple[str, ...] = ("In the {ordinal} image, ",)
    side: tuple[str, ...] = ("From the image on the {side}-hand, ",)

    @classmethod
    def from_dict(cls, d: dict) -> "ReferringTemplates":
        return cls(tuple(d.get("ordinal", cls.ordinal)), tuple(d.get("side", cls.side)))


DEFAULT_TEMPLATES = ReferringTemplates()


def referring_phrase(position: int, total: int, seed: int, templates: ReferringTemplates = DEFAULT_TEMPLATES) -> str:
    if not (1 <= position <= total <= len(ORDINALS)) or total < 2:
        raise BadIndex(f"position {position} of {total} images (need 1 <= position <= total, 2 <= total <= 4)")
    candidates = [t.format(ordinal=ORDINALS[position - 1]) for t in templates.ordinal]
    if total == 2:
        candidates += [t.format(side=SIDES[position - 1]) for t in templates.side]
    rng = random.Random(f"ref:{seed}:{position}:{total}")
    return rng.choice(candidates)


def assemble_multiturn(
    instances: Sequence[InstructionInstance],
    k: int,
    seed: int,
    templates: ReferringTemplates = DEFAULT_TEMPLATES,
    base_dir=None,
) -> InstructionInstance:
    """Combine ``k`` single-image instances into one multi-turn sample.

    Instances are drawn without replacement; their images are concatenated
    and their QA pairs stacked in the same order, each question prefixed
    with a phrase naming its image.
    """
    if not 2 <= k <= 4:
        raise BadArity(f"k must be in [2, 4], got {k}")
    if len(instances) < k:
        raise NotEnoughInstances(f"need {k} instances, got {len(instances)}")
    for n, inst in enumerate(instances):
        if len(inst.images) != 1 or not inst.qa_pairs():
            raise InvalidInstance(f"instance {n} must have exactly one image and at least one QA pair")

    rng = random.Random(seed)
    chosen = rng.sample(range(len(instances)), k)
    images, turns, sources = [], [], []
    for pos, idx in enumerate(chosen, 1):
        inst = instances[idx]
        images.append(inst.images[0])
        sources.append(inst.meta.get("source_dataset", "unknown"))
        for q, a in inst.qa_pairs():
            turns.append(Turn("user", referring_phrase(pos, k, seed, templates) + q))
            turns.append(Turn("assistant", a))

    meta = {
        "source_dataset": "assembled:" + "+".join(sources),
        "seed": seed,
        "picked": chosen,
    }
    return with_hash(InstructionInstance(images, turns, None, meta), base_dir)
