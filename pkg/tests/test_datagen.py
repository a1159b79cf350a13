import json
from collections import Counter

import jsonschema
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mimtile.datagen import (
    InstructionInstance,
    ReferringTemplates,
    TableSpec,
    TableStyle,
    Turn,
    assemble_multiturn,
    content_hash,
    dedup,
    load_instances,
    referring_phrase,
    render_table,
    save_instances,
    split_table,
    split_table_at,
)
from mimtile.datagen.tables import table_layout
from mimtile.errors import (
    BadArity,
    BadIndex,
    EmptyTable,
    FilteredOut,
    InvalidInstance,
    NotEnoughInstances,
    TooSmall,
)
from mimtile.manifest import load_schema
from oracles import merge_tables


def single(n, n_pairs=1):
    turns = []
    for k in range(n_pairs):
        turns += [Turn("user", f"question {n}.{k}?"), Turn("assistant", f"answer {n}.{k}")]
    return InstructionInstance([f"img{n}".encode()], turns, meta={"source_dataset": f"src{n % 3}"})


POOL = [single(n, 1 + n % 2) for n in range(10)]


# -- instances -----------------------------------------------------------------------


def test_instance_validation():
    with pytest.raises(InvalidInstance):
        InstructionInstance([], [Turn("user", "q")])
    with pytest.raises(InvalidInstance):
        InstructionInstance([b"x"], [Turn("assistant", "a")])


def test_content_hash_normalizes_whitespace_not_case():
    a = InstructionInstance([b"x"], [Turn("user", " What  is\nit? "), Turn("assistant", "A")])
    b = InstructionInstance([b"x"], [Turn("user", "What is it?"), Turn("assistant", "A")])
    c = InstructionInstance([b"x"], [Turn("user", "what is it?"), Turn("assistant", "A")])
    assert content_hash(a) == content_hash(b) != content_hash(c)


def test_content_hash_reads_image_files(tmp_path):
    (tmp_path / "p.png").write_bytes(b"abc")
    a = InstructionInstance(["p.png"], [Turn("user", "q")])
    b = InstructionInstance([b"abc"], [Turn("user", "q")])
    assert content_hash(a, tmp_path) == content_hash(b)


def test_dedup_examples():
    a = single(1)
    b = InstructionInstance([b"other"], a.turns)
    out = dedup([a, single(2), single(1), b])
    assert [x.images for x in out] == [a.images, single(2).images, b.images]
    assert dedup(out) == out


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 6), max_size=20))
def test_dedup_idempotent_and_order_stable(picks):
    items = [single(p) for p in picks]
    once = dedup(items)
    assert dedup(once) == once
    first_seen = list(dict.fromkeys(picks))
    assert [x.images[0] for x in once] == [f"img{p}".encode() for p in first_seen]


def test_jsonl_round_trip_and_schema(tmp_path):
    inst = assemble_multiturn(POOL, 3, seed=5)
    path = tmp_path / "x.jsonl"
    save_instances(path, [inst, single(4)])
    back = load_instances(path)
    assert back[0] == inst
    schema = load_schema("instance")
    for line in path.read_text().splitlines():
        jsonschema.validate(json.loads(line), schema)


def test_load_rejects_malformed_record(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"images": [], "turns": []}\n')
    with pytest.raises(InvalidInstance, match="record 1"):
        load_instances(path)


# -- referring phrases / assembly ------------------------------------------------------


def test_referring_phrase_ordinal():
    assert referring_phrase(2, 3, seed=0) == "In the second image, "
    assert referring_phrase(4, 4, seed=9) == "In the fourth image, "


def test_referring_phrase_side_template_available_for_pairs():
    seen = {referring_phrase(2, 2, seed=s) for s in range(50)}
    assert seen == {"In the second image, ", "From the image on the right-hand, "}
    assert {referring_phrase(1, 2, seed=s) for s in range(50)} == {"In the first image, ", "From the image on the left-hand, "}


@pytest.mark.parametrize("pos,total", [(1, 1), (0, 2), (3, 2), (5, 5)])
def test_referring_phrase_bad_index(pos, total):
    with pytest.raises(BadIndex):
        referring_phrase(pos, total, seed=0)


def test_referring_templates_are_configurable():
    t = ReferringTemplates.from_dict({"ordinal": ["Look at the {ordinal} picture: "], "side": []})
    assert referring_phrase(2, 2, 0, t) == "Look at the second picture: "


@pytest.mark.parametrize("k", [2, 3, 4])
def test_assemble_structure(k):
    pool = [single(n) for n in range(6)]
    inst = assemble_multiturn(pool, k, seed=1)
    assert len(inst.images) == k and len(inst.turns) == 2 * k
    for pos, (q, _) in enumerate(inst.qa_pairs(), 1):
        assert referring_phrase(pos, k, 1) in q and q.startswith(("In the", "From the"))
    assert inst.meta["content_hash"] == content_hash(inst)


def test_assemble_deterministic():
    a = assemble_multiturn(POOL, 3, seed=42)
    b = assemble_multiturn(POOL, 3, seed=42)
    assert json.dumps(a.to_record(), sort_keys=True) == json.dumps(b.to_record(), sort_keys=True)
    assert a.meta["picked"] != assemble_multiturn(POOL, 3, seed=43).meta["picked"] or a != assemble_multiturn(POOL, 3, seed=43)


def test_assemble_errors():
    with pytest.raises(BadArity):
        assemble_multiturn(POOL, 5, seed=0)
    with pytest.raises(BadArity):
        assemble_multiturn(POOL, 1, seed=0)
    with pytest.raises(NotEnoughInstances):
        assemble_multiturn(POOL[:2], 3, seed=0)
    two_images = InstructionInstance([b"a", b"b"], [Turn("user", "q"), Turn("assistant", "a")])
    with pytest.raises(InvalidInstance):
        assemble_multiturn([two_images, *POOL], 2, seed=0)


def strip_prefix(q: str) -> str:
    return q.split(", ", 1)[1]


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_assembly_conserves_qa_texts(k, seed):
    inst = assemble_multiturn(POOL, k, seed)
    chosen = [POOL[i] for i in inst.meta["picked"]]
    expected = Counter(t for c in chosen for pair in c.qa_pairs() for t in pair)
    got = Counter(t for q, a in inst.qa_pairs() for t in (strip_prefix(q), a))
    assert got == expected
    assert inst.images == [c.images[0] for c in chosen]


# -- tables -----------------------------------------------------------------------------


def table(rows, cols, style="plain"):
    return TableSpec(
        tuple(f"col{j}" for j in range(cols)),
        tuple(tuple(f"r{i}c{j}" for j in range(cols)) for i in range(rows)),
        style,
    )


def test_table_validation():
    with pytest.raises(ValueError):
        TableSpec(("a", "b"), (("1",),))
    with pytest.raises(ValueError):
        TableSpec(("a",), (), "fancy")


def test_split_rows():
    t = table(6, 3)
    top, bottom = split_table_at(t, "row", 3)
    assert top.rows == t.rows[:3] and bottom.rows == t.rows[3:]
    assert top.header == bottom.header == t.header


def test_split_cols():
    t = table(2, 4)
    left, right = split_table_at(t, "col", 2)
    assert left.header == ("col0", "col1") and right.header == ("col2", "col3")
    assert all(len(r) == 2 for r in left.rows + right.rows)


def test_split_too_small():
    with pytest.raises(TooSmall):
        split_table(table(1, 5), 0)
    with pytest.raises(TooSmall):
        split_table(table(5, 1), 0)


def test_split_seeded():
    t = table(8, 5)
    assert split_table(t, 3) == split_table(t, 3)
    assert len({split_table(t, s) for s in range(30)}) > 1


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 25), st.integers(2, 8), st.integers(0, 10**9))
def test_split_merge_oracle(rows, cols, seed):
    t = table(rows, cols)
    a, b = split_table(t, seed)
    header, body = merge_tables(a, b)
    assert header == t.header and body == t.rows
    cells = Counter(c for r in a.rows + b.rows for c in r)
    assert cells == Counter(c for r in t.rows for c in r)


def test_render_filter_rule():
    assert render_table(table(20, 2)).shape[0] > 0
    with pytest.raises(FilteredOut):
        render_table(table(21, 2))


def test_render_empty():
    with pytest.raises(EmptyTable):
        render_table(TableSpec(("a",), ()))
    with pytest.raises(EmptyTable):
        render_table(TableSpec((), ()))


def test_render_minimal_table():
    img = render_table(TableSpec(("h",), (("v",),)))
    assert img.ndim == 3 and img.shape[2] == 3
    assert img.shape[0] < 60 and img.shape[1] < 40


@pytest.mark.parametrize("style", list(TableStyle))
def test_render_deterministic(style):
    t = table(5, 3, style)
    assert render_table(t).tobytes() == render_table(TableSpec(t.header, t.rows, style)).tobytes()


def test_styles_differ():
    imgs = {render_table(table(4, 3, s)).tobytes() for s in TableStyle}
    assert len(imgs) == len(TableStyle)


def test_render_grows_with_content():
    small = render_table(TableSpec(("a",), (("1",),)))
    wide = render_table(TableSpec(("a",), (("x" * 80,),)))
    tall = render_table(table(10, 1))
    assert wide.shape[1] > small.shape[1] and tall.shape[0] > small.shape[0]


@pytest.mark.parametrize("style", list(TableStyle))
def test_render_no_clipping(style):
    # every cell's text lands strictly inside its cell box
    t = TableSpec(("Name", "Value"), (("alpha", "W" * 30), ("", "12,345.6")), style)
    img = render_table(t).astype(int)
    widths, row_h = table_layout(t)
    x0 = 4
    for j, wcol in enumerate(widths):
        y0 = 4
        for k, cells in enumerate([t.header, *t.rows]):
            inner = img[y0 + 1 : y0 + 1 + row_h, x0 + 1 : x0 + 1 + wcol]
            cell_bg = inner[0, 0]
            ink = np.abs(inner - cell_bg).sum(axis=2) > 0
            if cells[j]:
                assert ink.any(), (j, k)
                cols = np.where(ink.any(axis=0))[0]
                assert cols[0] >= 1 and cols[-1] <= wcol - 2
            else:
                assert not ink.any()
            y0 += row_h + 1
        x0 += wcol + 1
