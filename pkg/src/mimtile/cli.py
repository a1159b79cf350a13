"""Command-line entry point.

Exit codes: 0 ok, 2 budget (and usage errors), 3 I/O or invalid input file,
4 shape, 5 sequence overflow, 6 missing credential, 7 empty input.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import random
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import ften
from .allocator import EncoderGeometry, ImageSpec, allocate
from .config import Settings
from .datagen import (
    MAX_RENDER_ROWS,
    ReferringTemplates,
    TableSpec,
    TableStyle,
    assemble_multiturn,
    dedup,
    load_instances,
    render_table,
    save_instances,
    split_table,
)
from .datagen.instances import read_jsonl, write_jsonl
from .errors import (
    BudgetTooSmall,
    CredentialError,
    EmptyEval,
    EmptyInput,
    EmptyTable,
    FilteredOut,
    ImageError,
    InvalidImage,
    ManifestError,
    NoGold,
    NotEnoughInstances,
    ShapeError,
    TemplateError,
    TooSmall,
)
from .manifest import ImageEntry, Manifest
from .partitioner import image_size, load_image, partition, save_png, search_grid
from .sequencer import ESTIMATORS, assemble_sequence, check_budget, serialize, validate_sequence
from .shuffler import LAYOUTS, mock_encode, pixel_shuffle

log = logging.getLogger("mimtile")

EXIT_OK = 0
EXIT_BUDGET = 2
EXIT_IO = 3
EXIT_SHAPE = 4
EXIT_OVERFLOW = 5
EXIT_CREDENTIAL = 6
EXIT_EMPTY = 7

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


class CommandError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def _collect_images(items: list[str]) -> list[Path]:
    paths: list[Path] = []
    for item in items:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(q for q in p.iterdir() if q.suffix.lower() in IMAGE_SUFFIXES))
        elif p.suffix == ".txt" and p.is_file():
            base = p.parent
            paths.extend(base / line.strip() for line in p.read_text().splitlines() if line.strip())
        else:
            paths.append(p)
    return paths


def _unique_ids(paths: list[Path]) -> list[str]:
    ids, seen = [], {}
    for p in paths:
        stem = p.stem
        n = seen.get(stem, 0)
        seen[stem] = n + 1
        ids.append(stem if n == 0 else f"{stem}_{n}")
    return ids


def _pool_map(fn, items, workers: int):
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(fn, items))


def _load_manifest(path) -> Manifest:
    try:
        return Manifest.load(path)
    except ManifestError as e:
        raise CommandError(EXIT_IO, str(e)) from e


# -- pipeline commands ------------------------------------------------------------


def cmd_plan(args, settings: Settings) -> int:
    try:
        geometry = EncoderGeometry(
            tile_resolution_v=settings.get("v", args.v),
            patch_size=settings.get("patch", args.patch),
            feature_dim_d=settings.get("feature_dim", args.feature_dim),
            shuffle_factor_n=settings.get("shuffle", args.shuffle),
        )
    except ShapeError as e:
        raise CommandError(EXIT_SHAPE, str(e)) from e
    budget = settings.get("budget", args.budget)

    paths = _collect_images(args.images)
    if not paths:
        raise CommandError(EXIT_EMPTY, "no input images found")
    ids = _unique_ids(paths)
    try:
        sizes = [image_size(p) for p in paths]
    except InvalidImage as e:
        raise CommandError(EXIT_IO, str(e)) from e
    specs = [ImageSpec(i, h, w, str(p)) for i, p, (h, w) in zip(ids, paths, sizes)]
    try:
        plan = allocate(specs, geometry, budget, args.redistribute)
    except BudgetTooSmall as e:
        raise CommandError(EXIT_BUDGET, str(e)) from e

    out = Path(args.out)
    manifest = Manifest(geometry, budget, plan.alpha, [], args.redistribute, base_dir=out.parent)
    for spec, alloc in zip(specs, plan.per_image):
        grid = search_grid(spec.height_px, spec.width_px, alloc.s_alloc, geometry)
        manifest.images.append(ImageEntry.from_plan(spec, alloc, grid, manifest.relative(spec.source_path)))
    manifest.save(out)
    _emit({"manifest": str(out), "alpha": str(plan.alpha), **manifest.totals()})
    return EXIT_OK


def cmd_tile(args, settings: Settings) -> int:
    manifest = _load_manifest(args.manifest)
    out_dir = Path(args.out) if args.out else Path(args.manifest).parent / "tiles"
    geometry = manifest.geometry

    def work(entry: ImageEntry):
        try:
            image = load_image(manifest.resolve(entry.path))
        except InvalidImage as e:
            raise CommandError(EXIT_IO, str(e)) from e
        if image.shape[:2] != (entry.h, entry.w):
            raise CommandError(EXIT_IO, f"{entry.id}: image is now {image.shape[0]}x{image.shape[1]}, manifest says {entry.h}x{entry.w}")
        ts = partition(image, entry.spec(), entry.s_alloc, geometry)
        if (ts.grid.rows_r, ts.grid.cols_c) != (entry.grid["r"], entry.grid["c"]):
            raise CommandError(EXIT_SHAPE, f"{entry.id}: recomputed grid differs from manifest")
        tile_paths = []
        for k, tile in enumerate(ts.sub_tiles):
            p = out_dir / f"{entry.id}_r{k // ts.grid.cols_c}c{k % ts.grid.cols_c}.png"
            save_png(tile, p)
            tile_paths.append(manifest.relative(p))
        g = out_dir / f"{entry.id}_g.png"
        save_png(ts.global_tile, g)
        return tile_paths, manifest.relative(g)

    results = _pool_map(work, manifest.images, settings.get("workers", args.workers))
    for entry, (tile_paths, global_path) in zip(manifest.images, results):
        entry.tile_paths = tile_paths
        entry.global_tile_path = global_path
    manifest.save(args.manifest)
    _emit({"manifest": args.manifest, **manifest.totals()})
    return EXIT_OK


def cmd_encode(args, settings: Settings) -> int:
    manifest = _load_manifest(args.manifest)
    n = settings.get("shuffle", args.shuffle)
    g0 = manifest.geometry
    try:
        geometry = EncoderGeometry(g0.tile_resolution_v, g0.patch_size, None, g0.feature_dim_d, n)
    except ShapeError as e:
        raise CommandError(EXIT_SHAPE, str(e)) from e
    out_dir = Path(args.out) if args.out else Path(args.manifest).parent / "tensors"

    jobs = []
    for entry in manifest.images:
        if entry.global_tile_path is None:
            raise CommandError(EXIT_IO, f"{entry.id}: no tiles recorded; run the tile command first")
        jobs.extend((entry.id, rel) for rel in [*entry.tile_paths, entry.global_tile_path])

    def work(job):
        _, rel = job
        try:
            tile = load_image(manifest.resolve(rel))
        except InvalidImage as e:
            raise CommandError(EXIT_IO, str(e)) from e
        try:
            feats = pixel_shuffle(mock_encode(tile, geometry), n, args.layout)
        except ShapeError as e:
            raise CommandError(EXIT_SHAPE, f"{rel}: {e}") from e
        p = out_dir / (Path(rel).stem + ".ften")
        ften.write(p, feats.values)
        return manifest.relative(p), feats.values.shape

    results = _pool_map(work, jobs, settings.get("workers", args.workers))
    shapes = {shape for _, shape in results}
    if len(shapes) != 1:
        raise CommandError(EXIT_SHAPE, f"tensor shapes disagree: {sorted(shapes)}")
    (shape,) = shapes
    if shape[0] * shape[1] != geometry.features_per_tile:
        raise CommandError(EXIT_SHAPE, f"tensor shape {shape} does not carry {geometry.features_per_tile} features")

    by_image: dict[str, list[str]] = {}
    for (image_id, _), (path, _) in zip(jobs, results):
        by_image.setdefault(image_id, []).append(path)
    for entry in manifest.images:
        entry.tensor_paths = by_image[entry.id]
    manifest.geometry = geometry
    manifest.encode = {"shuffle_n": n, "layout": args.layout, "tensor_shape": list(shape)}
    manifest.save(args.manifest)
    _emit({"manifest": args.manifest, "tensor_shape": list(shape), "tensors": len(results), **manifest.totals()})
    return EXIT_OK


def _read_text_inserts(path) -> list[dict]:
    if not path:
        return []
    text = Path(path).read_text(encoding="utf-8").strip()
    if not text:
        return []
    if text.startswith("["):
        return json.loads(text)
    return read_jsonl(path)


def cmd_sequence(args, settings: Settings) -> int:
    manifest = _load_manifest(args.manifest)
    if manifest.encode is None:
        raise CommandError(EXIT_IO, "manifest has not been encoded; run the encode command first")
    max_tokens = settings.get("max_tokens", args.max_tokens)
    try:
        inserts = _read_text_inserts(args.text)
    except (OSError, ValueError) as e:
        raise CommandError(EXIT_IO, f"cannot read text file: {e}") from e
    seq = assemble_sequence(
        manifest.plan(), manifest.images, inserts, manifest.geometry, ESTIMATORS[args.estimator](), max_tokens
    )
    problems = validate_sequence(seq)
    if problems:
        raise CommandError(EXIT_SHAPE, "; ".join(problems))
    out = Path(args.out) if args.out else Path(args.manifest).with_suffix(".seq.txt")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(serialize(seq), encoding="utf-8")
    verdict = check_budget(seq, max_tokens)
    report = {
        "sequence": str(out),
        "ok": verdict.ok,
        "total_tokens": seq.total_tokens,
        "feature_tokens": seq.feature_tokens,
        "max_tokens": max_tokens,
        "overflow": 0 if verdict.ok else verdict.overflow,
    }
    _emit(report)
    if not verdict.ok:
        print(f"error: sequence exceeds {max_tokens} tokens by {verdict.overflow}", file=sys.stderr)
        return EXIT_OVERFLOW
    return EXIT_OK


# -- datagen ---------------------------------------------------------------------------


def _load_instances_or_fail(path):
    try:
        return load_instances(path)
    except (OSError, ValueError, KeyError) as e:
        raise CommandError(EXIT_IO, f"cannot read instances {path}: {e}") from e


def cmd_assemble(args, settings: Settings) -> int:
    instances = _load_instances_or_fail(args.instances)
    base_dir = Path(args.instances).parent
    eligible = [i for i in instances if len(i.images) == 1 and i.qa_pairs()]
    if len(eligible) < len(instances):
        log.warning("skipping %d instances that are not single-image QA", len(instances) - len(eligible))
    templates = ReferringTemplates()
    if args.templates:
        templates = ReferringTemplates.from_dict(json.loads(Path(args.templates).read_text(encoding="utf-8")))
    rng = random.Random(args.seed)
    out = []
    try:
        for _ in range(args.count):
            out.append(assemble_multiturn(eligible, args.k, rng.getrandbits(32), templates, base_dir))
    except NotEnoughInstances as e:
        raise CommandError(EXIT_EMPTY, str(e)) from e
    except ImageError as e:
        raise CommandError(EXIT_IO, str(e)) from e
    save_instances(args.out, out)
    _emit({"out": args.out, "assembled": len(out), "seed": args.seed})
    return EXIT_OK


def cmd_tables(args, settings: Settings) -> int:
    try:
        records = read_jsonl(args.tables)
    except (OSError, ValueError) as e:
        raise CommandError(EXIT_IO, str(e)) from e
    out_dir = Path(args.out_dir)
    rng = random.Random(args.seed)
    styles = list(TableStyle)
    report = []
    for n, rec in enumerate(records):
        table_id = str(rec.get("id", n))
        seed = rng.getrandbits(32)
        style = rec.get("style_id") or styles[seed % len(styles)].value
        entry = {"id": table_id, "status": "ok", "images": [], "style_id": style}
        try:
            table = TableSpec.from_record({**rec, "style_id": style})
            parts = split_table(table, seed) if args.split else (table,)
            rasters = [render_table(p) for p in parts]
        except FilteredOut as e:
            entry.update(status="filtered", reason=str(e))
        except (EmptyTable, TooSmall, ValueError, KeyError) as e:
            entry.update(status="skipped", reason=str(e))
        else:
            suffixes = ["_a", "_b"] if args.split else [""]
            for raster, sfx in zip(rasters, suffixes):
                p = out_dir / f"{table_id}{sfx}.png"
                save_png(raster, p)
                entry["images"].append(p.name)
            if args.split:
                entry["tables"] = [p.to_record() for p in parts]
        report.append(entry)
    write_jsonl(out_dir / "tables_report.jsonl", report)
    counts = {s: sum(1 for r in report if r["status"] == s) for s in ("ok", "filtered", "skipped")}
    _emit({"report": str(out_dir / "tables_report.jsonl"), "max_rows": MAX_RENDER_ROWS, **counts})
    return EXIT_OK


def cmd_dedup(args, settings: Settings) -> int:
    instances = _load_instances_or_fail(args.instances)
    try:
        kept = dedup(instances, Path(args.instances).parent)
    except ImageError as e:
        raise CommandError(EXIT_IO, str(e)) from e
    save_instances(args.out, kept)
    _emit({"out": args.out, "input": len(instances), "kept": len(kept), "removed": len(instances) - len(kept)})
    return EXIT_OK


# -- annotate / eval ----------------------------------------------------------------


def cmd_annotate(args, settings: Settings) -> int:
    from .annotator import AnnotatorClient, EndpointConfig, TemplateStore, augment_batch

    try:
        config = EndpointConfig.from_file(args.endpoint_config)
    except (OSError, ValueError, TypeError) as e:
        raise CommandError(EXIT_IO, f"cannot read endpoint config: {e}") from e
    if args.log:
        config.log_path = args.log
    if not os.environ.get(config.api_key_env):
        raise CommandError(EXIT_CREDENTIAL, f"credential environment variable {config.api_key_env} is not set")

    store = TemplateStore(*([args.templates_dir] if args.templates_dir else []))
    if args.template not in store:
        raise CommandError(EXIT_IO, f"unknown template {args.template!r}")
    instances = _load_instances_or_fail(args.instances)
    if not instances:
        raise CommandError(EXIT_EMPTY, "no instances to annotate")
    try:
        client = AnnotatorClient(config, store, base_dir=Path(args.instances).parent, seed=args.seed)
    except CredentialError as e:
        raise CommandError(EXIT_CREDENTIAL, str(e)) from e
    with client:
        out, failures = augment_batch(instances, client, args.template)
    save_instances(args.out, out)
    failures_path = args.failures or str(Path(args.out).with_suffix(".failures.jsonl"))
    write_jsonl(failures_path, failures)
    _emit({"out": args.out, "instances": len(out), "annotated": len(out) - len(failures), "failures": len(failures), "failures_path": failures_path})
    return EXIT_OK


def cmd_eval(args, settings: Settings) -> int:
    from .metrics import evaluate

    try:
        records = read_jsonl(args.predictions)
    except (OSError, ValueError) as e:
        raise CommandError(EXIT_IO, str(e)) from e
    try:
        report = evaluate(records, args.metric, args.tau)
    except (EmptyEval, NoGold) as e:
        raise CommandError(EXIT_EMPTY, str(e)) from e
    except KeyError as e:
        raise CommandError(EXIT_IO, f"prediction record lacks field {e}") from e
    out = Path(args.out) if args.out else Path(args.predictions).with_suffix(f".{args.metric}.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _emit({"report": str(out), "metric": args.metric, "mean": report.mean, "count": report.count})
    return EXIT_OK


# -- parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mimtile", description="Adaptive multi-image tiling and instruction-data tools.")
    p.add_argument("--config", help="settings file (YAML or JSON); also MIMTILE_CONFIG")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("plan", help="allocate sub-images and choose crop grids")
    s.add_argument("--images", nargs="+", required=True, help="image files, directories, or a .txt list")
    s.add_argument("--budget", "-M", type=int, help="total sub-image budget M (default 50)")
    s.add_argument("--v", type=int, help="tile resolution in pixels (default 364)")
    s.add_argument("--patch", type=int)
    s.add_argument("--feature-dim", type=int)
    s.add_argument("--shuffle", type=int, help="pixel-shuffle factor n (default 4)")
    s.add_argument("--redistribute", action="store_true", help="hand budget left over by flooring back out")
    s.add_argument("--out", required=True, help="manifest path")
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("tile", help="pad, resize and split images into tiles")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", help="tile directory (default: <manifest dir>/tiles)")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_tile)

    s = sub.add_parser("encode", help="mock-encode tiles and pixel-shuffle the features")
    s.add_argument("--manifest", required=True)
    s.add_argument("--shuffle", type=int, help="pixel-shuffle factor n (default 4)")
    s.add_argument("--layout", choices=LAYOUTS, default="block2d")
    s.add_argument("--out", help="tensor directory (default: <manifest dir>/tensors)")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("sequence", help="lay out the interleaved sequence and check its length")
    s.add_argument("--manifest", required=True)
    s.add_argument("--text", help="JSON list or JSONL of {position, text}")
    s.add_argument("--max-tokens", type=int)
    s.add_argument("--estimator", choices=sorted(ESTIMATORS), default="whitespace",
                   help="text/marker token estimator; 'none' counts feature tokens only")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sequence)

    s = sub.add_parser("datagen", help="instruction-data construction")
    dsub = s.add_subparsers(dest="datagen_command", required=True)

    d = dsub.add_parser("assemble", help="stack single-image QA into multi-image samples")
    d.add_argument("--instances", required=True)
    d.add_argument("--k", type=int, choices=(2, 3, 4), default=2)
    d.add_argument("--count", type=int, default=1)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--templates", help="JSON referring-phrase table {ordinal: [...], side: [...]}")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_assemble)

    d = dsub.add_parser("tables", help="render tables (optionally split) to images")
    d.add_argument("--tables", required=True, help="JSONL of {id?, header, rows, style_id?}")
    d.add_argument("--out-dir", required=True)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--split", action="store_true")
    d.set_defaults(func=cmd_tables)

    d = dsub.add_parser("dedup", help="drop duplicate instances")
    d.add_argument("--instances", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--seed", type=int, default=0, help="accepted for uniformity; dedup is not randomized")
    d.set_defaults(func=cmd_dedup)

    s = sub.add_parser("annotate", help="add generated rationales through a chat endpoint")
    s.add_argument("--instances", required=True)
    s.add_argument("--template", default="rationale")
    s.add_argument("--templates-dir")
    s.add_argument("--config", dest="endpoint_config", required=True, help="endpoint config (YAML or JSON)")
    s.add_argument("--out", required=True)
    s.add_argument("--failures")
    s.add_argument("--log", help="JSONL file receiving every raw request outcome")
    s.add_argument("--seed", type=int, default=0, help="seed for backoff jitter")
    s.set_defaults(func=cmd_annotate)

    s = sub.add_parser("eval", help="ANLS or exact-match scoring")
    s.add_argument("--predictions", required=True, help="JSONL of {id, prediction, golds}")
    s.add_argument("--metric", choices=("anls", "exact"), default="anls")
    s.add_argument("--tau", type=float, default=0.5)
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = Settings(args.config)
        return args.func(args, settings)
    except CommandError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except (TemplateError, ImageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except EmptyInput as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_EMPTY
    except ShapeError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SHAPE
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
