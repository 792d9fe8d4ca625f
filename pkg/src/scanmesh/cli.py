"""Command-line entry point: ``scanmesh {gen-data,train,infer,eval,bench}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure,
4 finished with warnings (skipped inputs, empty predicted face set).
Every command writes a JSON manifest next to its outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .mesh.faceset import MeshError
from .mesh.objio import read_obj, write_obj
from .mesh.shapes import builtin_corpus
from .metrics import EVAL_SAMPLES, EvalReport, eval_mesh_distance, eval_normal_similarity
from .model import FACE_THRESHOLD, ModelConfig
from .mesh.graph import EDGE_THRESHOLD

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC, EXIT_WARN = 0, 1, 2, 3, 4

log = logging.getLogger("scanmesh")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- manifests

def content_hash(paths) -> str:
    """sha256 over the bytes of the given files (sorted by path)."""
    h = hashlib.sha256()
    for p in sorted(Path(p) for p in paths):
        h.update(str(p.name).encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def write_manifest(path, command: str, config: dict, seed, inputs: list, outputs: list, **extra) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    files = [Path(p) for p in inputs if Path(p).is_file()]
    body = {"command": command, "config": config, "seed": seed,
            "input_hash": content_hash(files) if files else None,
            "inputs": [str(p) for p in inputs], "outputs": [str(p) for p in outputs], **extra}
    path.write_text(json.dumps(body, indent=2, sort_keys=True, default=str) + "\n")
    return path


# ---------------------------------------------------------------- commands

def cmd_gen_data(args) -> int:
    from .train.data import generate_dataset

    if args.shapes == "builtin":
        shapes = builtin_corpus(args.count, args.seed)
    else:
        src = Path(args.shapes)
        if not src.is_dir():
            raise DataError(f"shape directory {src} does not exist")
        shapes = [(p.stem, p.parent.name if p.parent != src else "obj", p) for p in sorted(src.rglob("*.obj"))]
        if not shapes:
            raise DataError(f"no .obj files under {src}")
    out = Path(args.out)
    index, skipped = generate_dataset(shapes, out, args.views, args.seed, args.trajectories, args.max_vertices)
    files = [out / e.tsdf for e in index.entries] + sorted({out / e.mesh for e in index.entries})
    write_manifest(out / "manifest.json", "gen-data", vars_config(args), args.seed,
                   [] if args.shapes == "builtin" else [s[2] for s in shapes], [out / "index.json"],
                   output_hash=content_hash(files), skipped=skipped, n_entries=len(index.entries))
    print(f"wrote {len(index.entries)} scans of {len(shapes) - len(skipped)} shapes to {out}"
          + (f"; skipped {len(skipped)}" if skipped else ""))
    return EXIT_WARN if skipped else EXIT_OK


def _load_train_config(args):
    from .train.config import TrainConfig

    cfg = TrainConfig.load(args.config) if args.config else TrainConfig()
    changes = {"stage": args.stage}
    for key in ("lr", "steps", "epochs", "seed", "batch_size"):
        if getattr(args, key) is not None:
            changes[key] = getattr(args, key)
    if args.data:
        changes["dataset"] = str(args.data)
    return replace(cfg, **changes)


def cmd_train(args) -> int:
    from .model import Scan2Mesh
    from .train.data import DatasetIndex
    from .train.trainer import StageOrderError, Trainer, check_stage_order, load_model

    cfg = _load_train_config(args)
    if not cfg.dataset:
        raise UsageError("--data (or 'dataset' in the config) is required")
    try:
        index = DatasetIndex.load(cfg.dataset)
    except (OSError, ValueError, KeyError) as err:
        raise DataError(f"cannot read dataset {cfg.dataset}: {err}") from err
    if args.resume:
        try:
            model, done = load_model(args.resume, cfg.model if args.config else None)
        except OSError as err:
            raise DataError(f"cannot read checkpoint {args.resume}: {err}") from err
        except ValueError as err:
            raise UsageError(str(err)) from err
        cfg = replace(cfg, model=model.cfg)
    else:
        model, done = Scan2Mesh(cfg.model), []
    try:
        check_stage_order(cfg.stage, done)
    except StageOrderError as err:
        raise UsageError(str(err)) from err
    train = index.samples("train")
    val = index.samples("val") or None
    if not train:
        raise DataError(f"dataset {cfg.dataset} has no training entries")
    out = Path(args.out)
    result = Trainer(model, train, val, out, done).run(cfg)
    cfg.save(out / f"{cfg.stage}.config.json")
    write_manifest(out / f"{cfg.stage}.manifest.json", "train", cfg.to_dict(), cfg.seed,
                   [Path(cfg.dataset) / "index.json"] + ([args.resume] if args.resume else []),
                   [result.checkpoint, out / "log.jsonl"], best_val=result.best_val, skipped=result.skipped)
    print(f"{cfg.stage}: {result.steps} steps, best val {result.best_val}, checkpoint {result.checkpoint}")
    return EXIT_OK


def cmd_infer(args) -> int:
    from .scan.tsdf import read_tsdf
    from .train.trainer import load_model

    try:
        model, done = load_model(args.ckpt)
    except OSError as err:
        raise DataError(f"cannot read checkpoint {args.ckpt}: {err}") from err
    needed = ["vertex_edge"] + (["direct"] if args.direct else ["face_ce"] if args.ce_only
                                else ["face_ce", "face_chamfer"])
    missing = [s for s in needed if s not in done]
    if missing:
        raise UsageError(f"checkpoint {args.ckpt} lacks stages {missing}"
                         + ("" if args.ce_only or args.direct else " (use --ce-only for a stage-2 checkpoint)"))
    try:
        vol = read_tsdf(args.tsdf)
    except (OSError, ValueError) as err:
        raise DataError(str(err)) from err
    pred = model.infer(vol, edge_threshold=args.edge_thresh, face_threshold=args.face_thresh,
                       direct=args.direct)
    if not np.isfinite(pred.vertices).all():
        print("non-finite vertex positions", file=sys.stderr)
        return EXIT_NUMERIC
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_obj(pred.mesh, out)
    write_manifest(out.with_suffix(".manifest.json"), "infer",
                   {"edge_threshold": args.edge_thresh, "face_threshold": args.face_thresh,
                    "direct": args.direct, "ce_only": args.ce_only, "stages": done},
                   model.cfg.seed, [args.ckpt, args.tsdf], [out],
                   n_vertices=pred.mesh.n_vertices, n_faces=pred.mesh.n_faces, n_candidates=pred.dual.n_nodes)
    if pred.mesh.n_faces == 0:
        print(f"warning: no face passed threshold {args.face_thresh}; wrote vertices only to {out}",
              file=sys.stderr)
        return EXIT_WARN
    print(f"wrote {pred.mesh.n_vertices} vertices and {pred.mesh.n_faces} faces to {out}")
    return EXIT_OK


def _class_of(stem: str, classes: dict[str, str]) -> str:
    return classes.get(stem, stem.split("-")[0])


def cmd_eval(args) -> int:
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    for d in (pred_dir, gt_dir):
        if not d.is_dir():
            raise DataError(f"directory {d} does not exist")
    preds = {p.stem: p for p in pred_dir.glob("*.obj")}
    gts = {p.stem: p for p in gt_dir.glob("*.obj")}
    paired = sorted(set(preds) & set(gts))
    unpaired = sorted(set(preds) ^ set(gts))
    classes = {}
    if (gt_dir / "classes.json").is_file():
        classes = json.loads((gt_dir / "classes.json").read_text())
    report = EvalReport()
    failed = []
    for stem in paired:
        try:
            a, b = read_obj(preds[stem]), read_obj(gts[stem])
            report.add(stem, _class_of(stem, classes), eval_mesh_distance(a, b, args.k),
                       eval_normal_similarity(a, b, args.k))
        except MeshError as err:
            log.warning("%s: %s", stem, err)
            failed.append(stem)
    if not report.rows:
        raise DataError("no evaluable prediction/target pairs")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    report.write_csv(out)
    summary = report.write_summary_csv(out.with_name(out.stem + "_summary.csv"))
    write_manifest(out.with_suffix(".manifest.json"), "eval", {"k": args.k}, 0,
                   [preds[s] for s in paired] + [gts[s] for s in paired], [out, summary],
                   unpaired=unpaired, failed=failed)
    print(report.table())
    for s in unpaired:
        print(f"unpaired: {s}", file=sys.stderr)
    return EXIT_WARN if unpaired or failed else EXIT_OK


def cmd_bench(args) -> int:
    from .train.bench import bench_scaling, write_bench_csv

    try:
        n_list = [int(x) for x in args.n.split(",") if x.strip()]
    except ValueError as err:
        raise UsageError(f"--n must be comma-separated integers: {err}") from err
    rows = bench_scaling(n_list, args.batch_size, args.repeats, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_bench_csv(rows, out)
    write_manifest(out.with_suffix(".manifest.json"), "bench", vars_config(args), args.seed, [], [out])
    print(out.read_text(), end="")
    return EXIT_WARN if any(r.status != "ok" for r in rows) else EXIT_OK


# ---------------------------------------------------------------- parser

def vars_config(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="scanmesh", description="Partial TSDF scan to triangle mesh.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="virtually scan shapes into a training dataset")
    g.add_argument("--shapes", default="builtin", help="'builtin' or a directory of .obj files")
    g.add_argument("--count", type=int, default=50, help="number of builtin shapes")
    g.add_argument("--out", required=True)
    g.add_argument("--views", type=int, default=1)
    g.add_argument("--trajectories", type=int, default=2, help="scans per shape")
    g.add_argument("--max-vertices", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="run one training stage")
    t.add_argument("--stage", required=True, choices=["vertex_edge", "face_ce", "face_chamfer", "direct"])
    t.add_argument("--config", help="TrainConfig JSON")
    t.add_argument("--data", help="dataset directory (with index.json)")
    t.add_argument("--out", required=True)
    t.add_argument("--resume", help="checkpoint of the previous stage")
    t.add_argument("--lr", type=float)
    t.add_argument("--steps", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="predict a mesh from a TSDF file")
    i.add_argument("--ckpt", required=True)
    i.add_argument("--tsdf", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--edge-thresh", type=float, default=EDGE_THRESHOLD)
    i.add_argument("--face-thresh", type=float, default=FACE_THRESHOLD)
    i.add_argument("--ce-only", action="store_true", help="accept a checkpoint without the chamfer stage")
    i.add_argument("--direct", action="store_true", help="use the direct triple classifier")
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="mesh distance and normal similarity of paired OBJ files")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--k", type=int, default=EVAL_SAMPLES)
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="time and memory of vertex-edge training and inference")
    b.add_argument("--n", default="100,200,300,400")
    b.add_argument("--out", default="bench.csv")
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--batch-size", type=int, default=1)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    from .train.trainer import NumericError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as err:
        print(f"scanmesh {args.command}: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, MeshError, FileNotFoundError) as err:
        print(f"scanmesh {args.command}: data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as err:
        print(f"scanmesh {args.command}: numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())
