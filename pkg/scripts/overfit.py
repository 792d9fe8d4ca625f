"""Overfit the full three-stage schedule on a handful of builtin shapes.

Prints per-stage loss summaries and the final mesh distance / normal
similarity on the training shapes, and writes them to ``--out``/overfit.json.

    python3 scripts/overfit.py --shapes 5 --out runs/overfit
"""

from __future__ import annotations

import argparse
import json
import logging
import time
from pathlib import Path

import numpy as np

from scanmesh.metrics import eval_normal_similarity
from scanmesh.model import ModelConfig, Scan2Mesh
from scanmesh.train import TrainConfig, Trainer, builtin_samples, mesh_score

OVERFIT_MODEL = ModelConfig(n_vertices=48, dropout=0.0)
OVERFIT_STEPS = {"vertex_edge": 800, "face_ce": 200, "face_chamfer": 60}


def run_overfit(n_shapes: int = 5, views: int = 8, seed: int = 0, model_cfg: ModelConfig = OVERFIT_MODEL,
                steps: dict | None = None, out_dir=None, matcher: str = "hungarian", lr: float = 5e-4,
                lr_final: float | None = 2.5e-5) -> dict:
    steps = {**OVERFIT_STEPS, **(steps or {})}
    samples = builtin_samples(n_shapes, seed, views=views, max_vertices=model_cfg.n_vertices)
    model = Scan2Mesh(model_cfg)
    trainer = Trainer(model, samples, out_dir=out_dir)
    report: dict = {"stages": {}, "shapes": []}
    for stage in ("vertex_edge", "face_ce", "face_chamfer"):
        t0 = time.perf_counter()
        cfg = TrainConfig(stage=stage, steps=steps[stage], batch_size=len(samples), model=model_cfg,
                          matcher=matcher, lr=lr, lr_final=lr_final, seed=seed, val_every=max(steps[stage] // 10, 1))
        res = trainer.run(cfg)
        key = {"vertex_edge": "vertex_l1", "face_ce": "face_ce", "face_chamfer": "chamfer"}[stage]
        curve = res.series(key)
        report["stages"][stage] = {"first": float(curve[0]) if len(curve) else None,
                                   "last": float(curve[-1]) if len(curve) else None,
                                   "min": float(curve.min()) if len(curve) else None,
                                   "best_val": res.best_val, "skipped": res.skipped,
                                   "seconds": time.perf_counter() - t0}
    for s in samples:
        pred = model.infer(s.volume)
        dist = mesh_score(pred.mesh, s.target)
        nsim = eval_normal_similarity(pred.mesh, s.target) if pred.mesh.n_faces else 0.0
        report["shapes"].append({"name": s.name, "diag": s.target.bbox_diagonal(), "dist": dist,
                                 "nsim": nsim, "faces": pred.mesh.n_faces, "target_faces": s.target.n_faces})
    report["model"] = model
    return report


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--shapes", type=int, default=5)
    ap.add_argument("--views", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--stage1-steps", type=int, default=OVERFIT_STEPS["vertex_edge"])
    ap.add_argument("--stage2-steps", type=int, default=OVERFIT_STEPS["face_ce"])
    ap.add_argument("--stage3-steps", type=int, default=OVERFIT_STEPS["face_chamfer"])
    ap.add_argument("--out", type=Path, default=Path("runs/overfit"))
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    steps = {"vertex_edge": args.stage1_steps, "face_ce": args.stage2_steps, "face_chamfer": args.stage3_steps}
    rep = run_overfit(args.shapes, args.views, args.seed, steps=steps, out_dir=args.out)
    rep.pop("model")
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "overfit.json").write_text(json.dumps(rep, indent=2) + "\n")
    for stage, r in rep["stages"].items():
        print(f"{stage:13s} first {r['first']:.5f} last {r['last']:.5f} ({r['seconds']:.0f}s, skipped {r['skipped']})")
    for s in rep["shapes"]:
        print(f"{s['name']:14s} dist {s['dist']:.4f} (diag {s['diag']:.3f}, ratio {s['dist'] / s['diag']:.4f}) "
              f"nsim {s['nsim']:.3f} faces {s['faces']}/{s['target_faces']}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
