"""Time and peak memory of vertex-edge training and inference as n grows."""

from __future__ import annotations

import csv
import time
import tracemalloc
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..autodiff import Adam, backward
from ..mesh.decimate import decimate
from ..mesh.shapes import icosphere
from ..model import ModelConfig, Scan2Mesh
from .config import TrainConfig
from .data import Sample, builtin_samples
from .trainer import Trainer, _scan_batch

BENCH_COLUMNS = ("n_verts", "train_time_s", "train_mem_gb", "infer_time_s", "infer_mem_gb")
DEFAULT_N = (100, 200, 300, 400)


@dataclass
class BenchRow:
    n_verts: int
    train_time_s: float | None
    train_mem_gb: float | None
    infer_time_s: float | None
    infer_mem_gb: float | None
    status: str = "ok"

    def cells(self) -> list[str]:
        vals = [self.train_time_s, self.train_mem_gb, self.infer_time_s, self.infer_mem_gb]
        return [str(self.n_verts)] + ["OOM" if v is None else f"{v:.4f}" for v in vals]


def _measure(fn) -> tuple[float, float]:
    tracemalloc.start()
    t0 = time.perf_counter()
    try:
        fn()
        elapsed = time.perf_counter() - t0
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    return elapsed, peak / 1e9


def _bench_samples(n: int, batch_size: int, seed: int) -> list[Sample]:
    """Scans of the builtin corpus paired with sphere targets of about ``n`` vertices."""
    target = decimate(icosphere(4, 0.5), n)
    return [replace(s, target=target) for s in builtin_samples(batch_size, seed)]


def bench_scaling(n_list=DEFAULT_N, batch_size: int = 1, repeats: int = 3, seed: int = 0,
                  model_cfg: ModelConfig | None = None) -> list[BenchRow]:
    """Mean train-step (forward, Hungarian matching, backward, Adam) and inference
    time per n, with tracemalloc peaks. A MemoryError marks the row OOM."""
    base = model_cfg or ModelConfig()
    rows = []
    for n in n_list:
        cfg = replace(base, n_vertices=int(n), seed=seed)
        try:
            model = Scan2Mesh(cfg)
            samples = _bench_samples(int(n), batch_size, seed)
            trainer = Trainer(model, samples)
            tcfg = TrainConfig(stage="vertex_edge", batch_size=batch_size, model=cfg)
            params = model.stage_parameters("vertex_edge")
            opt = Adam(params, lr=tcfg.lr)

            def train_step():
                model.train()
                opt.zero_grad()
                loss, _ = trainer._vertex_edge_loss(tcfg, samples)
                backward(loss)
                for p in params:
                    if p.grad is None:
                        p.grad = np.zeros_like(p.data)
                opt.step()

            batch = _scan_batch(samples)

            def infer_step():
                model.eval()
                trainer._predicted_graphs(tcfg, batch, grad=False)

            train_step()  # warm-up
            tr = [_measure(train_step) for _ in range(repeats)]
            inf = [_measure(infer_step) for _ in range(repeats)]
            rows.append(BenchRow(int(n), float(np.mean([t for t, _ in tr])), max(m for _, m in tr),
                                 float(np.mean([t for t, _ in inf])), max(m for _, m in inf)))
        except MemoryError:
            rows.append(BenchRow(int(n), None, None, None, None, status="OOM"))
    return rows


def write_bench_csv(rows: list[BenchRow], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BENCH_COLUMNS)
        for r in rows:
            w.writerow(r.cells())
    return path
