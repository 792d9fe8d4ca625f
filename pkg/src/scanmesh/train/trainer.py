"""The staged training schedule.

Stage ``vertex_edge`` trains the encoder, vertex head and vertex-edge graph
network on matched l1 plus edge cross entropy. Stage ``face_ce`` trains the
face network on dual graphs of the target meshes, and ``face_chamfer``
fine-tunes it on duals of predicted graphs with the mesh chamfer loss. The
ablation stage ``direct`` trains the triple classifier instead.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..autodiff import Adam, Tensor, backward, load_checkpoint, no_grad, ops, save_checkpoint
from ..losses import (MAX_CHAMFER_FACES, chamfer_mesh_loss, edge_ce_loss, edge_labels, face_ce_loss,
                      matched_vertex_loss)
from ..assignment import MATCHERS, vertex_cost_matrix
from ..mesh.faceset import IndexedFaceSet
from ..mesh.graph import VertexEdgeGraph, build_dual_graph, face_labels
from ..metrics import eval_mesh_distance
from ..model import Scan2Mesh, ScanBatch, edge_probabilities
from ..model.direct import surface_triple_labels, triple_labels
from .config import REQUIRES, TrainConfig
from .data import Sample

log = logging.getLogger(__name__)


class StageOrderError(RuntimeError):
    """A stage was started without the stages it builds on."""


class NumericError(RuntimeError):
    """A loss or gradient became NaN or infinite."""


@dataclass
class StageResult:
    stage: str
    steps: int
    losses: list[dict] = field(default_factory=list)
    best_val: float | None = None
    skipped: int = 0
    checkpoint: Path | None = None

    def series(self, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.losses if key in r], dtype=np.float64)


# ---------------------------------------------------------------- checkpoints

def save_model(model: Scan2Mesh, path, stages: list[str], extra: dict | None = None) -> Path:
    meta = {"model_config": model.cfg.to_dict(), "stages": list(stages), **(extra or {})}
    return save_checkpoint(path, model.state_dict(), meta)


def load_model(path, cfg=None) -> tuple[Scan2Mesh, list[str]]:
    """Rebuild a model from a checkpoint; with ``cfg`` the stored config must match."""
    from ..model.config import ModelConfig

    state, meta = load_checkpoint(path)
    stored = ModelConfig.from_dict(meta["model_config"])
    if cfg is not None and cfg != stored:
        raise ValueError(f"checkpoint {path} was trained with a different model config; "
                         f"differing keys: {cfg.differing_keys(stored)}")
    model = Scan2Mesh(stored)
    model.load_state_dict(state)
    return model, list(meta.get("stages", []))


def check_stage_order(stage: str, done: list[str]) -> None:
    missing = [s for s in REQUIRES[stage] if s not in done]
    if missing:
        raise StageOrderError(f"stage {stage!r} needs a checkpoint that completed {missing} "
                              f"(checkpoint has {done or 'nothing'})")


# ---------------------------------------------------------------- helpers

def _batches(n: int, batch_size: int, rng: np.random.Generator):
    while True:
        order = rng.permutation(n)
        for s in range(0, n, batch_size):
            yield order[s:s + batch_size]


def _scan_batch(samples: list[Sample]) -> ScanBatch:
    return ScanBatch.from_volumes([s.volume for s in samples])


def _finite_or_raise(value: float, stage: str, step: int, names, params) -> None:
    if np.isfinite(value):
        return
    norms = {p.name or f"#{i}": float(np.linalg.norm(p.grad)) if p.grad is not None else None
             for i, p in enumerate(params)}
    bad = {k: v for k, v in norms.items() if v is None or not np.isfinite(v)}
    raise NumericError(f"{stage} step {step}: loss {value} on batch {list(names)}; "
                       f"non-finite gradient norms: {bad or 'none'}; "
                       f"largest: {sorted(norms.items(), key=lambda kv: -(kv[1] or 0))[:3]}")


def _freeze(model: Scan2Mesh, stage: str, unfreeze: bool = False) -> None:
    """Train mode only for the modules a stage updates; frozen parts run in eval mode."""
    model.eval()
    if stage == "vertex_edge" or unfreeze:
        for m in (model.encoder, model.vertex_head, model.graph):
            m.train()
    if stage in ("face_ce", "face_chamfer"):
        model.face.train()
    if stage == "direct":
        model.direct.train()


def face_probability_tensor(logits: Tensor) -> Tensor:
    """Differentiable class-1 probability from (F, 2) logits."""
    return ops.sigmoid(ops.sub(ops.index(logits, (slice(None), 1)), ops.index(logits, (slice(None), 0))))


# ---------------------------------------------------------------- trainer

class Trainer:
    """Runs one stage at a time on a fixed list of samples.

    ``train`` samples drive the optimizer; ``val`` samples (defaulting to
    the training set) pick the best checkpoint. Log records go to
    ``out_dir/log.jsonl`` when an output directory is given.
    """

    def __init__(self, model: Scan2Mesh, train: list[Sample], val: list[Sample] | None = None,
                 out_dir=None, done: list[str] | None = None):
        if not train:
            raise ValueError("no training samples")
        self.model = model
        self.train_set = train
        self.val_set = val or train
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.done = list(done or [])
        self._gt_duals: dict[str, tuple] = {}
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)

    # ------------------------------------------------------------ logging

    def _log(self, record: dict) -> None:
        if self.out_dir is not None:
            with open(self.out_dir / "log.jsonl", "a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    # ------------------------------------------------------------ stage losses

    def _vertex_edge_loss(self, cfg: TrainConfig, samples: list[Sample]):
        m = self.model
        batch = _scan_batch(samples)
        feats = m.encode(batch)
        pos = m.predict_vertices(feats)
        logits, _ = m.edges(pos, feats, batch)
        n = m.cfg.n_vertices
        vloss, labels = None, []
        for b, s in enumerate(samples):
            lb, a = matched_vertex_loss(ops.index(pos, b), s.target.vertices, cfg.matcher)
            vloss = lb if vloss is None else ops.add(vloss, lb)
            labels.append(edge_labels(a, s.target.edges(), n))
        vloss = ops.mul(vloss, 1.0 / len(samples))
        eloss = edge_ce_loss(logits, np.stack(labels), cfg.edge_pos_weight)
        total = ops.add(vloss, ops.mul(eloss, cfg.lambda_edge))
        return total, {"vertex_l1": float(vloss.data), "edge_ce": float(eloss.data)}

    def gt_dual(self, s: Sample):
        if s.name not in self._gt_duals:
            dual = build_dual_graph(VertexEdgeGraph.from_mesh(s.target))
            self._gt_duals[s.name] = (dual, face_labels(dual.triangles, s.target.faces))
        return self._gt_duals[s.name]

    def _face_ce_loss(self, cfg: TrainConfig, samples: list[Sample]):
        m = self.model
        batch = _scan_batch(samples)
        with no_grad():
            feats = m.encode(batch)
        duals, labels = zip(*(self.gt_dual(s) for s in samples))
        logits, _ = m.faces(list(duals), feats, batch)
        y = np.concatenate(labels)
        if len(y) == 0:
            return None, {}
        loss = face_ce_loss(logits, y)
        return loss, {"face_ce": float(loss.data)}

    def _predicted_graphs(self, cfg: TrainConfig, batch: ScanBatch, grad: bool):
        m = self.model
        if grad:
            feats = m.encode(batch)
            pos = m.predict_vertices(feats)
            logits, nodes = m.edges(pos, feats, batch)
        else:
            with no_grad():
                feats = m.encode(batch)
                pos = m.predict_vertices(feats)
                logits, nodes = m.edges(pos, feats, batch)
        return feats, pos, edge_probabilities(logits), nodes

    def _face_chamfer_loss(self, cfg: TrainConfig, samples: list[Sample], step: int):
        m = self.model
        batch = _scan_batch(samples)
        feats, pos, eprob, _ = self._predicted_graphs(cfg, batch, cfg.unfreeze_vertex_edge)
        verts = pos.data.astype(np.float64)
        duals = [build_dual_graph(VertexEdgeGraph(verts[b], eprob[b])) for b in range(len(samples))]
        usable = [b for b, d in enumerate(duals) if 0 < d.n_nodes <= MAX_CHAMFER_FACES]
        skipped = len(samples) - len(usable)
        if not usable:
            return None, {"skipped": skipped}
        sub = ScanBatch(batch.volumes[usable], batch.scale[usable], batch.offset[usable])
        logits, db = m.faces([duals[b] for b in usable], feats if len(usable) == len(samples)
                             else _subset_features(feats, usable), sub)
        probs = face_probability_tensor(logits)
        total, fallbacks = None, 0
        for k, b in enumerate(usable):
            rows = np.arange(db.offsets[k], db.offsets[k + 1])
            v = ops.index(pos, b) if cfg.unfreeze_vertex_edge else Tensor(verts[b])
            res = chamfer_mesh_loss(v, duals[b].triangles, samples[b].target, cfg.chamfer_samples,
                                    seed=cfg.seed * 100_003 + step * 101 + b,
                                    face_probs=ops.gather_rows(probs, rows))
            fallbacks += res.vertex_fallback
            total = res.loss if total is None else ops.add(total, res.loss)
        total = ops.mul(total, 1.0 / len(usable))
        return total, {"chamfer": float(total.data), "skipped": skipped, "fallback": fallbacks}

    def _direct_labels(self, cfg: TrainConfig, s: Sample, verts: np.ndarray) -> np.ndarray:
        if cfg.direct_target == "surf":
            return surface_triple_labels(verts, s.target, cfg.direct_threshold_voxels / s.volume.transform.scale)
        a = MATCHERS[cfg.matcher](vertex_cost_matrix(verts, s.target.vertices))
        pred_of = np.full(len(s.target.vertices), -1, dtype=np.int64)
        pred_of[a.cols] = a.rows
        faces = pred_of[s.target.faces]
        return triple_labels(len(verts), faces[(faces >= 0).all(axis=1)])

    def _direct_loss(self, cfg: TrainConfig, samples: list[Sample]):
        batch = _scan_batch(samples)
        _, pos, _, nodes = self._predicted_graphs(cfg, batch, False)
        logits = self.model.direct(nodes)
        verts = pos.data.astype(np.float64)
        y = np.concatenate([self._direct_labels(cfg, s, verts[b]) for b, s in enumerate(samples)])
        z = ops.reshape(logits, (-1, 2))
        loss = face_ce_loss(z, y)
        return loss, {"direct_ce": float(loss.data)}

    def _stage_loss(self, cfg: TrainConfig, samples: list[Sample], step: int):
        if cfg.stage == "vertex_edge":
            return self._vertex_edge_loss(cfg, samples)
        if cfg.stage == "face_ce":
            return self._face_ce_loss(cfg, samples)
        if cfg.stage == "face_chamfer":
            return self._face_chamfer_loss(cfg, samples, step)
        return self._direct_loss(cfg, samples)

    # ------------------------------------------------------------ validation

    def validate(self, cfg: TrainConfig) -> float:
        """Lower is better. Vertex stage: matched l1 of the predicted vertices;
        face stages: mean mesh distance of the predicted meshes (empty
        predictions score the target's bounding-box diagonal)."""
        m = self.model
        was = m.training
        m.eval()
        try:
            scores = []
            for s in self.val_set:
                batch = _scan_batch([s])
                if cfg.stage == "vertex_edge":
                    with no_grad():
                        v = m.predict_vertices(m.encode(batch))
                    loss, _ = matched_vertex_loss(Tensor(v.data[0].astype(np.float64)), s.target.vertices,
                                                  cfg.matcher)
                    scores.append(float(loss.data))
                else:
                    pred = m.predict(batch, direct=cfg.stage == "direct")[0]
                    scores.append(mesh_score(pred.mesh, s.target, k=2000))
            return float(np.mean(scores))
        finally:
            if was:
                _freeze(m, cfg.stage, cfg.unfreeze_vertex_edge)

    # ------------------------------------------------------------ main loop

    def run(self, cfg: TrainConfig) -> StageResult:
        check_stage_order(cfg.stage, self.done)
        if cfg.model != self.model.cfg:
            raise ValueError(f"train config model differs from the model: "
                             f"{cfg.model.differing_keys(self.model.cfg)}")
        params = (self.model.stage_parameters("vertex_edge") if cfg.unfreeze_vertex_edge else []) + \
            self.model.stage_parameters(cfg.stage)
        opt = Adam(params, lr=cfg.lr)
        rng = np.random.default_rng(cfg.seed)
        per_epoch = -(-len(self.train_set) // cfg.batch_size)
        n_steps = cfg.steps if cfg.steps is not None else cfg.n_epochs * per_epoch
        result = StageResult(cfg.stage, n_steps)
        best_state, best_val = None, np.inf
        batches = _batches(len(self.train_set), cfg.batch_size, rng)
        _freeze(self.model, cfg.stage, cfg.unfreeze_vertex_edge)
        t0 = time.perf_counter()
        for step in range(1, n_steps + 1):
            idx = next(batches)
            samples = [self.train_set[i] for i in idx]
            opt.zero_grad()
            self.model.zero_grad()
            loss, parts = self._stage_loss(cfg, samples, step)
            result.skipped += int(parts.get("skipped", 0))
            if loss is None:
                continue
            _finite_or_raise(float(loss.data), cfg.stage, step, [s.name for s in samples], params)
            backward(loss)
            for p in params:
                if p.grad is None:
                    p.grad = np.zeros_like(p.data)
            gnorm = float(np.sqrt(sum(float((p.grad.astype(np.float64) ** 2).sum()) for p in params)))
            _finite_or_raise(gnorm, cfg.stage, step, [s.name for s in samples], params)
            opt.lr = cfg.lr_at(step, n_steps)
            opt.step()
            record = {"stage": cfg.stage, "step": step, "epoch": (step - 1) // per_epoch,
                      "loss": float(loss.data), "grad_norm": gnorm, "lr": opt.lr, **parts}
            if step % cfg.val_every == 0 or step == n_steps:
                val = self.validate(cfg)
                record["val"] = val
                if val <= best_val:
                    best_val, best_state = val, self.model.state_dict()
            record["time_s"] = time.perf_counter() - t0
            result.losses.append(record)
            if step == 1 or step % cfg.log_every == 0 or step == n_steps:
                self._log(record)
                log.info("%s step %d/%d loss %.5f", cfg.stage, step, n_steps, record["loss"])
        if best_state is not None:
            self.model.load_state_dict(best_state)
            result.best_val = best_val
        else:  # every step was skipped; score the untouched model
            result.best_val = self.validate(cfg)
        self.model.eval()
        self.done = [s for s in self.done if s != cfg.stage] + [cfg.stage]
        if self.out_dir is not None:
            result.checkpoint = save_model(self.model, self.out_dir / f"{cfg.stage}.npz", self.done,
                                           {"train_config": cfg.to_dict(), "best_val": result.best_val,
                                            "skipped": result.skipped})
        return result


def _subset_features(feats, rows):
    from ..model import EncoderFeatures

    return EncoderFeatures(ops.gather_rows(feats.f2, np.asarray(rows)), ops.gather_rows(feats.f, np.asarray(rows)))


def mesh_score(pred: IndexedFaceSet, target: IndexedFaceSet, k: int = 10_000, seed: int = 0) -> float:
    """Mesh distance, with predictions lacking faces scored as the target's bbox diagonal."""
    if pred.n_faces == 0 or not pred.face_areas().sum() > 0:
        return target.bbox_diagonal()
    return eval_mesh_distance(pred, target, k, seed)


def train_schedule(model: Scan2Mesh, train: list[Sample], cfgs: list[TrainConfig], val=None,
                   out_dir=None) -> list[StageResult]:
    """Run several stages in order on one trainer."""
    trainer = Trainer(model, train, val, out_dir)
    return [trainer.run(c) for c in cfgs]
