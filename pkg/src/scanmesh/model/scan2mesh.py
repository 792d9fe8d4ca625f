"""The full network: scan encoder, vertex head, vertex-edge graph net, face net."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import MLP, Module, Tensor, no_grad, ops
from ..mesh.faceset import IndexedFaceSet
from ..mesh.graph import EDGE_THRESHOLD, DualGraph, VertexEdgeGraph, build_dual_graph
from ..scan.tsdf import TsdfVolume
from .config import ModelConfig
from .direct import DirectFaceNet, all_triples
from .encoder import Encoder, EncoderFeatures, f2_cells, lookup_f2
from .face import DualBatch, FaceNet, batch_duals, face_probabilities
from .graphnet import VertexEdgeNet, edge_probabilities

FACE_THRESHOLD = 0.5


def kept_faces(triangles: np.ndarray, probs: np.ndarray, threshold: float = FACE_THRESHOLD) -> np.ndarray:
    """Candidate triangles whose face probability exceeds ``threshold``."""
    return np.asarray(triangles, dtype=np.int64).reshape(-1, 3)[np.asarray(probs) > threshold]


@dataclass
class ScanBatch:
    """Stacked input volumes with the mesh-to-grid transform of each sample."""

    volumes: np.ndarray  # (B, 5, R, R, R)
    scale: np.ndarray    # (B,)
    offset: np.ndarray   # (B, 3)

    @classmethod
    def from_volumes(cls, vols: list[TsdfVolume]) -> "ScanBatch":
        return cls(np.stack([v.data for v in vols]),
                   np.array([v.transform.scale for v in vols], dtype=np.float64),
                   np.stack([np.asarray(v.transform.offset, dtype=np.float64) for v in vols]))

    def __len__(self) -> int:
        return len(self.volumes)


@dataclass
class Prediction:
    """Everything inference produces for one scan."""

    vertices: np.ndarray
    edge_prob: np.ndarray
    dual: DualGraph
    face_prob: np.ndarray
    mesh: IndexedFaceSet

    @property
    def n_kept_faces(self) -> int:
        return self.mesh.n_faces


class Scan2Mesh(Module):
    def __init__(self, cfg: ModelConfig = ModelConfig(), dtype=np.float32):
        rng = np.random.default_rng(cfg.seed)
        self.cfg = cfg
        self.dtype = dtype
        self.encoder = Encoder(rng, cfg.enc_channels, cfg.latent_dim, dtype)
        c2 = self.encoder.f2_channels
        self.vertex_head = MLP(cfg.latent_dim, cfg.vertex_hidden, 3 * cfg.n_vertices, rng, cfg.dropout,
                               head=True, dtype=dtype, zero_last=cfg.zero_init_vertices)
        self.graph = VertexEdgeNet(c2, rng, cfg.node_dim, cfg.edge_dim, cfg.hidden_dim, cfg.rounds,
                                   cfg.dropout, dtype)
        self.face = FaceNet(c2, rng, cfg.face_dim, cfg.hidden_dim, cfg.face_rounds, cfg.dropout,
                            cfg.face_use_f2, cfg.radius_clip, dtype)
        self.direct = (DirectFaceNet(cfg.node_dim, rng, cfg.face_dim, cfg.hidden_dim, cfg.dropout,
                                     cfg.direct_max_vertices, dtype) if cfg.direct_faces else None)

    # ---------------------------------------------------------------- pieces

    def encode(self, batch: ScanBatch) -> EncoderFeatures:
        return self.encoder(Tensor(batch.volumes.astype(self.dtype)))

    def predict_vertices(self, feats: EncoderFeatures) -> Tensor:
        """(B, n, 3) positions in mesh space."""
        v = self.vertex_head(feats.f)
        return ops.reshape(v, (feats.batch, self.cfg.n_vertices, 3))

    def edges(self, positions: Tensor, feats: EncoderFeatures, batch: ScanBatch) -> tuple[Tensor, Tensor]:
        """Symmetrized edge logits (B, n, n, 2) and node features for given positions."""
        cells = f2_cells(positions.data, batch.scale, batch.offset)
        rows = lookup_f2(feats.f2, cells)
        return self.graph(positions, rows)

    def faces(self, duals: list[DualGraph], feats: EncoderFeatures, batch: ScanBatch) -> tuple[Tensor, DualBatch]:
        db = batch_duals(duals, batch.scale, batch.offset)
        return self.face(db, feats.f2 if self.cfg.face_use_f2 else None), db

    # ---------------------------------------------------------------- inference

    def predict(self, batch: ScanBatch, edge_threshold: float = EDGE_THRESHOLD,
                face_threshold: float = FACE_THRESHOLD, direct: bool = False) -> list[Prediction]:
        """Eval-mode forward pass producing a mesh per sample."""
        was_training = self.training
        self.eval()
        try:
            with no_grad():
                feats = self.encode(batch)
                pos = self.predict_vertices(feats)
                logits, nodes = self.edges(pos, feats, batch)
                eprob = edge_probabilities(logits)
                verts = pos.data.astype(np.float64)
                if direct:
                    return self._predict_direct(verts, eprob, nodes, face_threshold)
                duals = [build_dual_graph(VertexEdgeGraph(verts[b], eprob[b], edge_threshold))
                         for b in range(len(batch))]
                flogits, db = self.faces(duals, feats, batch)
                fprob = db.split(face_probabilities(flogits))
        finally:
            self.train(was_training)
        out = []
        for b, (dual, p) in enumerate(zip(duals, fprob)):
            kept = kept_faces(dual.triangles, p, face_threshold)
            out.append(Prediction(verts[b], eprob[b], dual, p, IndexedFaceSet(verts[b], kept)))
        return out

    def _predict_direct(self, verts, eprob, nodes, face_threshold) -> list[Prediction]:
        if self.direct is None:
            raise ValueError("model was built without the direct face network")
        logits = self.direct(nodes).data
        probs = 1.0 / (1.0 + np.exp(logits[..., 0].astype(np.float64) - logits[..., 1]))
        t = all_triples(verts.shape[1])
        out = []
        for b in range(len(verts)):
            kept = kept_faces(t, probs[b], face_threshold)
            empty = DualGraph(t, np.zeros((len(t), 8)), np.zeros(len(t), dtype=bool), np.zeros((0, 2), dtype=np.int64))
            out.append(Prediction(verts[b], eprob[b], empty, probs[b], IndexedFaceSet(verts[b], kept)))
        return out

    def infer(self, volume: TsdfVolume, **kw) -> Prediction:
        return self.predict(ScanBatch.from_volumes([volume]), **kw)[0]

    # ---------------------------------------------------------------- parameter groups

    def stage_parameters(self, stage: str) -> list:
        """Trainable parameters for a training stage."""
        if stage == "vertex_edge":
            return self.encoder.parameters() + self.vertex_head.parameters() + self.graph.parameters()
        if stage in ("face_ce", "face_chamfer"):
            return self.face.parameters()
        if stage == "direct":
            if self.direct is None:
                raise ValueError("model was built without the direct face network")
            return self.direct.parameters()
        raise ValueError(f"unknown stage {stage!r}")
