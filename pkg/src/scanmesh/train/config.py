"""Training hyperparameters."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..model.config import ModelConfig

STAGES = ("vertex_edge", "face_ce", "face_chamfer")
ABLATION_STAGES = ("direct",)
DEFAULT_EPOCHS = {"vertex_edge": 5, "face_ce": 1, "face_chamfer": 1, "direct": 1}
# a stage may only start from a checkpoint that already finished these
REQUIRES = {"vertex_edge": (), "face_ce": ("vertex_edge",), "face_chamfer": ("vertex_edge", "face_ce"),
            "direct": ("vertex_edge",)}


@dataclass(frozen=True)
class TrainConfig:
    """One training stage. ``steps`` (if set) replaces ``epochs`` as the stage length.

    With ``lr_final`` set, the learning rate follows a cosine from ``lr`` down
    to ``lr_final`` over the stage; otherwise it stays constant.
    ``edge_pos_weight`` is "auto" (capped #neg/#pos per batch) or a number;
    ``direct_target`` picks the triple labels of the ablation stage ("gt" or
    "surf", the latter marking triples within ``direct_threshold_voxels`` of
    the target surface).
    """

    stage: str = "vertex_edge"
    lr: float = 5e-4
    lr_final: float | None = None
    batch_size: int = 8
    epochs: int | None = None
    steps: int | None = None
    seed: int = 0
    dataset: str | None = None
    lambda_edge: float = 1.0
    edge_pos_weight: str | float = "auto"
    matcher: str = "hungarian"
    chamfer_samples: int = 2048
    unfreeze_vertex_edge: bool = False
    direct_target: str = "gt"
    direct_threshold_voxels: float = 1.5
    val_every: int = 50
    log_every: int = 10
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.stage not in STAGES + ABLATION_STAGES:
            raise ValueError(f"unknown stage {self.stage!r}; expected one of {STAGES + ABLATION_STAGES}")
        if self.lr <= 0 or self.batch_size < 1:
            raise ValueError("lr must be positive and batch_size at least 1")
        if self.lr_final is not None and not 0 < self.lr_final <= self.lr:
            raise ValueError("lr_final must lie in (0, lr]")
        if self.matcher not in ("hungarian", "greedy"):
            raise ValueError(f"unknown matcher {self.matcher!r}")
        if self.direct_target not in ("gt", "surf"):
            raise ValueError(f"unknown direct_target {self.direct_target!r}")
        if isinstance(self.model, dict):
            object.__setattr__(self, "model", ModelConfig.from_dict(self.model))

    def lr_at(self, step: int, n_steps: int) -> float:
        """Learning rate for 1-based ``step`` of ``n_steps``."""
        if self.lr_final is None or n_steps <= 1:
            return self.lr
        frac = (step - 1) / (n_steps - 1)
        return self.lr_final + 0.5 * (self.lr - self.lr_final) * (1 + math.cos(math.pi * frac))

    @property
    def n_epochs(self) -> int:
        return DEFAULT_EPOCHS[self.stage] if self.epochs is None else self.epochs

    def with_stage(self, stage: str, **changes) -> "TrainConfig":
        return replace(self, stage=stage, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))
