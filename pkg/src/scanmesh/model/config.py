"""Model hyperparameters, stored as a flat JSON object."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs. Every key is documented in the README.

    ``face_use_f2`` toggles the scan feature appended to each dual node;
    ``direct_faces`` adds the ablation network that classifies vertex
    triples directly (needs ``n_vertices <= direct_max_vertices``).
    """

    n_vertices: int = 100
    rounds: int = 3
    face_rounds: int = 3
    node_dim: int = 64
    edge_dim: int = 64
    hidden_dim: int = 64
    face_dim: int = 64
    latent_dim: int = 256
    vertex_hidden: int = 256
    enc_channels: tuple[int, int, int] = (16, 32, 64)
    dropout: float = 0.5
    face_use_f2: bool = True
    radius_clip: float = 2.0
    direct_faces: bool = False
    direct_max_vertices: int = 40
    zero_init_vertices: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "enc_channels", tuple(int(c) for c in self.enc_channels))
        if self.n_vertices < 3:
            raise ValueError("n_vertices must be >= 3")
        if self.node_dim % 2:
            raise ValueError("node_dim must be even (position and scan halves)")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")
        if self.direct_faces and self.n_vertices > self.direct_max_vertices:
            raise ValueError(f"direct face network needs n_vertices <= {self.direct_max_vertices}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["enc_channels"] = list(self.enc_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "ModelConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def differing_keys(self, other: "ModelConfig") -> list[str]:
        a, b = self.to_dict(), other.to_dict()
        return sorted(k for k in a if a[k] != b[k])
