"""Checkpoint container.

A checkpoint is a numpy ``.npz`` archive. Every parameter or buffer is stored
under its dotted module path (``graph.embed_pos.fc1.weight``) as an array
with its own shape and dtype. The reserved entry ``__meta__`` holds a UTF-8
JSON document with at least ``{"format": "scanmesh-ckpt", "version": 1}``
plus whatever the caller adds (model config, completed stages, ...).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT = "scanmesh-ckpt"
VERSION = 1
META_KEY = "__meta__"


def save_checkpoint(path, state: dict[str, np.ndarray], meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"format": FORMAT, "version": VERSION, **(meta or {})}
    arrays = {k: np.asarray(v) for k, v in state.items()}
    if META_KEY in arrays:
        raise KeyError(f"{META_KEY} is reserved")
    arrays[META_KEY] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with np.load(Path(path), allow_pickle=False) as archive:
        if META_KEY not in archive.files:
            raise ValueError(f"{path}: not a checkpoint (no {META_KEY})")
        meta = json.loads(archive[META_KEY].tobytes().decode())
        if meta.get("format") != FORMAT:
            raise ValueError(f"{path}: unknown format {meta.get('format')!r}")
        if meta.get("version") != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        state = {k: archive[k] for k in archive.files if k != META_KEY}
    return state, meta
