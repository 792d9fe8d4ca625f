"""3D convolutional encoder of the 5-channel scan volume."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Conv3d, Module, Tensor, ops

F2_RESOLUTION = 8
VOLUME_RESOLUTION = 32
IN_CHANNELS = 5


@dataclass
class EncoderFeatures:
    """``f2``: (B, C, 8, 8, 8) intermediate grid; ``f``: (B, latent) code."""

    f2: Tensor
    f: Tensor

    @property
    def batch(self) -> int:
        return self.f.shape[0]


class Encoder(Module):
    """Four strided convolutions with kernels 4, 3, 3, 3.

    The first three are each followed by a 1x1x1 convolution; every
    convolution is followed by a ReLU. Spatial extent goes
    32 -> 16 -> 8 -> 4 -> 1; ``f2`` is taken after the second block.
    """

    def __init__(self, rng: np.random.Generator, channels=(16, 32, 64), latent: int = 256,
                 dtype=np.float32):
        c1, c2, c3 = channels
        self.conv1 = Conv3d(IN_CHANNELS, c1, 4, 2, 1, rng, dtype)
        self.mix1 = Conv3d(c1, c1, 1, 1, 0, rng, dtype)
        self.conv2 = Conv3d(c1, c2, 3, 2, 1, rng, dtype)
        self.mix2 = Conv3d(c2, c2, 1, 1, 0, rng, dtype)
        self.conv3 = Conv3d(c2, c3, 3, 2, 1, rng, dtype)
        self.mix3 = Conv3d(c3, c3, 1, 1, 0, rng, dtype)
        self.conv4 = Conv3d(c3, latent, 3, 2, 0, rng, dtype)
        self.f2_channels = c2
        self.latent = latent

    def forward(self, volume) -> EncoderFeatures:
        x = volume if isinstance(volume, Tensor) else Tensor(np.asarray(volume))
        if x.ndim != 5 or x.shape[1] != IN_CHANNELS:
            raise ValueError(f"encoder expects (B, {IN_CHANNELS}, R, R, R) volumes, got {x.shape}")
        x = x if x.dtype == self.conv1.weight.dtype else Tensor(x.data.astype(self.conv1.weight.dtype))
        h = ops.relu(self.mix1(ops.relu(self.conv1(x))))
        f2 = ops.relu(self.mix2(ops.relu(self.conv2(h))))
        h = ops.relu(self.mix3(ops.relu(self.conv3(f2))))
        f = ops.relu(self.conv4(h))
        return EncoderFeatures(f2, ops.reshape(f, (f.shape[0], -1)))


def f2_cells(positions: np.ndarray, scale: np.ndarray, offset: np.ndarray,
             resolution: int = F2_RESOLUTION) -> np.ndarray:
    """Nearest ``f2`` cell (B, N, 3) for mesh-space points (B, N, 3).

    Points map to the grid with each sample's transform; a cell spans
    ``32 / resolution`` voxels. Points outside clamp to the boundary cell.
    """
    p = np.asarray(positions, dtype=np.float64)
    g = p * np.asarray(scale, dtype=np.float64)[:, None, None] + np.asarray(offset, dtype=np.float64)[:, None, :]
    cell = np.floor(g / (VOLUME_RESOLUTION / resolution)).astype(np.int64)
    return np.clip(cell, 0, resolution - 1)


def lookup_f2(f2: Tensor, cells: np.ndarray) -> Tensor:
    """Gather ``f2`` feature vectors at integer cells (B, N, 3) -> (B*N, C)."""
    b = f2.shape[0]
    cells = np.asarray(cells, dtype=np.int64)
    if cells.ndim != 3 or cells.shape[0] != b:
        raise ValueError(f"cells must be (B, N, 3) with B={b}, got {cells.shape}")
    sample = np.repeat(np.arange(b), cells.shape[1])
    return lookup_f2_rows(f2, sample, cells.reshape(-1, 3))


def lookup_f2_rows(f2: Tensor, sample: np.ndarray, cells: np.ndarray) -> Tensor:
    """Gather ``f2`` features for ragged queries: sample ids (N,) and cells (N, 3)."""
    b, c, r = f2.shape[0], f2.shape[1], f2.shape[2]
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 3)
    flat = ops.reshape(ops.transpose(f2, (0, 2, 3, 4, 1)), (b * r ** 3, c))
    rows = np.asarray(sample, dtype=np.int64) * r ** 3 + cells[:, 0] * r * r + cells[:, 1] * r + cells[:, 2]
    return ops.gather_rows(flat, rows)
