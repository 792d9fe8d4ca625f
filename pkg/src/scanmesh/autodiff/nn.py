"""Parameter containers and the layers the networks are built from."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import ops
from .tensor import Tensor


class Parameter(Tensor):
    def __init__(self, data, name: str | None = None):
        super().__init__(data, requires_grad=True, name=name)


class Module:
    """Tree of parameters, buffers and sub-modules discovered by attribute."""

    training = True

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if key in getattr(self, "_buffers", ()):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_buffers(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_buffers(f"{name}.{i}.")

    def modules(self) -> Iterator["Module"]:
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: b.copy() for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        missing = (set(params) | set(buffers)) - set(state)
        unexpected = set(state) - set(params) - set(buffers)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in params.items():
            if state[name].shape != p.data.shape:
                raise ValueError(f"{name}: shape {state[name].shape} != {p.data.shape}")
            p.data = state[name].astype(p.data.dtype, copy=True)
        for name, b in buffers.items():
            b[...] = state[name]

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _uniform(rng: np.random.Generator, bound: float, shape, dtype) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, dtype=np.float32,
                 zero_init: bool = False):
        bound = 1.0 / np.sqrt(n_in)
        if zero_init:
            self.weight = Parameter(np.zeros((n_in, n_out), dtype=dtype))
            self.bias = Parameter(np.zeros(n_out, dtype=dtype))
        else:
            self.weight = Parameter(_uniform(rng, bound, (n_in, n_out), dtype))
            self.bias = Parameter(_uniform(rng, bound, (n_out,), dtype))

    def forward(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class Conv3d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int, pad: int,
                 rng: np.random.Generator, dtype=np.float32):
        fan_in = c_in * kernel ** 3
        bound = np.sqrt(6.0 / fan_in)  # He-uniform for the ReLU that follows
        self.weight = Parameter(_uniform(rng, bound, (c_out, c_in, kernel, kernel, kernel), dtype))
        self.bias = Parameter(np.zeros(c_out, dtype=dtype))
        self.stride = stride
        self.pad = pad

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv3d(x, self.weight, self.bias, self.stride, self.pad)


class BatchNorm(Module):
    """Row-wise batch norm; momentum 0.1, eps 1e-5."""

    _buffers = ("running_mean", "running_var")

    def __init__(self, n: int, dtype=np.float32, momentum: float = 0.1, eps: float = 1e-5):
        self.gamma = Parameter(np.ones(n, dtype=dtype))
        self.beta = Parameter(np.zeros(n, dtype=dtype))
        self.running_mean = np.zeros(n, dtype=np.float64)
        self.running_var = np.ones(n, dtype=np.float64)
        self.momentum = momentum
        self.eps = eps

    def forward(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        training = self.training
        if training and (x.shape[0] if mask is None else int(mask.sum())) < 2:
            training = False
        return ops.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                              training, self.momentum, self.eps, mask)


class Dropout(Module):
    def __init__(self, p: float, rng: np.random.Generator):
        self.p = p
        self.rng = rng

    def forward(self, x: Tensor) -> Tensor:
        return ops.dropout(x, self.p, self.training, self.rng)


class MLP(Module):
    """Two fully-connected layers: Linear, ELU, Dropout, Linear[, ELU, BatchNorm].

    With ``head=True`` the block is a prediction head: the second layer is
    the network's last and is left linear (no ELU, no batch norm).
    """

    def __init__(self, n_in: int, n_hidden: int, n_out: int, rng: np.random.Generator,
                 dropout: float = 0.5, head: bool = False, batchnorm: bool = True,
                 dtype=np.float32, zero_last: bool = False):
        self.fc1 = Linear(n_in, n_hidden, rng, dtype)
        self.drop = Dropout(dropout, rng)
        self.fc2 = Linear(n_hidden, n_out, rng, dtype, zero_init=zero_last)
        self.head = head
        self.bn = BatchNorm(n_out, dtype) if batchnorm and not head else None

    def forward(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        h = self.drop(ops.elu(self.fc1(x)))
        h = self.fc2(h)
        if self.head:
            return h
        h = ops.elu(h)
        if self.bn is not None:
            h = self.bn(h, mask)
        return h
