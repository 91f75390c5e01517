"""Named parameter collections and initialisation helpers."""

from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np

from .tensor import Tensor


class ModelParams(OrderedDict):
    """Insertion-ordered mapping name -> trainable Tensor."""

    def __setitem__(self, name: str, value: Tensor) -> None:
        if name in self:
            raise KeyError(f"duplicate parameter name {name!r}")
        super().__setitem__(name, value)

    def replace(self, name: str, value: Tensor) -> None:
        OrderedDict.__setitem__(self, name, value)

    def tensors(self) -> Iterator[Tensor]:
        return iter(self.values())

    def zero_grads(self) -> None:
        for t in self.values():
            t.grad = None

    def set_requires_grad(self, flag: bool) -> None:
        for t in self.values():
            t.requires_grad = flag

    def count(self) -> int:
        return int(sum(t.size for t in self.values()))

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        missing = [k for k in self if k not in arrays]
        if missing:
            raise KeyError(f"missing parameters: {missing[:5]}")
        for k, t in self.items():
            arr = np.asarray(arrays[k])
            if arr.shape != t.shape:
                raise ValueError(f"parameter {k!r}: expected shape {t.shape}, got {arr.shape}")
            t.data = arr.astype(t.dtype, copy=True)
            t.grad = None


def scaled_channels(channels: int, scale: float, multiple: int = 1) -> int:
    """Channel count after the desk-scale shrink, rounded to ``multiple`` and at least ``multiple``."""
    c = int(round(channels * scale / multiple)) * multiple
    return max(multiple, c)


class Initializer:
    """Uniform +-sqrt(1/fan_in) weights and zero biases drawn from a seeded stream."""

    def __init__(self, seed: int, dtype=np.float32):
        self.rng = np.random.default_rng(seed)
        self.dtype = np.dtype(dtype)

    def uniform(self, shape, fan_in: int) -> Tensor:
        bound = np.sqrt(1.0 / fan_in)
        return Tensor(self.rng.uniform(-bound, bound, size=shape).astype(self.dtype), requires_grad=True)

    def zeros(self, shape) -> Tensor:
        return Tensor(np.zeros(shape, dtype=self.dtype), requires_grad=True)

    def conv1d(self, params: ModelParams, name: str, cin: int, cout: int, kernel: int, groups: int = 1) -> None:
        params[f"{name}.w"] = self.uniform((cout, cin // groups, kernel), (cin // groups) * kernel)
        params[f"{name}.b"] = self.zeros((cout,))

    def conv_transpose1d(self, params: ModelParams, name: str, cin: int, cout: int, kernel: int, stride: int) -> None:
        params[f"{name}.w"] = self.uniform((cin, cout, kernel), max(1, cin * kernel // stride))
        params[f"{name}.b"] = self.zeros((cout,))

    def conv2d(self, params: ModelParams, name: str, cin: int, cout: int, kernel: int) -> None:
        params[f"{name}.w"] = self.uniform((cout, cin, kernel, kernel), cin * kernel * kernel)
        params[f"{name}.b"] = self.zeros((cout,))
