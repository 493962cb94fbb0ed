"""Parameter containers and the handful of layers the networks need."""
from __future__ import annotations

import math
from collections import OrderedDict
from typing import Iterator, Optional

import numpy as np

from ..ndiff import Tensor, get_default_dtype, ops


class Module:
    """Minimal parameter container; attributes that are Tensors with
    ``requires_grad`` are parameters, Modules (or lists of them) are children,
    and entries of ``self._buffers`` are persistent non-trainable arrays."""

    def __init__(self):
        self.training = True
        self._buffers: "OrderedDict[str, np.ndarray]" = OrderedDict()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def _children(self) -> Iterator[tuple]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
        for name, child in self._children():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple]:
        for name, value in self._buffers.items():
            yield prefix + name, value
        for name, child in self._children():
            yield from child.named_buffers(prefix + name + ".")

    def state(self) -> "OrderedDict[str, np.ndarray]":
        out = OrderedDict((n, p.data) for n, p in self.named_parameters())
        out.update(self.named_buffers())
        return out

    def load_state(self, state: dict) -> None:
        params = dict(self.named_parameters())
        bufs = dict(self.named_buffers())
        for name, arr in state.items():
            if name in params:
                target = params[name]
                if target.shape != tuple(arr.shape):
                    raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {target.shape}")
                target.data = np.asarray(arr, dtype=target.dtype).copy()
            elif name in bufs:
                bufs[name][...] = arr
            else:
                raise KeyError(f"unexpected entry {name}")
        missing = set(params) | set(bufs)
        missing -= set(state)
        if missing:
            raise KeyError(f"missing entries: {sorted(missing)}")

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, child in self._children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def _param(arr: np.ndarray) -> Tensor:
    return Tensor(np.asarray(arr, dtype=get_default_dtype()), requires_grad=True)


def _uniform(rng, bound, shape):
    return rng.uniform(-bound, bound, size=shape)


class Conv2d(Module):
    def __init__(self, cin, cout, kernel, stride=1, padding=0, bias=True, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = cin * kernel * kernel
        bound = 1.0 / math.sqrt(fan_in)
        self.weight = _param(_uniform(rng, math.sqrt(3.0) * bound * math.sqrt(2.0), (cout, cin, kernel, kernel)))
        self.bias = _param(_uniform(rng, bound, (cout,))) if bias else None
        self.stride, self.padding = stride, padding

    def forward(self, x):
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose2d(Module):
    def __init__(self, cin, cout, kernel, stride, padding=0, bias=True, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        bound = 1.0 / math.sqrt(cin)
        self.weight = _param(_uniform(rng, math.sqrt(3.0) * bound, (cin, cout, kernel, kernel)))
        self.bias = _param(_uniform(rng, bound, (cout,))) if bias else None
        self.stride, self.padding = stride, padding

    def forward(self, x):
        return ops.conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding)


class Linear(Module):
    """Acts on the last axis; weight stored (in, out)."""

    def __init__(self, din, dout, bias=True, rng=None, std: Optional[float] = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        std = std if std is not None else 1.0 / math.sqrt(din)
        self.weight = _param(rng.normal(0.0, std, size=(din, dout)))
        self.bias = _param(np.zeros(dout)) if bias else None

    def forward(self, x):
        lead = x.shape[:-1]
        y = x.reshape(-1, x.shape[-1]) @ self.weight
        if self.bias is not None:
            y = y + self.bias.reshape(1, -1)
        return y.reshape(lead + (self.weight.shape[1],))


class LayerNorm(Module):
    def __init__(self, d, eps=1e-6):
        super().__init__()
        self.gamma = _param(np.ones(d))
        self.beta = _param(np.zeros(d))
        self.eps = eps

    def forward(self, x):
        return ops.layer_norm(x, self.gamma, self.beta, self.eps)


class BatchNorm2d(Module):
    def __init__(self, c, momentum=0.1, eps=1e-5):
        super().__init__()
        self.gamma = _param(np.ones(c))
        self.beta = _param(np.zeros(c))
        self._buffers["running_mean"] = np.zeros(c)
        self._buffers["running_var"] = np.ones(c)
        self.momentum, self.eps = momentum, eps

    def forward(self, x):
        return ops.batch_norm(
            x,
            self.gamma,
            self.beta,
            self._buffers["running_mean"],
            self._buffers["running_var"],
            self.training,
            self.momentum,
            self.eps,
        )
