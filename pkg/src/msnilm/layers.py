"""Layers of the disaggregation network.

All layers take and return tensors laid out as (batch, channels, time) and
preserve the time extent.
"""

from __future__ import annotations

from typing import Iterator, Optional, Tuple

import numpy as np

from msnilm import kernels
from msnilm.tensor import ShapeError, Tensor


class ConfigError(ValueError):
    """A layer or model was configured with invalid hyper-parameters."""


class Module:
    """Minimal container that knows how to enumerate its parameters."""

    training = False

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for attr, value in vars(self).items():
            name = f"{prefix}{attr}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

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

    def count_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def _he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


# -- functional forms --------------------------------------------------
def dilated_conv1d(x: Tensor, weight: Tensor, bias: Tensor, dilation: int) -> Tensor:
    """Non-causal dilated convolution with symmetric zero padding of (k-1)*d/2."""
    if x.ndim != 3:
        raise ShapeError(f"conv input must be (batch, channels, time), got {x.shape}")
    O, C, k = weight.shape
    B, Cx, T = x.shape
    if Cx != C:
        raise ShapeError(f"conv expects {C} input channels, got input of shape {x.shape}")
    cols = kernels.im2col(x.data, k, dilation)
    cols2 = cols.reshape(C * k, B * T)
    w2 = weight.data.reshape(O, C * k)
    out = (w2 @ cols2).reshape(O, B, T).transpose(1, 0, 2) + bias.data[None, :, None]
    out = np.ascontiguousarray(out)

    def backward(g):
        g2 = g.transpose(1, 0, 2).reshape(O, B * T)
        dw = (g2 @ cols2.T).reshape(O, C, k)
        db = g.sum(axis=(0, 2))
        dx = None
        if x.requires_grad:
            dx = kernels.col2im((w2.T @ g2).reshape(C, k, B, T), dilation)
        return dx, dw, db

    return Tensor.from_op(out, (x, weight, bias), backward)


def positionwise_dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Apply ``W @ x[:, :, t] + b`` independently at every time step."""
    O, I = weight.shape
    if x.ndim != 3 or x.shape[1] != I:
        raise ShapeError(f"dense layer {weight.shape} cannot take input of shape {x.shape}")
    out = np.matmul(weight.data, x.data) + bias.data[None, :, None]

    def backward(g):
        dw = np.einsum("bot,bit->oi", g, x.data)
        db = g.sum(axis=(0, 2))
        dx = np.matmul(weight.data.T, g) if x.requires_grad else None
        return dx, dw, db

    return Tensor.from_op(out, (x, weight, bias), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise across channels separately for every (batch, time) position."""
    if x.ndim != 3 or x.shape[1] != gamma.shape[0]:
        raise ShapeError(f"layer norm over {gamma.shape[0]} channels got input {x.shape}")
    C = x.shape[1]
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=1, keepdims=True) + eps)
    xhat = xc * inv
    g_ = gamma.data[None, :, None]
    out = xhat * g_ + beta.data[None, :, None]

    def backward(g):
        dgamma = (g * xhat).sum(axis=(0, 2))
        dbeta = g.sum(axis=(0, 2))
        dx = None
        if x.requires_grad:
            dxhat = g * g_
            dx = (inv / C) * (
                C * dxhat
                - dxhat.sum(axis=1, keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=1, keepdims=True)
            )
        return dx, dgamma, dbeta

    return Tensor.from_op(out, (x, gamma, beta), backward)


def dropout(x: Tensor, p: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """Inverted dropout; the identity when not training or when ``p == 0``."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    scale = x.dtype.type(1.0 / (1.0 - p))
    mask = (rng.random(x.shape) >= p).astype(x.dtype) * scale
    return Tensor.from_op(x.data * mask, (x,), lambda g: (g * mask,))


# -- layer objects -----------------------------------------------------
class DilatedConv1D(Module):
    """Dilated 1-D convolution that keeps the sequence length.

    Args:
        in_channels: Input channel count.
        out_channels: Output channel count.
        kernel_size: Odd tap count ``k``.
        dilation: Spacing ``d`` between taps.
        rng: Generator for He-uniform initialisation; ``None`` zero-initialises.
        dtype: Parameter dtype.
    """

    def __init__(self, in_channels, out_channels, kernel_size, dilation=1, rng=None, dtype=np.float64):
        if kernel_size < 1 or kernel_size % 2 == 0:
            raise ConfigError(f"kernel size must be odd and positive, got {kernel_size}")
        if dilation < 1:
            raise ConfigError(f"dilation must be positive, got {dilation}")
        if in_channels < 1 or out_channels < 1:
            raise ConfigError("channel counts must be positive")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.dilation = dilation
        shape = (out_channels, in_channels, kernel_size)
        if rng is None:
            w = np.zeros(shape, dtype=dtype)
        else:
            w = _he_uniform(rng, shape, in_channels * kernel_size, dtype)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True)

    @property
    def padding(self) -> int:
        return (self.kernel_size - 1) * self.dilation // 2

    def __call__(self, x: Tensor) -> Tensor:
        return dilated_conv1d(x, self.weight, self.bias, self.dilation)


class Dense(Module):
    """Position-wise affine layer."""

    def __init__(self, in_features, out_features, rng=None, dtype=np.float64):
        shape = (out_features, in_features)
        w = np.zeros(shape, dtype=dtype) if rng is None else _he_uniform(rng, shape, in_features, dtype)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(out_features, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return positionwise_dense(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, channels, eps=1e-5, dtype=np.float64):
        self.eps = eps
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, self.eps)


class Dropout(Module):
    def __init__(self, p=0.1):
        if not 0.0 <= p < 1.0:
            raise ConfigError(f"dropout rate must lie in [0, 1), got {p}")
        self.p = p

    def __call__(self, x: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        return dropout(x, self.p, rng, self.training)
