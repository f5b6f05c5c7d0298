"""Residual blocks, residual bodies and the four-body multi-scale network."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from msnilm.layers import ConfigError, Dense, DilatedConv1D, Dropout, LayerNorm, Module
from msnilm.tensor import ShapeError, Tensor, concat, relu, sigmoid

PAPER_TEXT_RECEPTIVE_FIELDS = (25, 57, 121, 259)
RECEPTIVE_FIELD_NOTE = (
    "note: the published text lists 259 points (1554 s) for the 5-block body; "
    "the closed form (2^(D+2)-2)(k-1)+1 and gradient probing both give 249 (1494 s)"
)

_DTYPES = {"float32": np.float32, "float64": np.float64}


def receptive_field(k: int, D: int) -> int:
    """Input span seen by one output of a body whose last dilation is ``2**D``.

    Each block holds two convolutions with the same dilation, so the span is
    ``(2**(D+2) - 2) * (k - 1) + 1``.
    """
    if k < 1 or k % 2 == 0:
        raise ConfigError(f"kernel size must be odd and positive, got {k}")
    if D < 0:
        raise ConfigError(f"D must be non-negative, got {D}")
    return (2 ** (D + 2) - 2) * (k - 1) + 1


@dataclass
class ModelConfig:
    """Hyper-parameters of :class:`MultiScaleModel`.

    ``body_channels`` lists the output channels of every block of every body.
    When omitted each block gets ``channels`` outputs. Dilations are derived
    (block ``i`` of a body uses ``2**i``) and are not stored.
    """

    kernel_size: int = 5
    blocks_per_body: List[int] = field(default_factory=lambda: [2, 3, 4, 5])
    channels: int = 96
    body_channels: Optional[List[List[int]]] = None
    head_hidden: int = 128
    dropout: float = 0.1
    in_channels: int = 1
    layer_norm_eps: float = 1e-5
    precision: str = "float32"

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be odd, got {self.kernel_size}")
        if not self.blocks_per_body or any(n < 1 for n in self.blocks_per_body):
            raise ConfigError(f"blocks_per_body must list positive counts, got {self.blocks_per_body}")
        if self.precision not in _DTYPES:
            raise ConfigError(f"precision must be one of {sorted(_DTYPES)}, got {self.precision!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.body_channels is not None:
            if len(self.body_channels) != len(self.blocks_per_body):
                raise ConfigError("body_channels needs one schedule per body")
            for n, sched in zip(self.blocks_per_body, self.body_channels):
                if len(sched) != n or any(c < 1 for c in sched):
                    raise ConfigError(f"channel schedule {sched} does not match {n} blocks")
        if self.channels < 1 or self.head_hidden < 1 or self.in_channels < 1:
            raise ConfigError("channel counts must be positive")

    @classmethod
    def geometric(cls, first: int, last: int, **kwargs) -> "ModelConfig":
        """Channels grow geometrically from ``first`` to ``last`` within every body."""
        blocks = kwargs.get("blocks_per_body", [2, 3, 4, 5])
        sched = []
        for n in blocks:
            if n == 1:
                sched.append([last])
            else:
                ratio = (last / first) ** (1.0 / (n - 1))
                sched.append([int(round(first * ratio**i)) for i in range(n)])
        return cls(body_channels=sched, **kwargs)

    @property
    def dtype(self):
        return _DTYPES[self.precision]

    def channel_schedule(self) -> List[List[int]]:
        if self.body_channels is not None:
            return [list(s) for s in self.body_channels]
        return [[self.channels] * n for n in self.blocks_per_body]

    def receptive_fields(self) -> List[int]:
        return [receptive_field(self.kernel_size, n - 1) for n in self.blocks_per_body]

    def to_dict(self) -> dict:
        return {"kind": "multiscale", **asdict(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = {k: v for k, v in d.items() if k != "kind"}
        return cls(**d)


@dataclass
class BaselineConfig:
    """Plain stack of ordinary convolutions followed by the same position-wise head."""

    channels: List[int] = field(default_factory=lambda: [32, 32, 64, 64])
    kernel_size: int = 5
    head_hidden: int = 64
    in_channels: int = 1
    precision: str = "float32"

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be odd, got {self.kernel_size}")
        if not self.channels or any(c < 1 for c in self.channels):
            raise ConfigError(f"channels must be positive, got {self.channels}")
        if self.precision not in _DTYPES:
            raise ConfigError(f"precision must be one of {sorted(_DTYPES)}, got {self.precision!r}")

    @property
    def dtype(self):
        return _DTYPES[self.precision]

    def to_dict(self) -> dict:
        return {"kind": "baseline_cnn", **asdict(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "BaselineConfig":
        return cls(**{k: v for k, v in d.items() if k != "kind"})


@dataclass
class ConvConfig:
    """A single dilated convolution; useful for toy checkpoints and tests."""

    in_channels: int = 1
    out_channels: int = 8
    kernel_size: int = 5
    dilation: int = 1
    precision: str = "float64"

    @property
    def dtype(self):
        return _DTYPES[self.precision]

    def to_dict(self) -> dict:
        return {"kind": "conv1d", **asdict(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ConvConfig":
        return cls(**{k: v for k, v in d.items() if k != "kind"})


def config_from_dict(d: dict):
    kind = d.get("kind", "multiscale")
    if kind == "multiscale":
        return ModelConfig.from_dict(d)
    if kind == "baseline_cnn":
        return BaselineConfig.from_dict(d)
    if kind == "conv1d":
        return ConvConfig.from_dict(d)
    raise ConfigError(f"unknown model kind {kind!r}")


class ResidualBlock(Module):
    """Two (conv, layer norm, dropout, ReLU) stages plus a shortcut.

    The shortcut is a kernel-size-1 convolution when the channel count
    changes and the identity otherwise. No activation follows the addition.
    """

    def __init__(self, in_channels, out_channels, kernel_size, dilation, dropout=0.1,
                 rng=None, dtype=np.float64, eps=1e-5):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.dilation = dilation
        self.conv1 = DilatedConv1D(in_channels, out_channels, kernel_size, dilation, rng, dtype)
        self.ln1 = LayerNorm(out_channels, eps, dtype)
        self.drop1 = Dropout(dropout)
        self.conv2 = DilatedConv1D(out_channels, out_channels, kernel_size, dilation, rng, dtype)
        self.ln2 = LayerNorm(out_channels, eps, dtype)
        self.drop2 = Dropout(dropout)
        self.shortcut = None
        if in_channels != out_channels:
            self.shortcut = DilatedConv1D(in_channels, out_channels, 1, 1, rng, dtype)
        assert self.conv1.dilation == self.conv2.dilation

    def __call__(self, x: Tensor, rng=None) -> Tensor:
        h = relu(self.drop1(self.ln1(self.conv1(x)), rng))
        h = relu(self.drop2(self.ln2(self.conv2(h)), rng))
        skip = x if self.shortcut is None else self.shortcut(x)
        return skip + h


class ResidualBody(Module):
    """Chain of residual blocks whose dilation doubles from block to block."""

    def __init__(self, in_channels, channels: Sequence[int], kernel_size, dropout=0.1,
                 rng=None, dtype=np.float64, eps=1e-5):
        self.kernel_size = kernel_size
        self.blocks = []
        c_in = in_channels
        for i, c_out in enumerate(channels):
            self.blocks.append(ResidualBlock(c_in, c_out, kernel_size, 2**i, dropout, rng, dtype, eps))
            c_in = c_out
        for i, b in enumerate(self.blocks):
            if b.dilation != 2**i:
                raise ConfigError(f"block {i} has dilation {b.dilation}, expected {2**i}")
        self.out_channels = c_in

    @property
    def receptive_field(self) -> int:
        return receptive_field(self.kernel_size, len(self.blocks) - 1)

    def __call__(self, x: Tensor, rng=None) -> Tensor:
        for block in self.blocks:
            x = block(x, rng)
        return x


class MultiScaleModel(Module):
    """Four residual bodies over the same input, concatenated, then a two-layer head.

    Args:
        config: Network hyper-parameters.
        rng: Initialisation generator; ``None`` zero-initialises all weights.
    """

    def __init__(self, config: Optional[ModelConfig] = None, rng: Optional[np.random.Generator] = None):
        self.config = config or ModelConfig()
        cfg = self.config
        dtype = cfg.dtype
        self.bodies = [
            ResidualBody(cfg.in_channels, sched, cfg.kernel_size, cfg.dropout, rng, dtype, cfg.layer_norm_eps)
            for sched in cfg.channel_schedule()
        ]
        width = sum(b.out_channels for b in self.bodies)
        self.head1 = Dense(width, cfg.head_hidden, rng, dtype)
        self.head2 = Dense(cfg.head_hidden, 1, rng, dtype)

    def __call__(self, x: Tensor, rng=None) -> Tensor:
        if x.ndim != 3 or x.shape[1] != self.config.in_channels:
            raise ShapeError(f"model expects (batch, {self.config.in_channels}, T), got {x.shape}")
        feats = concat([body(x, rng) for body in self.bodies], axis=1)
        return sigmoid(self.head2(relu(self.head1(feats))))

    def receptive_fields(self) -> List[int]:
        return [b.receptive_field for b in self.bodies]


class BaselineCNN(Module):
    """Ordinary (dilation 1) convolution stack with the position-wise sigmoid head."""

    def __init__(self, config: Optional[BaselineConfig] = None, rng=None):
        self.config = config or BaselineConfig()
        cfg = self.config
        self.convs = []
        c_in = cfg.in_channels
        for c in cfg.channels:
            self.convs.append(DilatedConv1D(c_in, c, cfg.kernel_size, 1, rng, cfg.dtype))
            c_in = c
        self.head1 = Dense(c_in, cfg.head_hidden, rng, cfg.dtype)
        self.head2 = Dense(cfg.head_hidden, 1, rng, cfg.dtype)

    def __call__(self, x: Tensor, rng=None) -> Tensor:
        for conv in self.convs:
            x = relu(conv(x))
        return sigmoid(self.head2(relu(self.head1(x))))


class SingleConv(Module):
    def __init__(self, config: ConvConfig, rng=None):
        self.config = config
        self.conv = DilatedConv1D(config.in_channels, config.out_channels, config.kernel_size,
                                  config.dilation, rng, config.dtype)

    def __call__(self, x: Tensor, rng=None) -> Tensor:
        return self.conv(x)


def build_model(config, seed: Optional[int] = 0):
    """Instantiate the network described by ``config`` with seeded initialisation."""
    rng = None if seed is None else np.random.default_rng(seed)
    if isinstance(config, dict):
        config = config_from_dict(config)
    if isinstance(config, ModelConfig):
        return MultiScaleModel(config, rng)
    if isinstance(config, BaselineConfig):
        return BaselineCNN(config, rng)
    if isinstance(config, ConvConfig):
        return SingleConv(config, rng)
    raise ConfigError(f"cannot build a model from {type(config).__name__}")


def count_parameters(model: Module) -> int:
    """Number of trainable scalars (weights, biases, gains and shifts)."""
    return model.count_parameters()


def closed_form_parameter_count(config) -> int:
    """Parameter count from per-layer formulas, without building the model."""

    def conv(cin, cout, k):
        return cout * cin * k + cout

    if isinstance(config, ConvConfig):
        return conv(config.in_channels, config.out_channels, config.kernel_size)
    if isinstance(config, BaselineConfig):
        total, c_in = 0, config.in_channels
        for c in config.channels:
            total += conv(c_in, c, config.kernel_size)
            c_in = c
        return total + c_in * config.head_hidden + config.head_hidden + config.head_hidden + 1

    k = config.kernel_size
    total, width = 0, 0
    for sched in config.channel_schedule():
        c_in = config.in_channels
        for c_out in sched:
            total += conv(c_in, c_out, k) + conv(c_out, c_out, k) + 4 * c_out
            if c_in != c_out:
                total += conv(c_in, c_out, 1)
            c_in = c_out
        width += c_in
    h = config.head_hidden
    return total + width * h + h + h + 1


def probe_support(forward, in_channels: int, T: int, t0: Optional[int] = None,
                  seed: int = 0, dtype=np.float64) -> tuple:
    """Measure which input positions influence output position ``t0``.

    Back-propagates a randomly channel-weighted read-out of output ``t0`` to
    the input and returns ``(first, last, width)`` of the nonzero gradient
    support. ``forward`` maps a (1, in_channels, T) tensor to (1, C, T).
    """
    rng = np.random.default_rng(seed)
    t0 = T // 2 if t0 is None else t0
    x = Tensor(rng.standard_normal((1, in_channels, T)).astype(dtype), requires_grad=True)
    out = forward(x)
    readout = np.zeros(out.shape, dtype=dtype)
    readout[0, :, t0] = rng.uniform(0.5, 1.5, size=out.shape[1])
    (out * Tensor(readout)).sum().backward()
    hits = np.flatnonzero(np.any(x.grad[0] != 0, axis=0))
    if hits.size == 0:
        return t0, t0 - 1, 0
    return int(hits[0]), int(hits[-1]), int(hits[-1] - hits[0] + 1)
