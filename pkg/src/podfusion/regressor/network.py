"""The count-regression network and multi-view fusion.

Topology, for each of the three convolution blocks::

    conv(k x k, 'same') -> ReLU -> [max-pool 2x2] -> [batch norm]

with pooling and batch norm on blocks 1 and 2 only, then flatten and three
fully connected layers (ReLU after the first two, linear output).  The
output is the pod count divided by ``target_scale`` (the training-set mean).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..errors import InvalidConfig, NonFiniteActivation, ShapeMismatch, StaleCache, WrongViewCount
from ..featurize import FeatureGrid
from ..rng import Stream
from .layers import BatchNorm2D, Conv2D, Dense, Flatten, Layer, MaxPool2D, ReLU


@dataclass(frozen=True)
class ConvBlock:
    out_channels: int
    kernel: int = 3
    has_pool: bool = True
    has_batchnorm: bool = True


def default_blocks(channels=(16, 32, 64), kernel=3) -> tuple[ConvBlock, ...]:
    c1, c2, c3 = channels
    return (ConvBlock(c1, kernel), ConvBlock(c2, kernel), ConvBlock(c3, kernel, False, False))


@dataclass(frozen=True)
class NetworkConfig:
    views: int = 2
    input_grid: tuple[int, int, int] = (3, 16, 16)
    conv_blocks: tuple[ConvBlock, ...] = field(default_factory=default_blocks)
    fc_sizes: tuple[int, ...] = (64, 16, 1)
    seed: int = 0
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0
    epochs: int = 100
    batch_size: int = 16

    def __post_init__(self):
        blocks = tuple(b if isinstance(b, ConvBlock) else ConvBlock(**b) for b in self.conv_blocks)
        object.__setattr__(self, "conv_blocks", blocks)
        object.__setattr__(self, "input_grid", tuple(int(v) for v in self.input_grid))
        object.__setattr__(self, "fc_sizes", tuple(int(v) for v in self.fc_sizes))
        if len(blocks) != 3:
            raise InvalidConfig("the regression module has exactly 3 convolution blocks")
        if not all(b.has_pool and b.has_batchnorm for b in blocks[:2]):
            raise InvalidConfig("blocks 1 and 2 must have max-pooling and batch normalisation")
        if blocks[2].has_pool or blocks[2].has_batchnorm:
            raise InvalidConfig("block 3 has neither max-pooling nor batch normalisation")
        if any(b.kernel % 2 == 0 or b.kernel < 1 for b in blocks):
            raise InvalidConfig("kernel sizes must be odd")
        if len(self.fc_sizes) != 3 or self.fc_sizes[-1] != 1:
            raise InvalidConfig("exactly 3 fully connected layers, the last of width 1")
        c, h, w = self.input_grid
        if self.views < 1 or min(c, h, w) < 1:
            raise InvalidConfig("views and grid extents must be positive")
        if h < 4 or w < 4:
            raise InvalidConfig("grid must be at least 4x4 to survive two 2x2 poolings")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise InvalidConfig("learning_rate > 0, batch_size >= 1 and epochs >= 0 required")

    @property
    def input_shape(self) -> tuple[int, int, int]:
        c, h, w = self.input_grid
        return (self.views * c, h, w)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        d = dict(d)
        if "conv_blocks" in d:
            d["conv_blocks"] = tuple(ConvBlock(**b) if isinstance(b, dict) else b for b in d["conv_blocks"])
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class Cache:
    layer_caches: list
    version: int
    batch: int


def fuse_views(grids: Sequence[FeatureGrid], views: int | None = None) -> np.ndarray:
    """Concatenate per-view grids on the channel axis, preserving view order."""
    if views is not None and len(grids) != views:
        raise WrongViewCount(f"expected {views} views, got {len(grids)}")
    if not grids:
        raise WrongViewCount("no views to fuse")
    shape = grids[0].shape
    for i, g in enumerate(grids):
        if g.shape != shape:
            raise ShapeMismatch(f"view {i} has shape {g.shape}, view 0 has {shape}")
    return np.concatenate([g.data.astype(np.float64) for g in grids], axis=0)


class Network:
    def __init__(self, config: NetworkConfig):
        self.config = config
        self.target_scale = 1.0
        self._version = 0
        self.layers: list[Layer] = []
        in_c, h, w = config.input_shape
        for i, block in enumerate(config.conv_blocks, start=1):
            self.layers.append(Conv2D(f"conv{i}", in_c, block.out_channels, block.kernel))
            self.layers.append(ReLU(f"relu{i}"))
            if block.has_pool:
                self.layers.append(MaxPool2D(f"pool{i}", 2))
                h, w = h // 2, w // 2
            if block.has_batchnorm:
                self.layers.append(BatchNorm2D(f"bn{i}", block.out_channels))
            in_c = block.out_channels
        self.layers.append(Flatten("flatten"))
        width = in_c * h * w
        for i, size in enumerate(config.fc_sizes, start=1):
            self.layers.append(Dense(f"fc{i}", width, size))
            if i < len(config.fc_sizes):
                self.layers.append(ReLU(f"fc_relu{i}"))
            width = size
        self._init_weights()

    def _init_weights(self):
        for layer in self.layers:
            if isinstance(layer, (Conv2D, Dense)):
                wgt = layer.params["weight"]
                if wgt.ndim == 4:
                    rf = wgt.shape[2] * wgt.shape[3]
                    fan_in, fan_out = wgt.shape[1] * rf, wgt.shape[0] * rf
                else:
                    fan_out, fan_in = wgt.shape
                limit = math.sqrt(6.0 / (fan_in + fan_out))
                u = Stream(self.config.seed, "init", layer.name).uniform(wgt.size)
                wgt[...] = ((2.0 * u - 1.0) * limit).reshape(wgt.shape)
                layer.params["bias"][...] = 0.0

    # parameters ------------------------------------------------------------

    def parameters(self) -> dict[str, np.ndarray]:
        return {f"{l.name}.{k}": v for l in self.layers for k, v in l.params.items()}

    def buffers(self) -> dict[str, np.ndarray]:
        return {f"{l.name}.{k}": v for l in self.layers for k, v in l.buffers.items()}

    def state(self) -> dict[str, np.ndarray]:
        return {**self.parameters(), **self.buffers()}

    def mark_updated(self) -> None:
        """Invalidate outstanding caches after parameters change."""
        self._version += 1

    # passes ----------------------------------------------------------------

    def _as_batch(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
        if x.ndim != 4 or x.shape[1:] != self.config.input_shape:
            raise ShapeMismatch(f"input shape {x.shape} does not match (N, {self.config.input_shape})")
        return x

    def _run(self, x, train):
        caches = []
        for layer in self.layers:
            x, c = layer.forward(x, train)
            caches.append(c)
        if not np.all(np.isfinite(x)):
            raise NonFiniteActivation("network output is not finite")
        return x[:, 0], caches

    def forward(self, x) -> np.ndarray | float:
        """Inference-mode output in normalised units (float for a single sample)."""
        single = np.ndim(x) == 3
        y, _ = self._run(self._as_batch(x), train=False)
        return float(y[0]) if single else y

    def forward_train(self, x) -> tuple[np.ndarray, Cache]:
        xb = self._as_batch(x)
        y, caches = self._run(xb, train=True)
        return y, Cache(caches, self._version, xb.shape[0])

    def backward(self, cache: Cache, grad_out) -> dict[str, np.ndarray]:
        """Parameter gradients given d(loss)/d(output) per sample."""
        if cache.version != self._version:
            raise StaleCache("parameters changed since the forward pass that produced this cache")
        dy = np.asarray(grad_out, dtype=np.float64).reshape(cache.batch, 1)
        grads = {}
        for layer, c in zip(reversed(self.layers), reversed(cache.layer_caches)):
            dy, g = layer.backward(c, dy)
            for k, v in g.items():
                grads[f"{layer.name}.{k}"] = v
        return {k: grads[k] for k in self.parameters()}

    def predict(self, inputs: Sequence[np.ndarray], chunk: int = 64) -> list[float]:
        """Predicted pod counts (unrounded) for fused inputs."""
        out = []
        for i in range(0, len(inputs), chunk):
            batch = np.stack([np.asarray(x, dtype=np.float64) for x in inputs[i:i + chunk]])
            out.extend((self.forward(batch) * self.target_scale).tolist())
        return out


def predict(net: Network, inputs: Sequence[np.ndarray]) -> list[float]:
    return net.predict(inputs)
