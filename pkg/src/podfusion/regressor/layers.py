"""Layers with explicit forward/backward passes, float64 throughout.

Every layer exposes ``forward(x, train) -> (y, cache)`` and
``backward(cache, dy) -> (dx, grads)`` where ``grads`` is keyed like
``params``.
"""

from __future__ import annotations

import numpy as np

from . import kernels


class Layer:
    name = ""
    params: dict[str, np.ndarray] = {}
    buffers: dict[str, np.ndarray] = {}

    def forward(self, x, train):
        raise NotImplementedError

    def backward(self, cache, dy):
        raise NotImplementedError


class Conv2D(Layer):
    """Stride-1 'same' convolution (zero padding ``kernel // 2``) via im2col."""

    def __init__(self, name, in_channels, out_channels, kernel=3):
        self.name = name
        self.kernel = kernel
        self.pad = kernel // 2
        self.params = {
            "weight": np.zeros((out_channels, in_channels, kernel, kernel)),
            "bias": np.zeros(out_channels),
        }
        self.buffers = {}

    def forward(self, x, train):
        n = x.shape[0]
        w = self.params["weight"]
        f = w.shape[0]
        cols = kernels.im2col(x, self.kernel, self.pad)
        ho = x.shape[2] + 2 * self.pad - self.kernel + 1
        wo = x.shape[3] + 2 * self.pad - self.kernel + 1
        out = cols @ w.reshape(f, -1).T + self.params["bias"]
        y = np.ascontiguousarray(out.reshape(n, ho, wo, f).transpose(0, 3, 1, 2))
        return y, ((x.shape, cols) if train else None)

    def backward(self, cache, dy):
        x_shape, cols = cache
        w = self.params["weight"]
        f = w.shape[0]
        d = dy.transpose(0, 2, 3, 1).reshape(-1, f)
        grads = {"weight": (d.T @ cols).reshape(w.shape), "bias": d.sum(axis=0)}
        dx = kernels.col2im(d @ w.reshape(f, -1), x_shape, self.kernel, self.pad)
        return dx, grads


class ReLU(Layer):
    def __init__(self, name):
        self.name = name
        self.params = {}
        self.buffers = {}

    def forward(self, x, train):
        mask = x > 0
        return x * mask, (mask if train else None)

    def backward(self, cache, dy):
        return dy * cache, {}


class MaxPool2D(Layer):
    def __init__(self, name, size=2):
        self.name = name
        self.size = size
        self.params = {}
        self.buffers = {}

    def forward(self, x, train):
        y, arg = kernels.maxpool_forward(x, self.size)
        return y, ((x.shape, arg) if train else None)

    def backward(self, cache, dy):
        x_shape, arg = cache
        return kernels.maxpool_backward(dy, arg, x_shape, self.size), {}


class BatchNorm2D(Layer):
    """Per-channel batch normalisation over (N, H, W).

    Train mode normalises with the batch's biased variance and updates the
    running statistics by exponential moving average (``momentum``) using
    the unbiased variance; infer mode uses the running statistics.
    """

    def __init__(self, name, channels, momentum=0.1, eps=1e-5):
        self.name = name
        self.momentum = momentum
        self.eps = eps
        self.params = {"gamma": np.ones(channels), "beta": np.zeros(channels)}
        self.buffers = {"running_mean": np.zeros(channels), "running_var": np.ones(channels)}

    def normalize(self, x):
        """Batch-normalised input before scale and shift (train-mode statistics)."""
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        return (x - mean[None, :, None, None]) / np.sqrt(var + self.eps)[None, :, None, None]

    def forward(self, x, train):
        g = self.params["gamma"][None, :, None, None]
        b = self.params["beta"][None, :, None, None]
        if not train:
            rm = self.buffers["running_mean"][None, :, None, None]
            rv = self.buffers["running_var"][None, :, None, None]
            return g * (x - rm) / np.sqrt(rv + self.eps) + b, None
        m = x.shape[0] * x.shape[2] * x.shape[3]
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
        unbiased = var * m / (m - 1) if m > 1 else var
        mom = self.momentum
        self.buffers["running_mean"][...] = (1 - mom) * self.buffers["running_mean"] + mom * mean
        self.buffers["running_var"][...] = (1 - mom) * self.buffers["running_var"] + mom * unbiased
        return g * xhat + b, (xhat, inv_std)

    def backward(self, cache, dy):
        xhat, inv_std = cache
        g = self.params["gamma"]
        grads = {"gamma": (dy * xhat).sum(axis=(0, 2, 3)), "beta": dy.sum(axis=(0, 2, 3))}
        dxhat = dy * g[None, :, None, None]
        mean_dxhat = dxhat.mean(axis=(0, 2, 3), keepdims=True)
        mean_dxhat_xhat = (dxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
        dx = (dxhat - mean_dxhat - xhat * mean_dxhat_xhat) * inv_std[None, :, None, None]
        return dx, grads


class Flatten(Layer):
    def __init__(self, name):
        self.name = name
        self.params = {}
        self.buffers = {}

    def forward(self, x, train):
        return x.reshape(x.shape[0], -1), (x.shape if train else None)

    def backward(self, cache, dy):
        return dy.reshape(cache), {}


class Dense(Layer):
    def __init__(self, name, in_features, out_features):
        self.name = name
        self.params = {"weight": np.zeros((out_features, in_features)), "bias": np.zeros(out_features)}
        self.buffers = {}

    def forward(self, x, train):
        return x @ self.params["weight"].T + self.params["bias"], (x if train else None)

    def backward(self, cache, dy):
        grads = {"weight": dy.T @ cache, "bias": dy.sum(axis=0)}
        return dy @ self.params["weight"], grads
