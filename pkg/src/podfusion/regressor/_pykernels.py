"""NumPy implementations of the regressor's data-movement kernels.

These mirror :mod:`._ckernels` operation for operation, including the
accumulation order in :func:`col2im`, so both backends give identical
results.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x, k, pad):
    """(N, C, H, W) -> (N*Ho*Wo, C*k*k) patches for a stride-1 convolution."""
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # N, C, Ho, Wo, k, k
    ho, wo = win.shape[2], win.shape[3]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * k * k)


def col2im(cols, x_shape, k, pad):
    n, c, h, w = x_shape
    ho, wo = h + 2 * pad - k + 1, w + 2 * pad - k + 1
    c6 = cols.reshape(n, ho, wo, c, k, k).transpose(0, 3, 4, 5, 1, 2)
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    for ki in range(k):
        for kj in range(k):
            dxp[:, :, ki:ki + ho, kj:kj + wo] += c6[:, :, ki, kj]
    return np.ascontiguousarray(dxp[:, :, pad:pad + h, pad:pad + w])


def maxpool_forward(x, size):
    """Non-overlapping max pooling; ties go to the first element in row-major order."""
    n, c, h, w = x.shape
    ho, wo = h // size, w // size
    blocks = x[:, :, :ho * size, :wo * size].reshape(n, c, ho, size, wo, size)
    blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, size * size)
    arg = np.argmax(blocks, axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg.astype(np.int64)


def maxpool_backward(dout, arg, x_shape, size):
    n, c, h, w = x_shape
    ho, wo = dout.shape[2], dout.shape[3]
    grad = np.zeros((n, c, ho, wo, size * size))
    np.put_along_axis(grad, arg[..., None], dout[..., None], axis=-1)
    grad = grad.reshape(n, c, ho, wo, size, size).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho * size, wo * size)
    dx = np.zeros(x_shape)
    dx[:, :, :ho * size, :wo * size] = grad
    return dx
