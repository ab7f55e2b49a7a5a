"""Backend selection for the hot kernels.

The compiled Cython module is used when it was built; otherwise, or when
``PODFUSION_KERNELS=python`` is set, the NumPy twins are used.  Callers go
through the module-level functions so the backend can be switched at run
time (tests and the benchmark exercise both).
"""

import os

import numpy as np

from . import _pykernels

_BACKENDS = {"python": _pykernels}
try:
    from . import _ckernels

    _BACKENDS["cython"] = _ckernels
except ImportError:  # extension not built
    _ckernels = None

_active = _pykernels


def available() -> list[str]:
    return sorted(_BACKENDS)


def backend() -> str:
    return "cython" if _active is _ckernels and _ckernels is not None else "python"


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"kernel backend {name!r} not available (have {available()})")
    _active = _BACKENDS[name]


def _initial() -> str:
    wanted = os.environ.get("PODFUSION_KERNELS", "").strip().lower()
    if wanted:
        return wanted
    return "cython" if "cython" in _BACKENDS else "python"


set_backend(_initial())


def _f64(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def im2col(x, k, pad):
    return _active.im2col(_f64(x), int(k), int(pad))


def col2im(cols, x_shape, k, pad):
    return _active.col2im(_f64(cols), tuple(int(s) for s in x_shape), int(k), int(pad))


def maxpool_forward(x, size):
    return _active.maxpool_forward(_f64(x), int(size))


def maxpool_backward(dout, arg, x_shape, size):
    return _active.maxpool_backward(_f64(dout), np.ascontiguousarray(arg, dtype=np.int64),
                                    tuple(int(s) for s in x_shape), int(size))


def conv2d_direct(x, weight, bias, pad):
    """Stride-1 convolution by explicit shifted-slice accumulation.

    Reference path for the im2col + matmul route used in training.
    """
    n, c, h, w = x.shape
    f, _, k, _ = weight.shape
    xp = np.pad(_f64(x), ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho, wo = h + 2 * pad - k + 1, w + 2 * pad - k + 1
    out = np.zeros((n, f, ho, wo))
    for fi in range(f):
        for ci in range(c):
            for ki in range(k):
                for kj in range(k):
                    out[:, fi] += weight[fi, ci, ki, kj] * xp[:, ci, ki:ki + ho, kj:kj + wo]
        out[:, fi] += bias[fi]
    return out
