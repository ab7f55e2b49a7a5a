"""Central finite differences at double precision.

The relative error of a gradient tensor is ||analytic - numeric|| divided by
max(||analytic|| + ||numeric||, 1e-8), i.e. a per-tensor norm ratio. The
floor keeps gradients that vanish analytically (a conv bias feeding batch norm)
from turning round-off into a huge ratio.
"""

import numpy as np

STEP = 1e-4


def rel_error(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-8))


def numeric_grad(f, x, step=STEP):
    """d f() / d x for a scalar function of the array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + step
        fp = f()
        x[i] = old - step
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * step)
    return g


def check_layer(layer, x, rng, train=True):
    """Max relative error over the input gradient and every parameter gradient."""
    y, _ = layer.forward(x, train)
    r = rng.normal(size=y.shape)

    def loss():
        return float(np.sum(layer.forward(x, train)[0] * r))

    _, cache = layer.forward(x, train)
    dx, grads = layer.backward(cache, r)
    errors = {"input": rel_error(dx, numeric_grad(loss, x))}
    for k, p in layer.params.items():
        errors[k] = rel_error(grads[k], numeric_grad(loss, p))
    return errors


def check_network(net, x, rng):
    r = rng.normal(size=x.shape[0])

    def loss():
        y, _ = net.forward_train(x)
        return float(np.dot(y, r))

    _, cache = net.forward_train(x)
    grads = net.backward(cache, r)
    return {k: rel_error(grads[k], numeric_grad(loss, p)) for k, p in net.parameters().items()}
