"""Time the compiled kernels against the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Shapes follow the default network on a 16x16 grid with three views per
side fused (18 input channels) and a batch of 16.
"""

import argparse
import timeit

import numpy as np

from podfusion.regressor import Network, NetworkConfig, kernels


def cases(rng):
    x = rng.normal(size=(16, 18, 16, 16))
    h = rng.normal(size=(16, 32, 16, 16))
    cols = kernels.im2col(x, 3, 1)
    _, arg = kernels.maxpool_forward(h, 2)
    dy = rng.normal(size=(16, 32, 8, 8))
    net = Network(NetworkConfig(views=6))
    grad = rng.normal(size=16)

    def train_step():
        _, cache = net.forward_train(x)
        net.backward(cache, grad)

    return {
        "im2col 18ch 3x3": lambda: kernels.im2col(x, 3, 1),
        "col2im 18ch 3x3": lambda: kernels.col2im(cols, x.shape, 3, 1),
        "maxpool forward": lambda: kernels.maxpool_forward(h, 2),
        "maxpool backward": lambda: kernels.maxpool_backward(dy, arg, h.shape, 2),
        "forward+backward": train_step,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    names = kernels.available()
    if "cython" not in names:
        print("compiled kernels not built; timing the NumPy fallback only")
    times = {}
    for name in names:
        kernels.set_backend(name)
        for label, fn in cases(np.random.default_rng(0)).items():
            fn()
            best = min(timeit.repeat(fn, number=1, repeat=args.repeat))
            times.setdefault(label, {})[name] = best
    print(f"{'case':<20}" + "".join(f"{n:>12}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, row in times.items():
        line = f"{label:<20}" + "".join(f"{row[n] * 1e3:>10.3f}ms" for n in names)
        if len(names) > 1:
            line += f"{row['python'] / row['cython']:>11.2f}x"
        print(line)


if __name__ == "__main__":
    main()
