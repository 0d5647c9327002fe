#!/usr/bin/env python3
"""Compare the compiled kernel backend against the numpy fallback.

Times the hot primitives (matmul, fused elementwise forward/backward,
softmax, reductions) across the shapes this toolkit actually runs: small
per-utterance vectors up to MINE-benchmark batches.

Usage: python benchmarks/bench_kernels.py [--repeats 7]
"""

import argparse
import time

import numpy as np

from mmfuse.kernels import numpy_backend

try:
    from mmfuse.kernels import _ckernels
except ImportError:
    _ckernels = None

SHAPES_MATMUL = [
    ((8, 16), (16, 8)),       # per-utterance projections, tiny dims
    ((128, 256), (256, 2)),   # classifier-scale
    ((499, 768), (768, 128)), # frame-matrix scale
    ((512, 128), (128, 128)), # MINE hidden layer
]
SHAPES_FLAT = [64, 2_048, 65_536]
SHAPES_ROWS = [(8, 64), (512, 128)]


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def _loops(fn, n, repeats):
    def run():
        for _ in range(n):
            fn()

    return _time(run, repeats) / n


def bench(repeats):
    if _ckernels is None:
        print("compiled kernels not built; nothing to compare")
        return
    rng = np.random.default_rng(0)
    rows = []

    for a_shape, b_shape in SHAPES_MATMUL:
        a = rng.normal(size=a_shape)
        b = rng.normal(size=b_shape)
        n = max(1, 200_000 // (a.size + b.size))
        t_np = _loops(lambda: numpy_backend.matmul(a, b), n, repeats)
        t_c = _loops(lambda: _ckernels.matmul(a, b), n, repeats)
        rows.append((f"matmul {a_shape}x{b_shape}", t_np, t_c))

    for size in SHAPES_FLAT:
        x = rng.uniform(0.1, 2.0, size=size)
        g = rng.normal(size=size)
        n = max(1, 500_000 // size)
        for name, op in (("tanh", numpy_backend.TANH),
                         ("sigmoid", numpy_backend.SIGMOID)):
            t_np = _loops(lambda: numpy_backend.unary(op, x), n, repeats)
            t_c = _loops(lambda: _ckernels.unary(op, x), n, repeats)
            rows.append((f"{name} fwd [{size}]", t_np, t_c))
            y = numpy_backend.unary(op, x)
            t_np = _loops(lambda: numpy_backend.unary_grad(op, g, x, y), n, repeats)
            t_c = _loops(lambda: _ckernels.unary_grad(op, g, x, y), n, repeats)
            rows.append((f"{name} bwd [{size}]", t_np, t_c))

    for shape in SHAPES_ROWS:
        x = rng.normal(size=shape)
        g = rng.normal(size=shape)
        n = max(1, 200_000 // x.size)
        t_np = _loops(lambda: numpy_backend.softmax(x), n, repeats)
        t_c = _loops(lambda: _ckernels.softmax(x), n, repeats)
        rows.append((f"softmax {shape}", t_np, t_c))
        y = numpy_backend.softmax(x)
        t_np = _loops(lambda: numpy_backend.softmax_grad(g, y), n, repeats)
        t_c = _loops(lambda: _ckernels.softmax_grad(g, y), n, repeats)
        rows.append((f"softmax bwd {shape}", t_np, t_c))

    print(f"{'kernel':32s} {'numpy':>12s} {'compiled':>12s} {'speedup':>9s}")
    for name, t_np, t_c in rows:
        print(f"{name:32s} {t_np * 1e6:10.2f}us {t_c * 1e6:10.2f}us "
              f"{t_np / t_c:8.2f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()
    bench(args.repeats)


if __name__ == "__main__":
    main()
