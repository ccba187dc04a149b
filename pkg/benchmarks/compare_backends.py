#!/usr/bin/env python3
"""Compare the compiled and numpy convolution backends.

Times the primitive kernels on training-shaped batches, dense full-frame
inference at common resolutions, and one small training run, then prints
per-backend wall times with the compiled-over-numpy speedup.  Runs with
whatever backends are importable; a source tree without the built
extension simply reports the numpy column alone.

    python3 benchmarks/compare_backends.py
    python3 benchmarks/compare_backends.py --quick
"""

import argparse
import time

import numpy as np

from qmiheat.backend import available_backends, forced_backend
from qmiheat.data import generate_synthetic_split
from qmiheat.heatmap import fully_conv_inference
from qmiheat.layers import ConvLayer, conv2d_backward, conv2d_forward
from qmiheat.models import build_model
from qmiheat.training import TrainConfig, train


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def conv_cases(rng, repeats):
    x = rng.standard_normal((64, 16, 32, 32), dtype=np.float32)
    layer = ConvLayer(
        kernel=(rng.standard_normal((16, 16, 3, 3), dtype=np.float32) * 0.1),
        bias=np.zeros(16, dtype=np.float32),
        stride=1,
        pad=1,
    )
    grad = rng.standard_normal((64, 16, 32, 32), dtype=np.float32)
    yield "conv3x3 fwd 64x16x32x32", lambda: conv2d_forward(x, layer), repeats
    yield "conv3x3 bwd 64x16x32x32", lambda: conv2d_backward(x, layer, grad), repeats


def dense_cases(rng, repeats, quick):
    sizes = [("rf32", 480, 640)]
    if not quick:
        sizes += [("rf32", 1080, 1920), ("rf64", 1080, 1920)]
    for variant, h, w in sizes:
        model = build_model(variant, seed=0)
        frame = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
        yield (
            f"dense {variant} {w}x{h}",
            lambda m=model, f=frame: fully_conv_inference(m, f),
            repeats if h < 1000 else max(1, repeats - 1),
        )


def training_case():
    train_set, test_set = generate_synthetic_split(32, 200, 50, seed=0)
    config = TrainConfig(variant="rf32", epochs=1, batch_size=64, seed=0)
    return "train 1 epoch 400 samples", lambda: train(config, train_set, test_set), 1


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=3, help="best-of repeats")
    parser.add_argument(
        "--quick", action="store_true", help="skip the 1080p and training rows"
    )
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    cases = list(conv_cases(rng, args.repeats))
    cases += list(dense_cases(rng, args.repeats, args.quick))
    if not args.quick:
        cases.append(training_case())

    backends = available_backends()
    width = max(len(name) for name, _, _ in cases)
    header = f"{'case'.ljust(width)}  " + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))

    for name, fn, repeats in cases:
        times = {}
        for backend in backends:
            with forced_backend(backend):
                fn()  # warm caches and lazy allocations
                times[backend] = best_of(fn, repeats)
        row = name.ljust(width) + "  "
        row += "".join(f"{times[b] * 1e3:>10.1f}ms" for b in backends)
        if len(backends) == 2:
            row += f"{times['numpy'] / times['compiled']:>9.2f}x"
        print(row)


if __name__ == "__main__":
    main()
