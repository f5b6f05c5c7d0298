"""Compare the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Times im2col, col2im and activation_runs on workloads taken from a
default-model training step (batch 32, 96 channels, window 64) and from
activation extraction on a week of 6 s data. Also times one full forward
and backward pass of the default model under each backend.
"""

import argparse
import importlib
import os
import sys
import timeit

import numpy as np


def best_of(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def kernel_rows(impl, repeat):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((32, 96, 64)).astype(np.float32)
    rows = []
    for d in (1, 4, 16):
        cols = impl.im2col(x, 5, d)
        rows.append((f"im2col  B32 C96 T64 k5 d{d}", best_of(lambda: impl.im2col(x, 5, d), repeat, 20)))
        rows.append((f"col2im  B32 C96 T64 k5 d{d}", best_of(lambda: impl.col2im(cols, d), repeat, 20)))
    week = 7 * 24 * 600
    above = (rng.random(week) < 0.02).astype(np.uint8)
    above = np.convolve(above, np.ones(30), mode="same").astype(bool).astype(np.uint8)
    rows.append(("activation_runs  1 week @ 6 s", best_of(lambda: impl.activation_runs(above, 6.0, 12.0, 30.0),
                                                         repeat, 5)))
    return rows


def model_step_time(repeat):
    """Forward+backward of the default model under the currently selected backend."""
    from msnilm.model import ModelConfig, build_model
    from msnilm.tensor import Tensor
    from msnilm.training import cross_entropy_loss

    model = build_model(ModelConfig(), seed=0)
    rng = np.random.default_rng(1)
    x = Tensor(rng.uniform(0, 1, (32, 1, 64)).astype(np.float32))
    y = rng.uniform(0, 1, (32, 1, 64)).astype(np.float32)

    def step():
        model.zero_grad()
        cross_entropy_loss(model(x, rng), y).backward()

    step()
    return best_of(step, max(repeat // 4, 2), 1)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--skip-model", action="store_true", help="only time the kernels")
    args = ap.parse_args(argv)

    from msnilm import _pykernels, kernels

    if kernels.compiled_backend is None:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1
    py = dict(kernel_rows(_pykernels, args.repeat))
    cc = dict(kernel_rows(kernels.compiled_backend, args.repeat))
    print(f"{'workload':36s} {'numpy ms':>10s} {'compiled ms':>12s} {'speedup':>8s}")
    for name in py:
        print(f"{name:36s} {py[name] * 1e3:10.3f} {cc[name] * 1e3:12.3f} {py[name] / cc[name]:8.2f}x")

    if not args.skip_model:
        compiled = model_step_time(args.repeat)
        os.environ["MSNILM_PURE_PYTHON"] = "1"
        importlib.reload(kernels)
        assert kernels.BACKEND_NAME == "python"
        fallback = model_step_time(args.repeat)
        del os.environ["MSNILM_PURE_PYTHON"]
        importlib.reload(kernels)
        print(f"{'default model fwd+bwd, batch 32x64':36s} {fallback * 1e3:10.1f} {compiled * 1e3:12.1f} "
              f"{fallback / compiled:8.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
