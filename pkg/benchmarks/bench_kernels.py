#!/usr/bin/env python3
"""Compiled vs NumPy MLP kernels on the shapes the DQN actually uses.

    python3 benchmarks/bench_kernels.py [--repeat 2000]

Prints per-call microseconds for a single-state forward pass (action
selection) and a full train step (forward, backward, Adam) for the image
(102-128-128-2, batch 32) and arrangement (27-64-64-2, batch 16) networks,
and checks that both backends produce the same numbers.
"""

import argparse
import sys
import timeit

import numpy as np

from lagrseq import kernels
from lagrseq.agents.mlp import MlpParams
from lagrseq.core import make_rng

SHAPES = {
    "image": ((102, 128, 128, 2), 32),
    "arrangement": ((27, 64, 64, 2), 16),
}


def _case(sizes, batch, seed=0):
    rng = make_rng(seed)
    params = MlpParams.init(sizes, rng)
    X = rng.generator.random((batch, sizes[0]))
    actions = rng.generator.integers(sizes[-1], size=batch).astype(np.int64)
    targets = rng.generator.normal(size=batch)
    return params.theta, X, actions, targets


def time_backend(k, sizes, batch, repeat):
    theta0, X, actions, targets = _case(sizes, batch)
    theta = theta0.copy()
    grad = np.zeros_like(theta)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    x1 = X[:1]
    step = [0]

    def train():
        step[0] += 1
        k.train_step(theta, grad, m, v, step[0], 1e-3, 0.9, 0.999, 1e-8, sizes, X, actions, targets)

    fwd = min(timeit.repeat(lambda: k.forward(theta, sizes, x1), number=repeat, repeat=3)) / repeat
    trn = min(timeit.repeat(train, number=repeat, repeat=3)) / repeat
    return fwd * 1e6, trn * 1e6


def agreement(sizes, batch):
    """Max abs difference in loss and gradient between the two backends."""
    theta, X, actions, targets = _case(sizes, batch)
    out = []
    for k in (kernels.python_kernels, kernels.compiled_kernels):
        g = np.zeros_like(theta)
        loss = k.loss_and_grad(theta, sizes, X, actions, targets, g)
        out.append((loss, g))
    (l0, g0), (l1, g1) = out
    return abs(l0 - l1), float(np.max(np.abs(g0 - g1)))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=2000)
    args = ap.parse_args(argv)
    if kernels.compiled_kernels is None:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
        return 1
    print(f"{'network':<12} {'backend':<8} {'forward us':>11} {'train us':>10}")
    for name, (sizes, batch) in SHAPES.items():
        rows = {}
        for k in (kernels.python_kernels, kernels.compiled_kernels):
            rows[k.NAME] = time_backend(k, sizes, batch, args.repeat)
            f, t = rows[k.NAME]
            print(f"{name:<12} {k.NAME:<8} {f:>11.1f} {t:>10.1f}")
        (pf, pt), (cf, ct) = rows["python"], rows["cython"]
        dl, dg = agreement(sizes, batch)
        print(f"{name:<12} speedup  {pf / cf:>10.2f}x {pt / ct:>9.2f}x   |dloss|={dl:.1e} |dgrad|={dg:.1e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
