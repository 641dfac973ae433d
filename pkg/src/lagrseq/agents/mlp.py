"""Multilayer perceptron parameters, Adam state, gradient checking and weight snapshots."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import kernels


class NonFiniteError(FloatingPointError):
    """A loss or parameter became NaN/Inf during training."""


def param_count(sizes) -> int:
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


class MlpParams:
    """Flat parameter vector for a ReLU MLP with a linear output layer."""

    def __init__(self, sizes, theta=None):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError(f"bad layer sizes {sizes}")
        n = param_count(self.sizes)
        if theta is None:
            theta = np.zeros(n)
        theta = np.ascontiguousarray(theta, dtype=np.float64)
        if theta.shape != (n,):
            raise ValueError(f"expected {n} parameters for sizes {self.sizes}, got {theta.shape}")
        self.theta = theta

    @classmethod
    def init(cls, sizes, rng) -> "MlpParams":
        """He-uniform weights, zero biases."""
        p = cls(sizes)
        gen = rng.generator if hasattr(rng, "generator") else rng
        for w, b in p.layers():
            limit = np.sqrt(6.0 / w.shape[0])
            w[...] = gen.uniform(-limit, limit, size=w.shape)
            b[...] = 0.0
        return p

    def layers(self):
        return kernels.python_kernels.layer_views(self.theta, self.sizes)

    def copy(self) -> "MlpParams":
        return MlpParams(self.sizes, self.theta.copy())

    @property
    def n_inputs(self) -> int:
        return self.sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.sizes[-1]

    def __eq__(self, other):
        return (
            isinstance(other, MlpParams)
            and self.sizes == other.sizes
            and np.array_equal(self.theta, other.theta)
        )


def mlp_forward(params: MlpParams, x, backend=None) -> np.ndarray:
    """Outputs for one input vector (1-D) or a batch (2-D)."""
    k = backend or kernels.active
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.shape[1] != params.n_inputs:
        raise ValueError(f"input has {batch.shape[1]} features, network expects {params.n_inputs}")
    out = k.forward(params.theta, params.sizes, batch)
    return out[0] if single else out


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)

    @classmethod
    def for_params(cls, params: MlpParams, **kw) -> "AdamState":
        n = params.theta.size
        return cls(m=np.zeros(n), v=np.zeros(n), **kw)


def mse_loss_and_grad(params: MlpParams, X, actions, targets, backend=None):
    """Loss over each row's taken action, and its gradient as a flat vector."""
    k = backend or kernels.active
    grad = np.zeros_like(params.theta)
    loss = k.loss_and_grad(
        params.theta,
        params.sizes,
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(actions, dtype=np.int64),
        np.ascontiguousarray(targets, dtype=np.float64),
        grad,
    )
    return loss, grad


def regression_step(params: MlpParams, adam: AdamState, X, actions, targets, backend=None) -> float:
    """One Adam step on the taken-action mean squared error."""
    k = backend or kernels.active
    adam.step += 1
    grad = np.empty_like(params.theta)
    loss = k.train_step(
        params.theta, grad, adam.m, adam.v, adam.step,
        adam.lr, adam.beta1, adam.beta2, adam.eps,
        params.sizes,
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(actions, dtype=np.int64),
        np.ascontiguousarray(targets, dtype=np.float64),
    )
    if not np.isfinite(loss) or not np.isfinite(params.theta).all():
        raise NonFiniteError(
            f"non-finite training state at Adam step {adam.step}: loss={loss}, "
            f"{int(np.count_nonzero(~np.isfinite(params.theta)))} non-finite parameters"
        )
    return float(loss)


@dataclass
class GradientReport:
    max_rel_error: float
    worst_index: int
    n_params: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def gradient_check(params, loss_fn, grad_fn=None, tolerance=1e-4, step=1e-5) -> GradientReport:
    """Compare an analytic gradient with central differences on every parameter.

    ``loss_fn(theta) -> float``; ``grad_fn(theta) -> ndarray`` defaults to the
    MSE kernel gradient only when ``loss_fn`` carries one as ``loss_fn.grad``.
    """
    theta0 = params.theta.copy()
    grad_fn = grad_fn or loss_fn.grad
    analytic = np.asarray(grad_fn(theta0.copy()), dtype=np.float64)
    numeric = np.empty_like(theta0)
    for i in range(theta0.size):
        t = theta0.copy()
        t[i] += step
        up = loss_fn(t)
        t[i] -= 2 * step
        down = loss_fn(t)
        numeric[i] = (up - down) / (2 * step)
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    rel = np.abs(analytic - numeric) / denom
    worst = int(np.argmax(rel))
    return GradientReport(float(rel[worst]), worst, theta0.size, tolerance)


def mse_objective(sizes, X, actions, targets, backend=None):
    """``loss_fn`` for :func:`gradient_check`: forward-only loss plus ``.grad`` from the kernels."""
    X = np.asarray(X, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.float64)
    k = backend or kernels.active

    def loss(theta):
        q = k.forward(theta, sizes, X)
        err = q[np.arange(len(actions)), actions] - targets
        return float(np.mean(err * err))

    def grad(theta):
        g = np.zeros_like(theta)
        k.loss_and_grad(theta, sizes, X, actions, targets, g)
        return g

    loss.grad = grad
    return loss


SNAPSHOT_MAGIC = b"LAGRSEQ-MLP v1\n"


def save_params(params: MlpParams, path) -> None:
    """``LAGRSEQ-MLP v1`` line, a JSON header line with layer sizes, then little-endian float64s."""
    header = json.dumps({"sizes": list(params.sizes), "count": int(params.theta.size)}).encode()
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(header + b"\n")
        fh.write(params.theta.astype("<f8").tobytes())


def load_params(path) -> MlpParams:
    data = Path(path).read_bytes()
    if not data.startswith(SNAPSHOT_MAGIC):
        raise ValueError(f"{path}: not an MLP snapshot (bad magic)")
    rest = data[len(SNAPSHOT_MAGIC):]
    line, _, payload = rest.partition(b"\n")
    header = json.loads(line)
    count = header["count"]
    if len(payload) != 8 * count:
        raise ValueError(f"{path}: expected {count} parameters, found {len(payload) // 8}")
    theta = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return MlpParams(header["sizes"], theta)
