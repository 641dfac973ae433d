"""NumPy reference kernels for the MLP; the compiled ``_ckernels`` mirror these.

Parameters live in one flat float64 vector. Layer ``i`` stores a row-major
``(sizes[i], sizes[i+1])`` weight block followed by its bias, so that a
hidden layer computes ``relu(h @ W + b)``.
"""

import numpy as np

NAME = "python"

MOMENT_FLOOR = 1e-200  # Adam moments below this are flushed to zero (subnormals are slow)


def layer_views(theta, sizes):
    views = []
    pos = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = theta[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out)
        pos += fan_in * fan_out
        b = theta[pos : pos + fan_out]
        pos += fan_out
        views.append((w, b))
    return views


def forward(theta, sizes, X):
    h = np.asarray(X, dtype=np.float64)
    layers = layer_views(theta, sizes)
    for i, (w, b) in enumerate(layers):
        h = h @ w + b
        if i < len(layers) - 1:
            np.maximum(h, 0.0, out=h)
    return h


def loss_and_grad(theta, sizes, X, actions, targets, grad):
    """Mean squared error on each row's taken action; writes d(loss)/d(theta) into ``grad``."""
    X = np.asarray(X, dtype=np.float64)
    layers = layer_views(theta, sizes)
    grads = layer_views(grad, sizes)
    acts = [X]
    h = X
    for i, (w, b) in enumerate(layers):
        h = h @ w + b
        if i < len(layers) - 1:
            np.maximum(h, 0.0, out=h)
        acts.append(h)
    q = acts[-1]
    batch = X.shape[0]
    rows = np.arange(batch)
    err = q[rows, actions] - targets
    loss = float(np.mean(err * err))
    delta = np.zeros_like(q)
    delta[rows, actions] = 2.0 * err / batch
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        gw, gb = grads[i]
        np.matmul(acts[i].T, delta, out=gw)
        np.sum(delta, axis=0, out=gb)
        if i:
            delta = (delta @ w.T) * (acts[i] > 0.0)
    return loss


def adam_update(theta, grad, m, v, t, lr, beta1, beta2, eps):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m[np.abs(m) < MOMENT_FLOOR] = 0.0
    v[v < MOMENT_FLOOR] = 0.0
    step = lr / (1.0 - beta1**t)
    theta -= step * m / (np.sqrt(v / (1.0 - beta2**t)) + eps)


def train_step(theta, grad, m, v, t, lr, beta1, beta2, eps, sizes, X, actions, targets):
    loss = loss_and_grad(theta, sizes, X, actions, targets, grad)
    adam_update(theta, grad, m, v, t, lr, beta1, beta2, eps)
    return loss
