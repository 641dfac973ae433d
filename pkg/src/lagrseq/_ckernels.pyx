# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled MLP kernels; same contract as ``_pykernels``.

Row-major blocks are handed to column-major BLAS by computing the
transposed product, so no copies are made.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, pow, sqrt
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

NAME = "cython"

# Adam moments of parameters whose gradient stays at zero decay geometrically
# into subnormal range, where float arithmetic is ~100x slower. Below this
# floor they are flushed to zero; the effect on any parameter is < 1e-190.
cdef double MOMENT_FLOOR = 1e-200


cdef inline void _gemm(char ta, char tb, int m, int n, int k, double alpha,
                       double* a, int lda, double* b, int ldb, double beta,
                       double* c, int ldc) noexcept nogil:
    dgemm(&ta, &tb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)


cdef void _layer_forward(double* theta, Py_ssize_t w_off, Py_ssize_t b_off,
                         double* h_in, double* h_out, int batch, int fan_in,
                         int fan_out, bint relu) noexcept nogil:
    cdef Py_ssize_t r, j
    cdef double* row
    # h_out = h_in @ W  (row-major)  ==  h_out^T = W^T h_in^T (column-major)
    _gemm(b'N', b'N', fan_out, batch, fan_in, 1.0,
          theta + w_off, fan_out, h_in, fan_in, 0.0, h_out, fan_out)
    for r in range(batch):
        row = h_out + r * fan_out
        for j in range(fan_out):
            row[j] += theta[b_off + j]
            if relu and row[j] < 0.0:
                row[j] = 0.0


def _offsets(sizes):
    offs = []
    pos = 0
    for i in range(len(sizes) - 1):
        offs.append((pos, pos + sizes[i] * sizes[i + 1]))
        pos += sizes[i] * sizes[i + 1] + sizes[i + 1]
    return offs


def forward(double[::1] theta, sizes, X):
    cdef double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef int batch = x.shape[0]
    cdef int n_layers = len(sizes) - 1
    cdef int i
    offs = _offsets(sizes)
    cdef double[:, ::1] h_in = x
    cdef double[:, ::1] h_out
    for i in range(n_layers):
        h_out = np.empty((batch, sizes[i + 1]))
        _layer_forward(&theta[0], offs[i][0], offs[i][1], &h_in[0, 0], &h_out[0, 0],
                       batch, sizes[i], sizes[i + 1], i < n_layers - 1)
        h_in = h_out
    return np.asarray(h_in)


def loss_and_grad(double[::1] theta, sizes, X, actions, targets, double[::1] grad):
    cdef double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.int64_t[::1] act = np.ascontiguousarray(actions, dtype=np.int64)
    cdef double[::1] y = np.ascontiguousarray(targets, dtype=np.float64)
    cdef int batch = x.shape[0]
    cdef int n_layers = len(sizes) - 1
    cdef int i, r, j, fan_in, fan_out
    cdef double err, loss = 0.0
    offs = _offsets(sizes)

    acts = [x]
    cdef double[:, ::1] h_in = x
    cdef double[:, ::1] h_out
    for i in range(n_layers):
        h_out = np.empty((batch, sizes[i + 1]))
        _layer_forward(&theta[0], offs[i][0], offs[i][1], &h_in[0, 0], &h_out[0, 0],
                       batch, sizes[i], sizes[i + 1], i < n_layers - 1)
        acts.append(h_out)
        h_in = h_out

    cdef int n_out = sizes[n_layers]
    cdef double[:, ::1] q = acts[n_layers]
    cdef double[:, ::1] delta = np.zeros((batch, n_out))
    for r in range(batch):
        err = q[r, act[r]] - y[r]
        loss += err * err
        delta[r, act[r]] = 2.0 * err / batch
    loss /= batch

    cdef double[:, ::1] a_in
    cdef double[:, ::1] d_in
    cdef Py_ssize_t w_off, b_off
    for i in range(n_layers - 1, -1, -1):
        fan_in = sizes[i]
        fan_out = sizes[i + 1]
        w_off = offs[i][0]
        b_off = offs[i][1]
        a_in = acts[i]
        # dW = a_in^T @ delta  ->  dW^T = delta^T a_in  (column-major)
        _gemm(b'N', b'T', fan_out, fan_in, batch, 1.0,
              &delta[0, 0], fan_out, &a_in[0, 0], fan_in, 0.0, &grad[w_off], fan_out)
        for j in range(fan_out):
            grad[b_off + j] = 0.0
        for r in range(batch):
            for j in range(fan_out):
                grad[b_off + j] += delta[r, j]
        if i:
            d_in = np.empty((batch, fan_in))
            # d_in = delta @ W^T  ->  d_in^T = W delta^T (column-major)
            _gemm(b'T', b'N', fan_in, batch, fan_out, 1.0,
                  &theta[w_off], fan_out, &delta[0, 0], fan_out, 0.0, &d_in[0, 0], fan_in)
            for r in range(batch):
                for j in range(fan_in):
                    if a_in[r, j] <= 0.0:
                        d_in[r, j] = 0.0
            delta = d_in
    return loss


def adam_update(double[::1] theta, double[::1] grad, double[::1] m, double[::1] v,
                long t, double lr, double beta1, double beta2, double eps):
    cdef Py_ssize_t i, n = theta.shape[0]
    cdef double g, mi, vi
    cdef double floor = MOMENT_FLOOR
    cdef double step = lr / (1.0 - pow(beta1, t))
    cdef double vcorr = 1.0 / (1.0 - pow(beta2, t))
    with nogil:
        for i in range(n):
            g = grad[i]
            mi = beta1 * m[i] + (1.0 - beta1) * g
            vi = beta2 * v[i] + (1.0 - beta2) * g * g
            mi = mi if fabs(mi) >= floor else 0.0
            vi = vi if vi >= floor else 0.0
            m[i] = mi
            v[i] = vi
            theta[i] -= step * mi / (sqrt(vi * vcorr) + eps)


def train_step(theta, grad, m, v, long t, double lr, double beta1, double beta2,
               double eps, sizes, X, actions, targets):
    loss = loss_and_grad(theta, sizes, X, actions, targets, grad)
    adam_update(theta, grad, m, v, t, lr, beta1, beta2, eps)
    return loss
