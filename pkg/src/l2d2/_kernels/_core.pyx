# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled network kernels.

Same math as the numpy backend — tanh hidden layers, identity output,
mean-squared-error gradients, momentum updates — but the whole epoch runs
in C with matrix products dispatched straight to BLAS, so there is no
per-batch interpreter overhead.
"""

from libc.stdlib cimport malloc, free
from libc.string cimport memcpy

import numpy as np
cimport numpy as cnp
from scipy.linalg.cython_blas cimport dgemm

cdef extern from "fast_tanh.h":
    void l2d2_bias_tanh(double* z, const double* bias, long rows, long cols) nogil
    void l2d2_bias_add(double* z, const double* bias, long rows, long cols) nogil

cnp.import_array()

NAME = "compiled"

cdef char* TRANS_T = b"T"
cdef char* TRANS_N = b"N"
cdef double ONE = 1.0
cdef double ZERO = 0.0


cdef void _layer_forward(double* A, double* W, double* b, double* Z,
                         int m, int din, int dout, bint activate) noexcept nogil:
    # Z (m, dout) = A (m, din) @ W (dout, din)^T + b, optionally tanh'd.
    # Row-major buffers viewed column-major are transposed, hence the
    # swapped operands below.
    dgemm(TRANS_T, TRANS_N, &dout, &m, &din, &ONE, W, &din, A, &din, &ZERO, Z, &dout)
    if activate:
        l2d2_bias_tanh(Z, b, m, dout)
    else:
        l2d2_bias_add(Z, b, m, dout)


cdef void _grad_weights(double* delta, double* acts, double* gW,
                        int m, int din, int dout) noexcept nogil:
    # gW (dout, din) = delta (m, dout)^T @ acts (m, din)
    dgemm(TRANS_N, TRANS_T, &din, &dout, &m, &ONE, acts, &din, delta, &dout, &ZERO, gW, &din)


cdef void _momentum_gemm(double* delta, double* acts, double* vW,
                         double neg_lr, double momentum,
                         int m, int din, int dout) noexcept nogil:
    # vW := momentum * vW - lr * delta^T @ acts, in one BLAS call.
    dgemm(TRANS_N, TRANS_T, &din, &dout, &m, &neg_lr, acts, &din, delta, &dout,
          &momentum, vW, &din)


cdef void _grad_bias(double* delta, double* gb, int m, int dout) noexcept nogil:
    cdef int i, j
    for j in range(dout):
        gb[j] = 0.0
    for i in range(m):
        for j in range(dout):
            gb[j] += delta[i * dout + j]


cdef void _delta_prev(double* delta, double* W, double* acts_prev, double* out,
                      int m, int din, int dout) noexcept nogil:
    # out (m, din) = (delta (m, dout) @ W (dout, din)) * (1 - acts_prev^2)
    cdef int i
    cdef double a
    dgemm(TRANS_N, TRANS_N, &din, &m, &dout, &ONE, W, &din, delta, &dout, &ZERO, out, &din)
    for i in range(m * din):
        a = acts_prev[i]
        out[i] *= 1.0 - a * a


def forward(list Ws, list bs, X):
    """Evaluate the network on a batch; X is (n, in_dim)."""
    cdef double[:, ::1] a = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] W, z
    cdef double[::1] b
    cdef int m = a.shape[0]
    cdef int layer, last = len(Ws) - 1
    out = None
    for layer in range(len(Ws)):
        W = Ws[layer]
        b = bs[layer]
        out = np.empty((m, W.shape[0]), dtype=np.float64)
        z = out
        if m > 0:
            _layer_forward(&a[0, 0], &W[0, 0], &b[0], &z[0, 0],
                           m, W.shape[1], W.shape[0], layer != last)
        a = z
    return out


def backward(list Ws, list bs, X, GY):
    """Gradients of sum_i <GY_i, y_i> w.r.t. every weight and bias."""
    cdef int L = len(Ws)
    cdef int m = X.shape[0]
    cdef int layer
    acts = [np.ascontiguousarray(X, dtype=np.float64)]
    cdef double[:, ::1] a_in, a_out, W
    cdef double[::1] b
    for layer in range(L):
        W = Ws[layer]
        b = bs[layer]
        a_in = acts[layer]
        out = np.empty((m, W.shape[0]), dtype=np.float64)
        a_out = out
        if m > 0:
            _layer_forward(&a_in[0, 0], &W[0, 0], &b[0], &a_out[0, 0],
                           m, W.shape[1], W.shape[0], layer != L - 1)
        acts.append(out)

    gWs = [np.empty_like(Ws[layer]) for layer in range(L)]
    gbs = [np.empty_like(bs[layer]) for layer in range(L)]
    delta = np.ascontiguousarray(GY, dtype=np.float64)
    cdef double[:, ::1] d_view, gW_view, acts_view, d_prev
    cdef double[::1] gb_view
    for layer in range(L - 1, -1, -1):
        W = Ws[layer]
        d_view = delta
        gW_view = gWs[layer]
        gb_view = gbs[layer]
        acts_view = acts[layer]
        if m > 0:
            _grad_weights(&d_view[0, 0], &acts_view[0, 0], &gW_view[0, 0],
                          m, W.shape[1], W.shape[0])
            _grad_bias(&d_view[0, 0], &gb_view[0], m, W.shape[0])
        else:
            gWs[layer][:] = 0.0
            gbs[layer][:] = 0.0
        if layer > 0 and m > 0:
            prev = np.empty((m, W.shape[1]), dtype=np.float64)
            d_prev = prev
            _delta_prev(&d_view[0, 0], &W[0, 0], &acts_view[0, 0], &d_prev[0, 0],
                        m, W.shape[1], W.shape[0])
            delta = prev
    return gWs, gbs


def train_epoch(list Ws, list bs, list vWs, list vbs, X, Y,
                perm, int batch_size, double lr, double momentum,
                double weight_decay):
    """One epoch of mini-batch gradient descent, updating in place.

    Returns the mean over samples of the sum-squared residual, with each
    batch's loss measured before its own update.
    """
    cdef double[:, ::1] Xv = X
    cdef double[:, ::1] Yv = Y
    cdef cnp.int64_t[::1] pv = perm
    cdef int n = Xv.shape[0]
    cdef int L = len(Ws)
    cdef int layer, i, j, start, m, src
    cdef double loss_sum = 0.0, r, scale

    cdef int* dims = <int*> malloc((L + 1) * sizeof(int))
    cdef double** Wp = <double**> malloc(L * sizeof(double*))
    cdef double** bp = <double**> malloc(L * sizeof(double*))
    cdef double** vWp = <double**> malloc(L * sizeof(double*))
    cdef double** vbp = <double**> malloc(L * sizeof(double*))
    cdef double** actp = <double**> malloc((L + 1) * sizeof(double*))
    cdef double** deltap = <double**> malloc((L + 1) * sizeof(double*))
    cdef double** gbp = <double**> malloc(L * sizeof(double*))

    cdef double[:, ::1] tmp2
    cdef double[::1] tmp1

    dims[0] = Xv.shape[1]
    keepalive = []
    for layer in range(L):
        tmp2 = Ws[layer]
        Wp[layer] = &tmp2[0, 0]
        dims[layer + 1] = tmp2.shape[0]
        tmp1 = bs[layer]
        bp[layer] = &tmp1[0]
        tmp2 = vWs[layer]
        vWp[layer] = &tmp2[0, 0]
        tmp1 = vbs[layer]
        vbp[layer] = &tmp1[0]
        g = np.empty(dims[layer + 1], dtype=np.float64)
        keepalive.append(g)
        tmp1 = g
        gbp[layer] = &tmp1[0]
    for layer in range(L + 1):
        a = np.empty((batch_size, dims[layer]), dtype=np.float64)
        keepalive.append(a)
        tmp2 = a
        actp[layer] = &tmp2[0, 0]
        d = np.empty((batch_size, dims[layer]), dtype=np.float64)
        keepalive.append(d)
        tmp2 = d
        deltap[layer] = &tmp2[0, 0]
    yb = np.empty((batch_size, dims[L]), dtype=np.float64)
    keepalive.append(yb)
    tmp2 = yb
    cdef double* ybp = &tmp2[0, 0]

    cdef int dout = dims[L]
    with nogil:
        start = 0
        while start < n:
            m = n - start
            if m > batch_size:
                m = batch_size
            # Gather the batch rows in permutation order.
            for i in range(m):
                src = <int> pv[start + i]
                memcpy(actp[0] + i * dims[0], &Xv[src, 0], dims[0] * sizeof(double))
                memcpy(ybp + i * dout, &Yv[src, 0], dout * sizeof(double))

            for layer in range(L):
                _layer_forward(actp[layer], Wp[layer], bp[layer], actp[layer + 1],
                               m, dims[layer], dims[layer + 1], layer != L - 1)

            scale = 2.0 / m
            for i in range(m * dout):
                r = actp[L][i] - ybp[i]
                loss_sum += r * r
                deltap[L][i] = scale * r

            for layer in range(L - 1, -1, -1):
                _grad_bias(deltap[layer + 1], gbp[layer], m, dims[layer + 1])
                if layer > 0:
                    _delta_prev(deltap[layer + 1], Wp[layer], actp[layer], deltap[layer],
                                m, dims[layer], dims[layer + 1])
                # Fused vW := momentum * vW - lr * (grad + weight_decay * W).
                _momentum_gemm(deltap[layer + 1], actp[layer], vWp[layer],
                               -lr, momentum, m, dims[layer], dims[layer + 1])
                if weight_decay != 0.0:
                    for i in range(dims[layer + 1] * dims[layer]):
                        vWp[layer][i] -= lr * weight_decay * Wp[layer][i]
                        Wp[layer][i] += vWp[layer][i]
                else:
                    for i in range(dims[layer + 1] * dims[layer]):
                        Wp[layer][i] += vWp[layer][i]
                for j in range(dims[layer + 1]):
                    vbp[layer][j] = momentum * vbp[layer][j] - lr * gbp[layer][j]
                    bp[layer][j] += vbp[layer][j]

            start += batch_size

    free(dims)
    free(Wp)
    free(bp)
    free(vWp)
    free(vbp)
    free(actp)
    free(deltap)
    free(gbp)
    return loss_sum / n
