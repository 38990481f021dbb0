"""Pure-numpy implementation of the network kernels.

This is the fallback used when the compiled extension is unavailable. The
math is identical to the compiled core: tanh hidden layers, identity
output, mean-squared-error gradients, and momentum updates applied batch
by batch in permutation order.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def forward(Ws, bs, X):
    """Evaluate the network on a batch; X is (n, in_dim)."""
    a = X
    last = len(Ws) - 1
    for i, (W, b) in enumerate(zip(Ws, bs)):
        a = a @ W.T + b
        if i != last:
            a = np.tanh(a)
    return a


def _forward_cached(Ws, bs, X):
    acts = [X]
    last = len(Ws) - 1
    a = X
    for i, (W, b) in enumerate(zip(Ws, bs)):
        a = a @ W.T + b
        if i != last:
            a = np.tanh(a)
        acts.append(a)
    return acts


def backward(Ws, bs, X, GY):
    """Gradients of sum_i <GY_i, y_i> w.r.t. every weight and bias.

    GY is the upstream gradient d(loss)/d(output), shape (n, out_dim).
    """
    acts = _forward_cached(Ws, bs, X)
    gWs = [np.empty_like(W) for W in Ws]
    gbs = [np.empty_like(b) for b in bs]
    delta = GY
    for layer in range(len(Ws) - 1, -1, -1):
        gWs[layer] = delta.T @ acts[layer]
        gbs[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ Ws[layer]) * (1.0 - acts[layer] ** 2)
    return gWs, gbs


def train_epoch(Ws, bs, vWs, vbs, X, Y, perm, batch_size, lr, momentum, weight_decay):
    """One epoch of mini-batch gradient descent, updating in place.

    Returns the mean over samples of the sum-squared residual, with each
    batch's loss measured before its own update.
    """
    n = len(X)
    loss_sum = 0.0
    for start in range(0, n, batch_size):
        idx = perm[start : start + batch_size]
        xb = X[idx]
        yb = Y[idx]
        m = len(idx)

        acts = _forward_cached(Ws, bs, xb)
        resid = acts[-1] - yb
        loss_sum += float((resid * resid).sum())

        delta = (2.0 / m) * resid
        for layer in range(len(Ws) - 1, -1, -1):
            gW = delta.T @ acts[layer]
            gb = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ Ws[layer]) * (1.0 - acts[layer] ** 2)
            if weight_decay != 0.0:
                gW += weight_decay * Ws[layer]
            vWs[layer] *= momentum
            vWs[layer] -= lr * gW
            Ws[layer] += vWs[layer]
            vbs[layer] *= momentum
            vbs[layer] -= lr * gb
            bs[layer] += vbs[layer]
    return loss_sum / n
