"""numba @njit implementations of the hot numeric kernels.

Same contracts as ``_numpy.py``. Loop-based loss kernels avoid temporary
allocations; matmuls go through np.dot (BLAS).
"""

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True)
def dense_forward(x, w, b):
    return np.dot(x, w.T) + b


@njit(cache=True)
def relu(z):
    return np.maximum(z, 0.0)


@njit(cache=True)
def dense_backward(x, w, dout):
    dw = np.dot(dout.T, np.ascontiguousarray(x))
    db = dout.sum(axis=0)
    dx = np.dot(dout, w)
    return dx, dw, db


@njit(cache=True)
def softmax_ce(logits, labels):
    n, c = logits.shape
    d = np.empty((n, c))
    loss = 0.0
    for i in range(n):
        m = logits[i, 0]
        for j in range(1, c):
            if logits[i, j] > m:
                m = logits[i, j]
        s = 0.0
        for j in range(c):
            d[i, j] = np.exp(logits[i, j] - m)
            s += d[i, j]
        loss += np.log(s) + m - logits[i, labels[i]]
        inv = 1.0 / (s * n)
        for j in range(c):
            d[i, j] *= inv
        d[i, labels[i]] -= 1.0 / n
    return loss / n, d


@njit(cache=True)
def softmax_wsm(logits, labels, beta):
    n, c = logits.shape
    d = np.empty((n, c))
    loss = 0.0
    for i in range(n):
        m = -np.inf
        for j in range(c):
            if beta[j] > 0.0 and logits[i, j] > m:
                m = logits[i, j]
        s = 0.0
        for j in range(c):
            if beta[j] > 0.0:
                d[i, j] = beta[j] * np.exp(logits[i, j] - m)
                s += d[i, j]
            else:
                d[i, j] = 0.0
        loss += np.log(s) + m - logits[i, labels[i]]
        inv = 1.0 / (s * n)
        for j in range(c):
            d[i, j] *= inv
        d[i, labels[i]] -= 1.0 / n
    return loss / n, d


@njit(cache=True)
def sgd_update(p, g, lr, wd):
    pf = p.ravel()
    gf = g.ravel()
    for i in range(pf.size):
        pf[i] -= lr * (gf[i] + wd * pf[i])


@njit(cache=True)
def accuracy(logits, labels):
    n, c = logits.shape
    hits = 0
    for i in range(n):
        best = 0
        for j in range(1, c):
            if logits[i, j] > logits[i, best]:
                best = j
        if best == labels[i]:
            hits += 1
    return hits / n
