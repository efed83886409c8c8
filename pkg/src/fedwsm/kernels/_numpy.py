"""Vectorized numpy implementations of the hot numeric kernels.

This is the fallback backend; the numba backend in ``_numba.py`` exposes the
same functions with identical semantics (floating point results may differ in
the last ulps because summation order differs).
"""

import numpy as np

NAME = "numpy"


def dense_forward(x, w, b):
    """x: [B, fan_in], w: [fan_out, fan_in], b: [fan_out] -> [B, fan_out]."""
    return x @ w.T + b


def relu(z):
    return np.maximum(z, 0.0)


def dense_backward(x, w, dout):
    """Gradients of a dense layer. Returns (dx, dw, db)."""
    dw = dout.T @ x
    db = dout.sum(axis=0)
    dx = dout @ w
    return dx, dw, db


def softmax_ce(logits, labels):
    """Mean cross-entropy and its logit gradient, max-stabilized.

    Returns (loss, dlogits) where dlogits is the gradient of the *mean* loss.
    """
    n = logits.shape[0]
    m = logits.max(axis=1)
    e = np.exp(logits - m[:, None])
    s = e.sum(axis=1)
    rows = np.arange(n)
    loss = float(np.mean(np.log(s) + m - logits[rows, labels]))
    d = e / s[:, None]
    d[rows, labels] -= 1.0
    return loss, d / n


def softmax_wsm(logits, labels, beta):
    """Mean re-weighted softmax cross-entropy and its logit gradient.

    Classes with beta == 0 are excluded from the denominator exactly: their
    logits are replaced by -inf before exponentiation, so exp() yields 0.0
    and the gradient at those coordinates is exactly zero.
    """
    n = logits.shape[0]
    mask = beta > 0.0
    zm = np.where(mask[None, :], logits, -np.inf)
    m = zm.max(axis=1)
    e = np.exp(zm - m[:, None]) * beta
    s = e.sum(axis=1)
    rows = np.arange(n)
    loss = float(np.mean(np.log(s) + m - logits[rows, labels]))
    d = e / s[:, None]
    d[rows, labels] -= 1.0
    return loss, d / n


def sgd_update(p, g, lr, wd):
    """In-place SGD step with decoupled-style weight decay folded into the gradient."""
    p -= lr * (g + wd * p)


def accuracy(logits, labels):
    """Fraction of argmax-correct rows; argmax ties go to the lowest class index."""
    return float(np.mean(np.argmax(logits, axis=1) == labels))
