"""Minimal dense network: forward/backward, CE and re-weighted softmax losses,
SGD with weight decay, and a binary checkpoint format.

Models are multinomial logistic regression (no hidden layers) or an MLP with
ReLU hidden layers and an identity output head. All math is float64.
"""

import struct

import numpy as np

from . import kernels as K
from .errors import ConfigurationError, InvariantError

CHECKPOINT_MAGIC = b"FWSM"
CHECKPOINT_VERSION = 1


class ModelParams:
    """Per-layer weights [fan_out, fan_in] and biases [fan_out]."""

    def __init__(self, weights, biases):
        if len(weights) != len(biases):
            raise ConfigurationError("weights/biases layer count mismatch")
        for w, b in zip(weights, biases):
            if w.shape[0] != b.shape[0]:
                raise ConfigurationError(f"bias length {b.shape[0]} != fan_out {w.shape[0]}")
        for wa, wb in zip(weights, weights[1:]):
            if wb.shape[1] != wa.shape[0]:
                raise ConfigurationError(
                    f"layer shapes do not compose: {wa.shape} -> {wb.shape}")
        self.weights = weights
        self.biases = biases

    @property
    def num_layers(self):
        return len(self.weights)

    @property
    def shapes(self):
        return [(w.shape[0], w.shape[1]) for w in self.weights]

    @property
    def num_classes(self):
        return self.weights[-1].shape[0]

    @property
    def input_dim(self):
        return self.weights[0].shape[1]

    def copy(self):
        return ModelParams([w.copy() for w in self.weights],
                           [b.copy() for b in self.biases])

    def zeros_like(self):
        return ModelParams([np.zeros_like(w) for w in self.weights],
                           [np.zeros_like(b) for b in self.biases])

    def to_vector(self):
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, shapes, vec):
        weights, biases, off = [], [], 0
        for fo, fi in shapes:
            weights.append(vec[off:off + fo * fi].reshape(fo, fi).copy())
            off += fo * fi
            biases.append(vec[off:off + fo].copy())
            off += fo
        if off != vec.size:
            raise ConfigurationError(f"vector length {vec.size} != layout size {off}")
        return cls(weights, biases)


def init_params(input_dim, hidden, num_classes, rng):
    """Glorot-uniform weights, zero biases. `hidden` is a list of widths."""
    dims = [input_dim] + list(hidden) + [num_classes]
    weights, biases = [], []
    for fi, fo in zip(dims, dims[1:]):
        a = np.sqrt(6.0 / (fi + fo))
        weights.append(rng.uniform(-a, a, size=(fo, fi)))
        biases.append(np.zeros(fo))
    return ModelParams(weights, biases)


def forward(params, x):
    """Returns (logits [B, C], cache). Hidden layers are ReLU, output is identity."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ConfigurationError(
            f"input of shape {x.shape} does not match first-layer fan_in {params.input_dim}")
    acts = [x]
    h = x
    last = params.num_layers - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = K.dense_forward(h, w, b)
        if l != last:
            h = K.relu(h)
            acts.append(h)
    if not np.all(np.isfinite(h)):
        raise InvariantError("non-finite logits")
    return h, acts


def loss_ce(logits, labels):
    labels = _check_labels(logits, labels)
    return K.softmax_ce(logits, labels)[0]


def loss_wsm(logits, labels, beta):
    labels = _check_labels(logits, labels)
    beta = _check_beta(logits, labels, beta)
    return K.softmax_wsm(logits, labels, beta)[0]


def logit_gradient(logits, labels, loss="ce", beta=None):
    """Gradient of the mean loss with respect to the logits."""
    labels = _check_labels(logits, labels)
    if loss == "ce":
        return K.softmax_ce(logits, labels)[1]
    if loss == "wsm":
        beta = _check_beta(logits, labels, beta)
        return K.softmax_wsm(logits, labels, beta)[1]
    raise ConfigurationError(f"unknown loss {loss!r}")


def backward(params, cache, dlogits):
    """Backprop dlogits through the cached forward pass; returns a ModelParams-shaped gradient."""
    gw = [None] * params.num_layers
    gb = [None] * params.num_layers
    dout = dlogits
    for l in range(params.num_layers - 1, -1, -1):
        x = cache[l]
        dx, gw[l], gb[l] = K.dense_backward(x, params.weights[l], dout)
        if l > 0:
            dx = dx * (x > 0.0)  # ReLU mask of the layer input
        dout = dx
    return ModelParams(gw, gb)


def loss_and_grad(params, x, labels, loss="ce", beta=None):
    """Mean loss and its full parameter gradient in one pass."""
    logits, cache = forward(params, x)
    labels = _check_labels(logits, labels)
    if loss == "ce":
        value, dlogits = K.softmax_ce(logits, labels)
    elif loss == "wsm":
        beta = _check_beta(logits, labels, beta)
        value, dlogits = K.softmax_wsm(logits, labels, beta)
    else:
        raise ConfigurationError(f"unknown loss {loss!r}")
    return value, backward(params, cache, dlogits)


def sgd_step(params, grad, lr, weight_decay=0.0):
    """In place: w <- w - lr * (grad + weight_decay * w), biases included."""
    if lr < 0:
        raise ConfigurationError(f"learning rate must be nonnegative, got {lr}")
    if weight_decay < 0:
        raise ConfigurationError(f"weight decay must be nonnegative, got {weight_decay}")
    for w, g in zip(params.weights, grad.weights):
        K.sgd_update(w, g, lr, weight_decay)
    for b, g in zip(params.biases, grad.biases):
        K.sgd_update(b, g, lr, weight_decay)
    return params


def class_proportions(labels, num_classes):
    """Empirical class frequencies of `labels`; exactly 0 for absent classes."""
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=num_classes)
    return counts / counts.sum()


def _check_labels(logits, labels):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] != logits.shape[0]:
        raise ConfigurationError("label count does not match batch size")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ConfigurationError("label out of range")
    return labels


def _check_beta(logits, labels, beta):
    if beta is None:
        raise ConfigurationError("wsm loss requires class weights")
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (logits.shape[1],):
        raise ConfigurationError("class-weight length does not match class count")
    if abs(beta.sum() - 1.0) > 1e-12 or beta.min() < 0:
        raise InvariantError("class weights must be nonnegative and sum to 1")
    if np.any(beta[labels] == 0.0):
        raise InvariantError("batch contains a label with zero class weight")
    return beta


def save_params(params, path):
    """Little-endian binary checkpoint: magic, version, layer shapes, then f64 data."""
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, params.num_layers))
        for fo, fi in params.shapes:
            f.write(struct.pack("<II", fi, fo))
        for w, b in zip(params.weights, params.biases):
            f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_params(path):
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise InvariantError(f"bad checkpoint magic in {path}")
    version, nlayers = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise InvariantError(f"unsupported checkpoint version {version}")
    off = 12
    shapes = []
    for _ in range(nlayers):
        fi, fo = struct.unpack_from("<II", data, off)
        shapes.append((fo, fi))
        off += 8
    weights, biases = [], []
    for fo, fi in shapes:
        w = np.frombuffer(data, dtype="<f8", count=fo * fi, offset=off).reshape(fo, fi)
        off += fo * fi * 8
        b = np.frombuffer(data, dtype="<f8", count=fo, offset=off)
        off += fo * 8
        weights.append(w.astype(np.float64))
        biases.append(b.astype(np.float64))
    if off != len(data):
        raise InvariantError(f"trailing bytes in checkpoint {path}")
    return ModelParams(weights, biases)
