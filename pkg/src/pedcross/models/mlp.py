"""Fully connected ReLU network trained with full-batch Adam.

Layers are ``(W, b)`` pairs with ``W`` of shape ``(fan_in, fan_out)``. The
output unit is a logit (classification, mean binary cross-entropy) or a
linear value (regression, half mean squared error, so the output-bias
gradient equals the mean residual in both cases).
"""
from __future__ import annotations

import numpy as np

from ..errors import TrainingDivergenceError
from .linear import sigmoid


def init_layers(sizes, rng, output_bias=0.0):
    """Glorot-uniform weights, zero biases (output bias set to ``output_bias``)."""
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        layers.append((W, np.zeros(fan_out)))
    W, b = layers[-1]
    layers[-1] = (W, b + output_bias)
    return layers


def forward(layers, X):
    """Return the output pre-activation ``(n,)`` and the per-layer cache."""
    a = np.asarray(X, dtype=float)
    cache = []
    last = len(layers) - 1
    for i, (W, b) in enumerate(layers):
        z = a @ W + b
        cache.append((a, z))
        a = z if i == last else np.maximum(z, 0.0)
    return a[:, 0], cache


def loss_and_gradient(layers, X, y, classify):
    """Mean loss and its exact gradient, as a list of ``(dW, db)`` per layer."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    out, cache = forward(layers, X)
    if classify:
        loss = float(np.mean(np.logaddexp(0.0, out) - y * out))
        delta = (sigmoid(out) - y) / n
    else:
        r = out - y
        loss = float(0.5 * np.mean(r * r))
        delta = r / n
    delta = delta[:, None]
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        a_in, z = cache[i]
        W, _ = layers[i]
        grads[i] = (a_in.T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ W.T) * (cache[i - 1][1] > 0.0)
    return loss, grads


def loss(layers, X, y, classify) -> float:
    out, _ = forward(layers, X)
    y = np.asarray(y, dtype=float)
    if classify:
        return float(np.mean(np.logaddexp(0.0, out) - y * out))
    return float(0.5 * np.mean((out - y) ** 2))


def fit(X, y, *, classify, seed, hidden=(16, 4), learning_rate=0.01, epochs=500,
        beta1=0.9, beta2=0.999, eps=1e-8):
    rng = np.random.default_rng(seed)
    sizes = [X.shape[1], *hidden, 1]
    layers = init_layers(sizes, rng, output_bias=0.0 if classify else float(np.mean(y)))
    m = [(np.zeros_like(W), np.zeros_like(b)) for W, b in layers]
    v = [(np.zeros_like(W), np.zeros_like(b)) for W, b in layers]
    last = np.nan
    for t in range(1, epochs + 1):
        cur, grads = loss_and_gradient(layers, X, y, classify)
        if not np.isfinite(cur):
            raise TrainingDivergenceError("MLP loss became non-finite", epoch=t, last_loss=float(last))
        last = cur
        c1 = 1.0 - beta1 ** t
        c2 = 1.0 - beta2 ** t
        new_layers = []
        for i, ((W, b), (gW, gb)) in enumerate(zip(layers, grads)):
            mW, mb = m[i]
            vW, vb = v[i]
            mW = beta1 * mW + (1 - beta1) * gW
            mb = beta1 * mb + (1 - beta1) * gb
            vW = beta2 * vW + (1 - beta2) * gW * gW
            vb = beta2 * vb + (1 - beta2) * gb * gb
            m[i], v[i] = (mW, mb), (vW, vb)
            W = W - learning_rate * (mW / c1) / (np.sqrt(vW / c2) + eps)
            b = b - learning_rate * (mb / c1) / (np.sqrt(vb / c2) + eps)
            new_layers.append((W, b))
        layers = new_layers
    final = loss(layers, X, y, classify)
    if not np.isfinite(final):
        raise TrainingDivergenceError("MLP loss became non-finite", epoch=epochs, last_loss=float(last))
    return layers, {"epochs": epochs, "final_loss": final}
