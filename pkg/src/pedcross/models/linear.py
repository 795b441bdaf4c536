"""Logistic / linear regression by full-batch gradient descent with an L2 penalty."""
from __future__ import annotations

import numpy as np

from ..errors import TrainingDivergenceError


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _loss(X, y, w, b, l2, classify):
    z = X @ w + b
    if classify:
        data = np.mean(np.logaddexp(0.0, z) - y * z)
    else:
        data = 0.5 * np.mean((z - y) ** 2)
    return data + 0.5 * l2 * (w @ w), z


def fit(X, y, *, classify, l2=1e-4, learning_rate=0.1, max_iter=2000, tol=1e-8):
    """Return ``(weights, bias, info)``.

    Classification minimises mean log-loss, regression half mean squared
    error; both add ``l2/2 * ||w||^2`` (bias unpenalised). Stops early when
    the loss changes by less than ``tol`` between iterations.
    """
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    # overflow is detected through the non-finite loss below
    with np.errstate(over="ignore", invalid="ignore"):
        prev, z = _loss(X, y, w, b, l2, classify)
        it = 0
        for it in range(1, max_iter + 1):
            resid = (sigmoid(z) if classify else z) - y
            gw = X.T @ resid / n + l2 * w
            gb = resid.mean()
            w = w - learning_rate * gw
            b = b - learning_rate * gb
            loss, z = _loss(X, y, w, b, l2, classify)
            if not np.isfinite(loss):
                raise TrainingDivergenceError("gradient descent diverged", epoch=it, last_loss=float(prev))
            if abs(prev - loss) < tol:
                prev = loss
                break
            prev = loss
    return w, float(b), {"iterations": it, "final_loss": float(prev)}


def decision_function(X, w, b):
    return X @ w + b
