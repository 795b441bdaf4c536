"""Linear SVM trained on the primal hinge loss by projected subgradient descent.

Objective: ``lam/2 ||w||^2 + mean(max(0, 1 - y_i w.x_i))`` with
``lam = 1 / (C n)``; the bias is an extra (regularised) constant input.
Step size at iteration t is ``1 / (lam t)`` followed by projection onto the
ball of radius ``1/sqrt(lam)``.
"""
import numpy as np

from ..errors import TrainingDivergenceError


def fit(X, y, *, C=1.0, epochs=2000):
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    ys = np.where(np.asarray(y) > 0.5, 1.0, -1.0)
    lam = 1.0 / (C * n)
    radius = 1.0 / np.sqrt(lam)
    w = np.zeros(d + 1)
    for t in range(1, epochs + 1):
        margins = ys * (Xa @ w)
        viol = margins < 1.0
        grad = lam * w - (ys[viol] @ Xa[viol]) / n
        w = w - grad / (lam * t)
        norm = np.linalg.norm(w)
        if not np.isfinite(norm):
            raise TrainingDivergenceError("hinge subgradient descent diverged", epoch=t)
        if norm > radius:
            w *= radius / norm
    margins = ys * (Xa @ w)
    loss = 0.5 * lam * (w @ w) + np.mean(np.maximum(0.0, 1.0 - margins))
    return w[:-1].copy(), float(w[-1]), {"iterations": epochs, "final_loss": float(loss)}
