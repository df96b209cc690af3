"""Binary cross-entropy over two-class softmax outputs.

The positive class (defect) is index 1 of the probability pair. With two
softmax outputs the binary form over the positive-class probability and
the categorical form over both classes coincide exactly.
"""

from __future__ import annotations

import numpy as np

from ..errors import ParameterError

# Probabilities are clipped into [CLIP_EPS, 1 - CLIP_EPS] before taking logs.
CLIP_EPS = 1e-7


def bce_loss(y: np.ndarray, p: np.ndarray) -> float:
    """Mean of ``-[y*ln(p) + (1-y)*ln(1-p)]`` over the batch.

    ``y`` holds 0/1 labels and ``p`` the predicted positive-class
    probability per sample.
    """
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if y.size == 0:
        raise ParameterError("cross-entropy needs at least one sample")
    if y.shape != p.shape:
        raise ParameterError(f"label/probability shape mismatch: {y.shape} vs {p.shape}")
    p = np.clip(p, CLIP_EPS, 1.0 - CLIP_EPS)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def bce_grad_probs(y: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Gradient of ``bce_loss`` with respect to the (N, 2) probability rows.

    Equals ``-onehot(y) / (N * p)`` elementwise; pushing it through the
    softmax backward yields the familiar ``(p - onehot(y)) / N``.
    """
    y = np.asarray(y)
    n = y.shape[0]
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), y.astype(np.intp)] = 1.0
    clipped = np.clip(probs, CLIP_EPS, 1.0 - CLIP_EPS)
    return (-onehot / clipped / n).astype(probs.dtype)
