"""Softmax classifier head: probabilities, cross entropy, fused gradient."""

from __future__ import annotations

import numpy as np

EPS = 1e-12


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise softmax, max-subtracted for stability."""
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood; probabilities clamped at 1e-12."""
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(picked, EPS)).mean())


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), num_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def ce_softmax_grad(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """d(mean CE)/d(logits) for softmax outputs: (probs - onehot) / n."""
    n, k = probs.shape
    return (probs - one_hot(labels, k)) / n
