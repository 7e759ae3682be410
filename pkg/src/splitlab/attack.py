"""Gradient-inversion reconstruction against the earlier split protocol.

That protocol had the client send both dJ/da_out (n x K) and dJ/dw (K x F)
in plaintext during the backward pass. Because the server layer is linear,
dJ/dw = (dJ/da_out)^T . a, so whenever the batch size equals the class
count the server recovers the activation map with one linear solve. The
revised protocol sends only dJ/da_out, which removes the attack's input;
``capture_gradients`` reports that case as not applicable.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ShapeError, SingularMatrixError

COND_LIMIT = 1e12


@dataclass
class LeakedGradients:
    """The plaintext pair the earlier protocol exposes each iteration."""

    grad_out: np.ndarray  # [n, K] dJ/da_out as the client sends it
    grad_w: np.ndarray  # [K, F] dJ/dw

    def __post_init__(self):
        if self.grad_out.ndim != 2 or self.grad_w.ndim != 2:
            raise ShapeError("leaked gradients must be matrices")
        if self.grad_out.shape[1] != self.grad_w.shape[0]:
            raise ShapeError(
                f"class counts disagree: {self.grad_out.shape} vs {self.grad_w.shape}"
            )

    @property
    def condition_number(self) -> float:
        return float(np.linalg.cond(self.grad_out))


@dataclass
class ProtocolCapture:
    """What a curious server can collect under a given protocol variant."""

    applicable: bool
    note: str
    leak: LeakedGradients | None = None
    true_activation: np.ndarray | None = None


def reconstruct_activation(leak: LeakedGradients) -> np.ndarray:
    """Solve (dJ/da_out)^T . a = dJ/dw for the activation map a (n x F).

    Requires a square, well-conditioned gradient matrix; the attacker
    arranges that by forcing the batch size to equal the class count.
    """
    n, k = leak.grad_out.shape
    if n != k:
        raise ShapeError(
            f"dJ/da_out is {n}x{k}; inversion needs batch size = class count "
            f"(the attacker trains with batch size {k})"
        )
    cond = leak.condition_number
    if not np.isfinite(cond) or cond >= COND_LIMIT:
        raise SingularMatrixError(f"gradient matrix condition number {cond:.3g}")
    return np.linalg.solve(leak.grad_out.T, leak.grad_w)


def capture_gradients(
    spec: nn.ModelSpec,
    client_params: dict[str, np.ndarray],
    linear_w: np.ndarray,
    linear_b: np.ndarray,
    x: np.ndarray,
    labels: np.ndarray,
    protocol: str = "prior",
) -> ProtocolCapture:
    """One honest forward/backward pass, recording what the server receives.

    protocol="prior": both gradients leak (dJ/dw computed by the same
    linear_backward code the training loop uses). protocol="fixed": only
    dJ/da_out is ever transmitted, so the capture is not applicable.
    """
    a_l, _ = nn.forward_client(x, spec, client_params)
    logits, cache = nn.linear_forward(a_l, linear_w, linear_b)
    probs = nn.softmax(logits)
    grad_out = nn.ce_softmax_grad(probs, labels)
    if protocol == "fixed":
        return ProtocolCapture(
            applicable=False,
            note="NOT-APPLICABLE: the revised protocol transmits only dJ/da_out; "
            "dJ/dw stays encrypted on the server",
            true_activation=a_l,
        )
    _, grad_w, _ = nn.linear_backward(grad_out, cache)
    return ProtocolCapture(
        applicable=True,
        note="prior protocol: client sent dJ/da_out and dJ/dw in plaintext",
        leak=LeakedGradients(grad_out=grad_out, grad_w=grad_w),
        true_activation=a_l,
    )


def oracle_leak(
    spec: nn.ModelSpec,
    client_params: dict[str, np.ndarray],
    linear_w: np.ndarray,
    linear_b: np.ndarray,
    x: np.ndarray,
    rng: np.random.Generator,
) -> LeakedGradients:
    """Well-conditioned leak for fidelity measurements.

    The true mean-CE softmax gradient has exactly-zero row sums, so the
    captured matrix is structurally singular and reconstruct (correctly)
    refuses it. This oracle keeps the real activations and the real backward
    code but substitutes a well-conditioned random gradient matrix, which
    isolates the algebra of the inversion from that degeneracy.
    """
    n = x.shape[0]
    k = linear_w.shape[0]
    if n != k:
        raise ShapeError(f"oracle leak needs batch size {k}, got {n}")
    a_l, _ = nn.forward_client(x, spec, client_params)
    _, cache = nn.linear_forward(a_l, linear_w, linear_b)
    grad_out = rng.normal(size=(n, k)) / n + 2.0 * np.eye(n) / n
    _, grad_w, _ = nn.linear_backward(grad_out, cache)
    return LeakedGradients(grad_out=grad_out, grad_w=grad_w)


def similarity_metrics(reconstructed: np.ndarray, truth: np.ndarray):
    """Per-sample (Pearson r, MSE) between reconstruction and ground truth."""
    if reconstructed.shape != truth.shape:
        raise ShapeError(f"shape mismatch {reconstructed.shape} vs {truth.shape}")
    out = []
    for rec, ref in zip(reconstructed, truth):
        rc = rec - rec.mean()
        fc = ref - ref.mean()
        denom = np.sqrt((rc * rc).sum() * (fc * fc).sum())
        r = float((rc * fc).sum() / denom) if denom > 0 else 0.0
        out.append((r, float(((rec - ref) ** 2).mean())))
    return out


def export_chunks(activation: np.ndarray, path, chunk: int = 32) -> int:
    """Write one activation map as chunk_index,position,value CSV rows.

    Mirrors the chunked plots used to eyeball reconstructions; returns the
    number of chunks written.
    """
    flat = np.asarray(activation, dtype=np.float64).ravel()
    n_chunks = -(-len(flat) // chunk)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["chunk_index", "position", "value"])
        for idx, value in enumerate(flat):
            writer.writerow([idx // chunk, idx % chunk, repr(float(value))])
    return n_chunks
