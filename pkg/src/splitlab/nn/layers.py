"""Hand-written forward/backward passes for every layer of the 1D CNN.

Conventions: batches are leading dimensions, float64 throughout, valid
(no-padding) convolutions with cross-correlation semantics. Each forward
returns (output, cache); the matching backward consumes the cache.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError


def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1):
    """x: [n, c_in, len], w: [c_out, c_in, m], b: [c_out] -> [n, c_out, out_len].

    out[i] = sum_j w[j] * x[i*stride + j] plus a per-channel bias; the kernel
    is not flipped. out_len = floor((len - m) / stride) + 1.
    """
    n, c_in, length = x.shape
    c_out, c_in_w, m = w.shape
    if c_in != c_in_w:
        raise ShapeError(f"input channels {c_in} != kernel channels {c_in_w}")
    if length < m:
        raise ShapeError(f"kernel size {m} larger than input length {length}")
    windows = np.lib.stride_tricks.sliding_window_view(x, m, axis=2)[:, :, ::stride]
    out = np.einsum("nciw,ocw->noi", windows, w, optimize=True) + b[None, :, None]
    return out, (x, w, stride)


def conv1d_backward(grad_out: np.ndarray, cache):
    """Returns (grad_x, grad_w, grad_b) for the cached forward pass."""
    x, w, stride = cache
    n, c_in, length = x.shape
    c_out, _, m = w.shape
    out_len = (length - m) // stride + 1
    if grad_out.shape != (n, c_out, out_len):
        raise ShapeError(f"grad shape {grad_out.shape} != {(n, c_out, out_len)}")
    windows = np.lib.stride_tricks.sliding_window_view(x, m, axis=2)[:, :, ::stride]
    grad_w = np.einsum("noi,nciw->ocw", grad_out, windows, optimize=True)
    grad_b = grad_out.sum(axis=(0, 2))
    grad_x = np.zeros_like(x)
    # scatter each output position's contribution back over its window
    for i in range(out_len):
        s = i * stride
        grad_x[:, :, s : s + m] += np.einsum("no,ocw->ncw", grad_out[:, :, i], w, optimize=True)
    return grad_x, grad_w, grad_b


def leaky_relu_forward(x: np.ndarray, alpha: float = 0.01):
    out = np.where(x >= 0, x, alpha * x)
    return out, (x, alpha)


def leaky_relu_backward(grad_out: np.ndarray, cache):
    x, alpha = cache
    # derivative at exactly zero follows the x >= 0 branch
    return grad_out * np.where(x >= 0, 1.0, alpha)


def maxpool1d_forward(x: np.ndarray, window: int):
    """Non-overlapping max pooling; a trailing remainder is dropped."""
    n, c, length = x.shape
    out_len = length // window
    if out_len == 0:
        raise ShapeError(f"window {window} larger than input length {length}")
    trimmed = x[:, :, : out_len * window].reshape(n, c, out_len, window)
    # argmax takes the first maximum, which breaks ties toward the lowest index
    arg = trimmed.argmax(axis=3)
    out = np.take_along_axis(trimmed, arg[..., None], axis=3)[..., 0]
    return out, (x.shape, window, arg)


def maxpool1d_backward(grad_out: np.ndarray, cache):
    x_shape, window, arg = cache
    n, c, length = x_shape
    out_len = length // window
    if grad_out.shape != (n, c, out_len):
        raise ShapeError(f"grad shape {grad_out.shape} != {(n, c, out_len)}")
    grad_x = np.zeros(x_shape, dtype=grad_out.dtype)
    view = grad_x[:, :, : out_len * window].reshape(n, c, out_len, window)
    np.put_along_axis(view, arg[..., None], grad_out[..., None], axis=3)
    return grad_x


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """x: [n, f_in], w: [f_out, f_in], b: [f_out] -> x @ w.T + b."""
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"features {x.shape[1]} != weight columns {w.shape[1]}")
    return x @ w.T + b, (x, w)


def linear_backward(grad_out: np.ndarray, cache):
    x, w = cache
    if grad_out.shape != (x.shape[0], w.shape[0]):
        raise ShapeError(f"grad shape {grad_out.shape} != {(x.shape[0], w.shape[0])}")
    grad_w = grad_out.T @ x
    grad_x = grad_out @ w
    grad_b = grad_out.sum(axis=0)
    return grad_x, grad_w, grad_b
