"""Dense numeric kernels and their gradients.

Tensors are plain numpy arrays: C-contiguous (row-major) float32 in normal
use, float64 inside gradient-check harnesses. Every kernel keeps the dtype of
its inputs, so the same code path serves both precisions.

Convolutions follow the cross-correlation convention (no kernel flip).
Image-shaped tensors may be given as ``C x H x W`` or batched ``N x C x H x W``;
the result has the same rank as the input.
"""
from __future__ import annotations

from typing import Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .rng import Rng

Pad = Union[int, Tuple[int, int]]


def he_init(shape: Sequence[int], fan_in: int, rng: Rng, dtype=np.float32) -> np.ndarray:
    """Zero-mean normal draws with variance ``2 / fan_in``."""
    shape = tuple(int(s) for s in shape)
    if not shape:
        raise ValueError("he_init: empty shape")
    if any(s < 1 for s in shape):
        raise ValueError(f"he_init: non-positive dimension in {shape}")
    if fan_in < 1:
        raise ValueError(f"he_init: fan_in must be >= 1, got {fan_in}")
    std = np.sqrt(2.0 / fan_in)
    return (rng.standard_normal(shape) * std).astype(dtype)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def _pads(pad: Pad) -> Tuple[int, int]:
    if isinstance(pad, (tuple, list)):
        before, after = (int(p) for p in pad)
    else:
        before = after = int(pad)
    if before < 0 or after < 0:
        raise ValueError(f"padding must be >= 0, got {pad}")
    return before, after


def conv_output_size(size: int, k: int, stride: int, pad: Pad) -> int:
    """Output extent of a strided window; raises when it is not integral."""
    if k < 1 or k % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {k}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    before, after = _pads(pad)
    span = size + before + after - k
    if span < 0 or span % stride:
        raise ValueError(
            f"output size ({size}+{before}+{after}-{k})/{stride}+1 is not a positive integer"
        )
    return span // stride + 1


def same_padding(size: int, k: int, stride: int) -> Tuple[int, int]:
    """TF-style 'same' padding: output = ceil(size / stride), extra pad at the end."""
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    return total // 2, total - total // 2


def _batched(x: np.ndarray) -> Tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ValueError(f"expected C x H x W or N x C x H x W, got shape {x.shape}")


def _pad_input(x: np.ndarray, pad: Pad) -> np.ndarray:
    before, after = _pads(pad)
    if before == 0 and after == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (before, after), (before, after)))


def _windows(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    return win[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]


def _check_conv(x: np.ndarray, kernels: np.ndarray, stride: int, pad: Pad):
    if kernels.ndim != 4 or kernels.shape[2] != kernels.shape[3]:
        raise ValueError(f"kernels must be C_out x C_in x k x k, got {kernels.shape}")
    if x.shape[1] != kernels.shape[1]:
        raise ValueError(f"channel mismatch: input has {x.shape[1]}, kernels expect {kernels.shape[1]}")
    k = kernels.shape[2]
    return conv_output_size(x.shape[2], k, stride, pad), conv_output_size(x.shape[3], k, stride, pad)


def conv2d_forward(x: np.ndarray, kernels: np.ndarray, stride: int = 1, pad: Pad = 0) -> np.ndarray:
    xb, single = _batched(x)
    ho, wo = _check_conv(xb, kernels, stride, pad)
    k = kernels.shape[2]
    n, c = xb.shape[:2]
    if k == 1 and stride == 1 and _pads(pad) == (0, 0):
        out = np.matmul(kernels[:, :, 0, 0], xb.reshape(n, c, -1)).reshape(n, -1, ho, wo)
    else:
        win = _windows(_pad_input(xb, pad), k, stride, ho, wo)
        out = np.tensordot(win, kernels, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out)
    return out[0] if single else out


def conv2d_backward(x, kernels, grad_out, stride: int = 1, pad: Pad = 0):
    """Return ``(grad_input, grad_kernels)`` for :func:`conv2d_forward`."""
    xb, single = _batched(x)
    gb, _ = _batched(grad_out)
    ho, wo = _check_conv(xb, kernels, stride, pad)
    if gb.shape != (xb.shape[0], kernels.shape[0], ho, wo):
        raise ValueError(f"grad_out shape {grad_out.shape} does not match forward output")
    k = kernels.shape[2]
    n, c, h, w = xb.shape
    if k == 1 and stride == 1 and _pads(pad) == (0, 0):
        w2 = kernels[:, :, 0, 0]
        g2 = gb.reshape(n, -1, h * w)
        gw = np.tensordot(g2, xb.reshape(n, c, -1), axes=([0, 2], [0, 2]))[:, :, None, None]
        gx = np.matmul(w2.T, g2).reshape(xb.shape)
    else:
        xp = _pad_input(xb, pad)
        win = _windows(xp, k, stride, ho, wo)
        gw = np.tensordot(gb, win, axes=([0, 2, 3], [0, 2, 3]))
        gxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                contrib = np.tensordot(gb, kernels[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
                gxp[:, :, i : i + (ho - 1) * stride + 1 : stride, j : j + (wo - 1) * stride + 1 : stride] += contrib
        before, _ = _pads(pad)
        gx = gxp[:, :, before : before + h, before : before + w]
    gx = np.ascontiguousarray(gx)
    return (gx[0] if single else gx), np.ascontiguousarray(gw)


def depthwise_conv2d_forward(x: np.ndarray, kernels: np.ndarray, stride: int = 1, pad: Pad = 0) -> np.ndarray:
    """Per-channel spatial convolution; ``kernels`` has shape C x k x k."""
    xb, single = _batched(x)
    if kernels.ndim != 3 or kernels.shape[0] != xb.shape[1]:
        raise ValueError(f"depthwise kernels {kernels.shape} do not match {xb.shape[1]} channels")
    k = kernels.shape[1]
    ho = conv_output_size(xb.shape[2], k, stride, pad)
    wo = conv_output_size(xb.shape[3], k, stride, pad)
    xp = _pad_input(xb, pad)
    out = np.zeros((xb.shape[0], xb.shape[1], ho, wo), dtype=np.result_type(x, kernels))
    for i in range(k):
        for j in range(k):
            out += kernels[None, :, i, j, None, None] * xp[
                :, :, i : i + (ho - 1) * stride + 1 : stride, j : j + (wo - 1) * stride + 1 : stride
            ]
    return out[0] if single else out


def depthwise_conv2d_backward(x, kernels, grad_out, stride: int = 1, pad: Pad = 0):
    xb, single = _batched(x)
    gb, _ = _batched(grad_out)
    k = kernels.shape[1]
    ho = conv_output_size(xb.shape[2], k, stride, pad)
    wo = conv_output_size(xb.shape[3], k, stride, pad)
    if gb.shape != (xb.shape[0], xb.shape[1], ho, wo):
        raise ValueError(f"grad_out shape {grad_out.shape} does not match forward output")
    xp = _pad_input(xb, pad)
    gxp = np.zeros_like(xp)
    gw = np.empty_like(kernels)
    for i in range(k):
        for j in range(k):
            sl = (slice(None), slice(None),
                  slice(i, i + (ho - 1) * stride + 1, stride),
                  slice(j, j + (wo - 1) * stride + 1, stride))
            gw[:, i, j] = np.einsum("nchw,nchw->c", gb, xp[sl])
            gxp[sl] += gb * kernels[None, :, i, j, None, None]
    before, _ = _pads(pad)
    gx = np.ascontiguousarray(gxp[:, :, before : before + xb.shape[2], before : before + xb.shape[3]])
    return (gx[0] if single else gx), gw


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """Mean over the two spatial axes: ``C x H x W -> C`` (or batched)."""
    if x.ndim not in (3, 4) or x.shape[-1] < 1 or x.shape[-2] < 1:
        raise ValueError(f"global_avg_pool expects non-empty spatial axes, got {x.shape}")
    return x.mean(axis=(-2, -1))


def global_avg_pool_backward(grad: np.ndarray, input_shape: Sequence[int]) -> np.ndarray:
    h, w = input_shape[-2], input_shape[-1]
    scaled = grad / (h * w)
    return np.ascontiguousarray(np.broadcast_to(scaled[..., None, None], tuple(input_shape)))


def argmax(v) -> int:
    """Index of the largest entry; the lowest index wins ties."""
    v = np.asarray(v)
    if v.size == 0:
        raise ValueError("argmax of an empty tensor")
    return int(np.argmax(v))
