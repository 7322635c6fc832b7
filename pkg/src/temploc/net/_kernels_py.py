"""NumPy fallback for the 3D conv / pool kernels.

Same contracts as the compiled extension (``_kernels.pyx``): convolution is
3x3x3, stride 1, same-padding; pooling is 2x2 spatial with stride 2 and a
configurable temporal kernel/stride, truncating odd extents.  All arrays are
float64; pooling argmax indices are flat positions into the input array.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _check_conv_args(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> None:
    if x.ndim != 5:
        raise ValueError(f"expected input (N, C, T, H, W), got shape {x.shape}")
    if weight.shape[1:] != (x.shape[1], 3, 3, 3):
        raise ValueError(
            f"expected weight (Cout, {x.shape[1]}, 3, 3, 3), got shape {weight.shape}"
        )
    if bias.shape != (weight.shape[0],):
        raise ValueError(f"expected bias ({weight.shape[0]},), got shape {bias.shape}")


def _columns(x: np.ndarray) -> np.ndarray:
    """im2col for a 3x3x3 same-padded window: (N*T*H*W, C*27)."""
    n, c, t, h, w = x.shape
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1), (1, 1)))
    win = sliding_window_view(padded, (3, 3, 3), axis=(2, 3, 4))
    return win.transpose(0, 2, 3, 4, 1, 5, 6, 7).reshape(n * t * h * w, c * 27)


def conv3d_forward(x, weight, bias):
    x = np.ascontiguousarray(x, dtype=np.float64)
    weight = np.ascontiguousarray(weight, dtype=np.float64)
    bias = np.ascontiguousarray(bias, dtype=np.float64)
    _check_conv_args(x, weight, bias)
    n, _, t, h, w = x.shape
    co = weight.shape[0]
    y = _columns(x) @ weight.reshape(co, -1).T
    y += bias
    return np.ascontiguousarray(y.reshape(n, t, h, w, co).transpose(0, 4, 1, 2, 3))


def conv3d_backward(x, weight, dy):
    x = np.ascontiguousarray(x, dtype=np.float64)
    weight = np.ascontiguousarray(weight, dtype=np.float64)
    dy = np.ascontiguousarray(dy, dtype=np.float64)
    co, ci = weight.shape[:2]
    _check_conv_args(x, weight, np.zeros(co))
    if dy.shape != (x.shape[0], co, *x.shape[2:]):
        raise ValueError(f"upstream gradient shape {dy.shape} does not match")

    db = dy.sum(axis=(0, 2, 3, 4))
    dy_rows = dy.transpose(0, 2, 3, 4, 1).reshape(-1, co)
    dw = (dy_rows.T @ _columns(x)).reshape(weight.shape)
    # input gradient = same-conv of dy with the kernel flipped and channels swapped
    flipped = np.ascontiguousarray(
        weight[:, :, ::-1, ::-1, ::-1].transpose(1, 0, 2, 3, 4)
    )
    dx = conv3d_forward(dy, flipped, np.zeros(ci))
    return dx, dw, db


def pool3d_forward(x, temporal_kernel, temporal_stride):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 5:
        raise ValueError(f"expected input (N, C, T, H, W), got shape {x.shape}")
    n, c, t, h, w = x.shape
    kt, st = int(temporal_kernel), int(temporal_stride)
    if kt < 1 or st < 1:
        raise ValueError("temporal kernel and stride must be >= 1")
    if t < kt or h < 2 or w < 2:
        raise ValueError(f"input {x.shape} too small for pooling kernel ({kt}, 2, 2)")

    win = sliding_window_view(x, (kt, 2, 2), axis=(2, 3, 4))[:, :, ::st, ::2, ::2]
    to, ho, wo = win.shape[2:5]
    flat = win.reshape(n, c, to, ho, wo, kt * 4)
    local = flat.argmax(axis=-1)
    y = np.take_along_axis(flat, local[..., None], axis=-1)[..., 0]

    dt = local // 4
    dh = (local % 4) // 2
    dw = local % 2
    tt = np.arange(to).reshape(1, 1, to, 1, 1) * st + dt
    hh = np.arange(ho).reshape(1, 1, 1, ho, 1) * 2 + dh
    ww = np.arange(wo).reshape(1, 1, 1, 1, wo) * 2 + dw
    nn = np.arange(n).reshape(n, 1, 1, 1, 1)
    cc = np.arange(c).reshape(1, c, 1, 1, 1)
    idx = (((nn * c + cc) * t + tt) * h + hh) * w + ww
    return np.ascontiguousarray(y), np.ascontiguousarray(idx, dtype=np.int64)


def pool3d_backward(idx, input_shape, dy):
    dy = np.ascontiguousarray(dy, dtype=np.float64)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.shape != dy.shape:
        raise ValueError(f"index shape {idx.shape} does not match gradient {dy.shape}")
    dx = np.zeros(int(np.prod(input_shape)))
    np.add.at(dx, idx.reshape(-1), dy.reshape(-1))
    return dx.reshape(input_shape)
