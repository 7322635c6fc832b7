# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled 3D conv / pool kernels.

Drop-in twin of ``_kernels_py``: 3x3x3 same-padded stride-1 convolution and
2x2/2 spatial max-pooling with configurable temporal kernel/stride.  The
pooling argmax takes the first maximum in (t, h, w) scan order, matching
numpy's argmax on the flattened window.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def conv3d_forward(x, weight, bias):
    x = np.ascontiguousarray(x, dtype=np.float64)
    weight = np.ascontiguousarray(weight, dtype=np.float64)
    bias = np.ascontiguousarray(bias, dtype=np.float64)
    if x.ndim != 5:
        raise ValueError(f"expected input (N, C, T, H, W), got shape {x.shape}")
    if weight.shape[1:] != (x.shape[1], 3, 3, 3):
        raise ValueError(
            f"expected weight (Cout, {x.shape[1]}, 3, 3, 3), got shape {weight.shape}"
        )
    if bias.shape != (weight.shape[0],):
        raise ValueError(f"expected bias ({weight.shape[0]},), got shape {bias.shape}")

    cdef double[:, :, :, :, ::1] xv = x
    cdef double[:, :, :, :, ::1] wv = weight
    cdef double[::1] bv = bias
    cdef Py_ssize_t n = xv.shape[0], ci = xv.shape[1]
    cdef Py_ssize_t t = xv.shape[2], h = xv.shape[3], w = xv.shape[4]
    cdef Py_ssize_t co = wv.shape[0]

    out = np.empty((n, co, t, h, w))
    cdef double[:, :, :, :, ::1] yv = out
    cdef Py_ssize_t i, o, c, tt, hh, ww, dt, dh, dw, st, sh, sw
    cdef double acc

    for i in range(n):
        for o in range(co):
            for tt in range(t):
                for hh in range(h):
                    for ww in range(w):
                        acc = bv[o]
                        for c in range(ci):
                            for dt in range(3):
                                st = tt + dt - 1
                                if st < 0 or st >= t:
                                    continue
                                for dh in range(3):
                                    sh = hh + dh - 1
                                    if sh < 0 or sh >= h:
                                        continue
                                    for dw in range(3):
                                        sw = ww + dw - 1
                                        if sw < 0 or sw >= w:
                                            continue
                                        acc += xv[i, c, st, sh, sw] * wv[o, c, dt, dh, dw]
                        yv[i, o, tt, hh, ww] = acc
    return out


def conv3d_backward(x, weight, dy):
    x = np.ascontiguousarray(x, dtype=np.float64)
    weight = np.ascontiguousarray(weight, dtype=np.float64)
    dy = np.ascontiguousarray(dy, dtype=np.float64)
    if weight.shape[1:] != (x.shape[1], 3, 3, 3):
        raise ValueError(
            f"expected weight (Cout, {x.shape[1]}, 3, 3, 3), got shape {weight.shape}"
        )
    if dy.shape != (x.shape[0], weight.shape[0]) + x.shape[2:]:
        raise ValueError(f"upstream gradient shape {dy.shape} does not match")

    cdef double[:, :, :, :, ::1] xv = x
    cdef double[:, :, :, :, ::1] wv = weight
    cdef double[:, :, :, :, ::1] gv = dy
    cdef Py_ssize_t n = xv.shape[0], ci = xv.shape[1]
    cdef Py_ssize_t t = xv.shape[2], h = xv.shape[3], w = xv.shape[4]
    cdef Py_ssize_t co = wv.shape[0]

    dx_arr = np.zeros_like(x)
    dw_arr = np.zeros_like(weight)
    db_arr = np.zeros(co)
    cdef double[:, :, :, :, ::1] dxv = dx_arr
    cdef double[:, :, :, :, ::1] dwv = dw_arr
    cdef double[::1] dbv = db_arr
    cdef Py_ssize_t i, o, c, tt, hh, ww, dt, dh, dw, st, sh, sw
    cdef double g

    for i in range(n):
        for o in range(co):
            for tt in range(t):
                for hh in range(h):
                    for ww in range(w):
                        g = gv[i, o, tt, hh, ww]
                        dbv[o] += g
                        for c in range(ci):
                            for dt in range(3):
                                st = tt + dt - 1
                                if st < 0 or st >= t:
                                    continue
                                for dh in range(3):
                                    sh = hh + dh - 1
                                    if sh < 0 or sh >= h:
                                        continue
                                    for dw in range(3):
                                        sw = ww + dw - 1
                                        if sw < 0 or sw >= w:
                                            continue
                                        dwv[o, c, dt, dh, dw] += g * xv[i, c, st, sh, sw]
                                        dxv[i, c, st, sh, sw] += g * wv[o, c, dt, dh, dw]
    return dx_arr, dw_arr, db_arr


def pool3d_forward(x, temporal_kernel, temporal_stride):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 5:
        raise ValueError(f"expected input (N, C, T, H, W), got shape {x.shape}")
    cdef Py_ssize_t kt = temporal_kernel, st = temporal_stride
    if kt < 1 or st < 1:
        raise ValueError("temporal kernel and stride must be >= 1")

    cdef double[:, :, :, :, ::1] xv = x
    cdef Py_ssize_t n = xv.shape[0], c = xv.shape[1]
    cdef Py_ssize_t t = xv.shape[2], h = xv.shape[3], w = xv.shape[4]
    if t < kt or h < 2 or w < 2:
        raise ValueError(f"input {x.shape} too small for pooling kernel ({kt}, 2, 2)")
    cdef Py_ssize_t to = (t - kt) // st + 1, ho = h // 2, wo = w // 2

    y_arr = np.empty((n, c, to, ho, wo))
    idx_arr = np.empty((n, c, to, ho, wo), dtype=np.int64)
    cdef double[:, :, :, :, ::1] yv = y_arr
    cdef cnp.int64_t[:, :, :, :, ::1] iv = idx_arr
    cdef Py_ssize_t i, cc, ot, oh, ow, dt, dh, dw, tt, hh, ww
    cdef Py_ssize_t best_t, best_h, best_w
    cdef double best, val

    for i in range(n):
        for cc in range(c):
            for ot in range(to):
                for oh in range(ho):
                    for ow in range(wo):
                        best = -np.inf
                        best_t = best_h = best_w = 0
                        for dt in range(kt):
                            tt = ot * st + dt
                            for dh in range(2):
                                hh = oh * 2 + dh
                                for dw in range(2):
                                    ww = ow * 2 + dw
                                    val = xv[i, cc, tt, hh, ww]
                                    if val > best:
                                        best = val
                                        best_t = tt
                                        best_h = hh
                                        best_w = ww
                        yv[i, cc, ot, oh, ow] = best
                        iv[i, cc, ot, oh, ow] = (
                            ((i * c + cc) * t + best_t) * h + best_h
                        ) * w + best_w
    return y_arr, idx_arr


def pool3d_backward(idx, input_shape, dy):
    dy = np.ascontiguousarray(dy, dtype=np.float64)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    if idx.shape != dy.shape:
        raise ValueError(f"index shape {idx.shape} does not match gradient {dy.shape}")

    dx_arr = np.zeros(int(np.prod(input_shape)))
    cdef double[::1] dxv = dx_arr
    cdef double[::1] gv = dy.reshape(-1)
    cdef cnp.int64_t[::1] iv = idx.reshape(-1)
    cdef Py_ssize_t k
    for k in range(iv.shape[0]):
        dxv[iv[k]] += gv[k]
    return dx_arr.reshape(input_shape)
