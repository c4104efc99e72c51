"""Numba-jitted convolution kernels (stride 1, symmetric zero padding).

Jitted direct loops only pay off for grouped (depthwise) kernels, where the
per-group GEMM degenerates; dense convolutions are fastest as one im2col
GEMM, so those shapes are delegated to the pure-numpy implementation. The
innermost loops run contiguously along the output row so LLVM can vectorize
them. Each parallel thread owns a disjoint slice of the output and reduces
serially inside it, so results are bit-reproducible run to run; fastmath
stays off for the same reason.
"""

import numpy as np
from numba import njit, prange

from . import kernels_numpy as _gemm


@njit(parallel=True, cache=True)
def _forward_grouped(x, w, pad, groups):
    b, cin, h, wdt = x.shape
    cout, cg, kh, kw = w.shape
    do = cout // groups
    ho = h + 2 * pad - kh + 1
    wo = wdt + 2 * pad - kw + 1
    y = np.zeros((b, cout, ho, wo), dtype=x.dtype)
    for bo in prange(b * cout):
        bi = bo // cout
        o = bo % cout
        c0 = (o // do) * cg
        acc = np.zeros(wo, dtype=x.dtype)
        for i in range(ho):
            for j in range(wo):
                acc[j] = 0.0
            for c in range(cg):
                xc = x[bi, c0 + c]
                for ki in range(kh):
                    ii = i + ki - pad
                    if ii < 0 or ii >= h:
                        continue
                    xrow = xc[ii]
                    for kj in range(kw):
                        wv = w[o, c, ki, kj]
                        off = kj - pad
                        j_lo = max(0, -off)
                        j_hi = min(wo, wdt - off)
                        for j in range(j_lo, j_hi):
                            acc[j] += xrow[j + off] * wv
            for j in range(wo):
                y[bi, o, i, j] = acc[j]
    return y


@njit(parallel=True, cache=True)
def _grad_input(gy, w, b, cin, h, wdt, pad, groups):
    cout, cg, kh, kw = w.shape
    do = cout // groups
    ho = gy.shape[2]
    wo = gy.shape[3]
    gx = np.zeros((b, cin, h, wdt), dtype=gy.dtype)
    for bc in prange(b * cin):
        bi = bc // cin
        ci = bc % cin
        c = ci % cg
        o0 = (ci // cg) * do
        acc = np.zeros(wdt, dtype=gy.dtype)
        for u in range(h):
            for v in range(wdt):
                acc[v] = 0.0
            for d in range(do):
                o = o0 + d
                go = gy[bi, o]
                for ki in range(kh):
                    i = u - ki + pad
                    if i < 0 or i >= ho:
                        continue
                    grow = go[i]
                    for kj in range(kw):
                        wv = w[o, c, ki, kj]
                        off = pad - kj
                        v_lo = max(0, -off)
                        v_hi = min(wdt, wo - off)
                        for v in range(v_lo, v_hi):
                            acc[v] += grow[v + off] * wv
            for v in range(wdt):
                gx[bi, ci, u, v] = acc[v]
    return gx


@njit(parallel=True, cache=True)
def _grad_weight(gy, x, cout, cg, kh, kw, pad, groups):
    b, cin, h, wdt = x.shape
    do = cout // groups
    ho = gy.shape[2]
    wo = gy.shape[3]
    gw = np.zeros((cout, cg, kh, kw), dtype=gy.dtype)
    for o in prange(cout):
        c0 = (o // do) * cg
        for c in range(cg):
            xc0 = c0 + c
            for ki in range(kh):
                i_lo = max(0, pad - ki)
                i_hi = min(ho, h + pad - ki)
                for kj in range(kw):
                    off = kj - pad
                    j_lo = max(0, -off)
                    j_hi = min(wo, wdt - off)
                    acc = gw[o, c, ki, kj]
                    for bi in range(b):
                        go = gy[bi, o]
                        xc = x[bi, xc0]
                        for i in range(i_lo, i_hi):
                            grow = go[i]
                            xrow = xc[i + ki - pad]
                            for j in range(j_lo, j_hi):
                                acc += grow[j] * xrow[j + off]
                    gw[o, c, ki, kj] = acc
    return gw


def conv2d_forward(x, w, pad, groups):
    if groups == 1:
        return _gemm.conv2d_forward(x, w, pad, groups)
    return _forward_grouped(x, w, pad, groups)


def conv2d_grad_input(gy, w, x_shape, pad, groups):
    if groups == 1:
        return _gemm.conv2d_grad_input(gy, w, x_shape, pad, groups)
    b, cin, h, wdt = x_shape
    return _grad_input(np.ascontiguousarray(gy), w, b, cin, h, wdt, pad, groups)


def conv2d_grad_weight(gy, x, w_shape, pad, groups):
    if groups == 1:
        return _gemm.conv2d_grad_weight(gy, x, w_shape, pad, groups)
    cout, cg, kh, kw = w_shape
    return _grad_weight(np.ascontiguousarray(gy), x, cout, cg, kh, kw, pad, groups)
