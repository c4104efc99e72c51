"""Pure-numpy convolution kernels (stride 1, symmetric zero padding).

Ungrouped convolutions run as one GEMM over an im2col matrix; grouped
(depthwise) convolutions contract sliding-window views with einsum. This
module is the fallback path when numba is unavailable or disabled via
WDCI_BACKEND=numpy.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _im2col(x, kh, kw, pad):
    """(B, C, H, W) -> column matrix (B*Ho*Wo, C*KH*KW) plus (Ho, Wo)."""
    if pad > 0:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))  # B,C,Ho,Wo,KH,KW
    ho, wo = win.shape[2], win.shape[3]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5))
    return cols.reshape(-1, x.shape[1] * kh * kw), ho, wo


def conv2d_forward(x, w, pad, groups):
    b = x.shape[0]
    cout, cg, kh, kw = w.shape
    if groups == 1:
        cols, ho, wo = _im2col(x, kh, kw, pad)
        y = cols @ w.reshape(cout, -1).T
        return np.ascontiguousarray(y.reshape(b, ho, wo, cout).transpose(0, 3, 1, 2))
    cin = x.shape[1]
    do = cout // groups
    if pad > 0:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    ho, wo = win.shape[2], win.shape[3]
    win = win.reshape(b, groups, cg, ho, wo, kh, kw)
    wg = w.reshape(groups, do, cg, kh, kw)
    y = np.einsum("bgchwkl,gdckl->bgdhw", win, wg, optimize=True)
    return np.ascontiguousarray(y.reshape(b, cout, ho, wo))


def conv2d_grad_input(gy, w, x_shape, pad, groups):
    b, cin, h, wdt = x_shape
    cout, cg, kh, kw = w.shape
    do = cout // groups
    # Gather form: correlate the padded output gradient with the flipped kernel.
    fp = (kh - 1 - pad, kw - 1 - pad)
    gp = np.pad(gy, ((0, 0), (0, 0), (fp[0], fp[0]), (fp[1], fp[1])))
    if groups == 1:
        cols, ho, wo = _im2col(gp, kh, kw, 0)
        wf = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        gx = cols @ wf.reshape(cin, -1).T
        return np.ascontiguousarray(gx.reshape(b, h, wdt, cin).transpose(0, 3, 1, 2))
    win = sliding_window_view(gp, (kh, kw), axis=(2, 3))
    win = win.reshape(b, groups, do, h, wdt, kh, kw)
    wf = w.reshape(groups, do, cg, kh, kw)[..., ::-1, ::-1]
    gx = np.einsum("bgdhwkl,gdckl->bgchw", win, wf, optimize=True)
    return np.ascontiguousarray(gx.reshape(x_shape))


def conv2d_grad_weight(gy, x, w_shape, pad, groups):
    b, cin, h, wdt = x.shape
    cout, cg, kh, kw = w_shape
    do = cout // groups
    if groups == 1:
        cols, ho, wo = _im2col(x, kh, kw, pad)
        g2 = np.ascontiguousarray(gy.transpose(0, 2, 3, 1)).reshape(-1, cout)
        gw = g2.T @ cols
        return np.ascontiguousarray(gw.reshape(w_shape))
    if pad > 0:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    ho, wo = win.shape[2], win.shape[3]
    win = win.reshape(b, groups, cg, ho, wo, kh, kw)
    gyg = gy.reshape(b, groups, do, ho, wo)
    gw = np.einsum("bgchwkl,bgdhw->gdckl", win, gyg, optimize=True)
    return np.ascontiguousarray(gw.reshape(w_shape))
