"""Orthonormal Haar wavelet transforms for images and feature maps.

One decomposition level splits a (B, C, H, W) array into four half-resolution
subbands: the approximation cA and three detail bands. Band convention, used
consistently everywhere:

    cA = (x00 + x01 + x10 + x11) / 2   approximation (low/low)
    cH = (x00 - x01 + x10 - x11) / 2   horizontal detail: high-pass across
                                       columns, so it responds to vertical edges
    cV = (x00 + x01 - x10 - x11) / 2   vertical detail: high-pass across rows
    cD = (x00 - x01 - x10 + x11) / 2   diagonal detail

where x00 = x[..., 0::2, 0::2] etc. The 1/2 normalization makes the transform
orthonormal: energy is preserved and the inverse equals the adjoint, which is
also what makes the differentiable wrappers below exact.

Multi-level decomposition pads reflectively to a multiple of 2^L and records
the padding so reconstruction restores the original size bit for bit (up to
float roundoff).
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ArgumentError, DimensionError, ShapeError, StructureError
from .images import from_bchw, to_bchw


@dataclass
class WaveletBands:
    """Subbands of one decomposition level, each (B, C, H/2, W/2)."""

    cA: np.ndarray
    cH: np.ndarray
    cV: np.ndarray
    cD: np.ndarray

    def all_bands(self):
        return self.cA, self.cH, self.cV, self.cD


@dataclass
class WaveletPyramid:
    """Bands for levels 1..L plus the padding applied before level 1."""

    levels: list
    pad: tuple = (0, 0)
    orig_shape: tuple = field(default=None)


def _check_even(x):
    if x.ndim != 4:
        raise ShapeError(f"expected rank-4 (B, C, H, W), got shape {x.shape}")
    if x.shape[2] % 2:
        raise DimensionError(f"height {x.shape[2]} is odd; transform needs even dims")
    if x.shape[3] % 2:
        raise DimensionError(f"width {x.shape[3]} is odd; transform needs even dims")


def dwt2(x) -> WaveletBands:
    """Single-level forward transform, applied independently per channel."""
    x = np.asarray(x)
    _check_even(x)
    x00 = x[..., 0::2, 0::2]
    x01 = x[..., 0::2, 1::2]
    x10 = x[..., 1::2, 0::2]
    x11 = x[..., 1::2, 1::2]
    return WaveletBands(
        cA=(x00 + x01 + x10 + x11) * 0.5,
        cH=(x00 - x01 + x10 - x11) * 0.5,
        cV=(x00 + x01 - x10 - x11) * 0.5,
        cD=(x00 - x01 - x10 + x11) * 0.5,
    )


def idwt2(bands: WaveletBands) -> np.ndarray:
    """Exact inverse of dwt2."""
    ca, ch, cv, cd = (np.asarray(b) for b in bands.all_bands())
    for name, b in (("cH", ch), ("cV", cv), ("cD", cd)):
        if b.shape != ca.shape:
            raise ShapeError(f"band {name} shape {b.shape} != cA shape {ca.shape}")
    b, c, h, w = ca.shape
    out = np.empty((b, c, 2 * h, 2 * w), dtype=ca.dtype)
    out[..., 0::2, 0::2] = (ca + ch + cv + cd) * 0.5
    out[..., 0::2, 1::2] = (ca - ch + cv - cd) * 0.5
    out[..., 1::2, 0::2] = (ca + ch - cv - cd) * 0.5
    out[..., 1::2, 1::2] = (ca - ch - cv + cd) * 0.5
    return out


def _pad_reflect(x, multiple):
    h, w = x.shape[2], x.shape[3]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="reflect")
    return x, (ph, pw)


def decompose(x, levels: int) -> WaveletPyramid:
    """Multi-level transform: level i+1 decomposes level i's approximation."""
    if levels < 1:
        raise ArgumentError(f"levels must be >= 1, got {levels}")
    x = np.asarray(x)
    if x.ndim != 4:
        raise ShapeError(f"expected rank-4 (B, C, H, W), got shape {x.shape}")
    orig = x.shape
    x, pad = _pad_reflect(x, 2**levels)
    out = []
    a = x
    for _ in range(levels):
        bands = dwt2(a)
        out.append(bands)
        a = bands.cA
    return WaveletPyramid(levels=out, pad=pad, orig_shape=orig)


def reconstruct(p: WaveletPyramid) -> np.ndarray:
    """Inverse of decompose; strips any recorded padding."""
    if not p.levels:
        raise StructureError("pyramid has no levels to reconstruct from")
    a = p.levels[-1].cA
    for bands in reversed(p.levels):
        a = idwt2(WaveletBands(cA=a, cH=bands.cH, cV=bands.cV, cD=bands.cD))
    ph, pw = p.pad
    if ph or pw:
        a = a[..., : a.shape[2] - ph, : a.shape[3] - pw]
    return np.ascontiguousarray(a)


def low_frequency_exchange(i_low, i_normal, levels: int = 3):
    """Swap the deepest approximation bands of two images and reconstruct.

    Returns (s_normal, s_low): s_normal combines the normal-light
    approximation with the low-light detail bands, s_low the converse.
    """
    low, layout = to_bchw(i_low)
    normal, layout2 = to_bchw(i_normal)
    if low.shape != normal.shape or layout != layout2:
        raise ShapeError(
            f"image shapes differ: {np.asarray(i_low).shape} vs {np.asarray(i_normal).shape}"
        )
    p_low = decompose(low, levels)
    p_normal = decompose(normal, levels)

    def swap(approx_of, details_of):
        lv = [
            WaveletBands(cA=a.cA, cH=d.cH, cV=d.cV, cD=d.cD)
            for a, d in zip(approx_of.levels, details_of.levels)
        ]
        return reconstruct(WaveletPyramid(lv, pad=approx_of.pad, orig_shape=approx_of.orig_shape))

    s_normal = swap(p_normal, p_low)
    s_low = swap(p_low, p_normal)
    return from_bchw(s_normal, layout), from_bchw(s_low, layout)


# -- differentiable wrappers ---------------------------------------------------
# The transform is orthonormal, so the adjoint (backward) of the forward
# transform is the inverse transform applied to the band gradients, and
# vice versa.

_SIGNS = {
    "cA": (1.0, 1.0, 1.0, 1.0),
    "cH": (1.0, -1.0, 1.0, -1.0),
    "cV": (1.0, 1.0, -1.0, -1.0),
    "cD": (1.0, -1.0, -1.0, 1.0),
}


def _band(x, signs):
    s0, s1, s2, s3 = signs
    return (
        s0 * x[..., 0::2, 0::2]
        + s1 * x[..., 0::2, 1::2]
        + s2 * x[..., 1::2, 0::2]
        + s3 * x[..., 1::2, 1::2]
    ) * 0.5


def _band_adjoint(g, signs):
    s0, s1, s2, s3 = signs
    b, c, h, w = g.shape
    gx = np.empty((b, c, 2 * h, 2 * w), dtype=g.dtype)
    gx[..., 0::2, 0::2] = s0 * 0.5 * g
    gx[..., 0::2, 1::2] = s1 * 0.5 * g
    gx[..., 1::2, 0::2] = s2 * 0.5 * g
    gx[..., 1::2, 1::2] = s3 * 0.5 * g
    return gx


def dwt2_t(x: ad.Tensor):
    """Differentiable single-level transform on a Tensor.

    Returns (cA, cH, cV, cD) Tensors.
    """
    _check_even(x.data)
    outs = []
    for name in ("cA", "cH", "cV", "cD"):
        signs = _SIGNS[name]

        def backward(g, signs=signs):
            return (_band_adjoint(g, signs),)

        outs.append(ad.apply_op(_band(x.data, signs), (x,), backward))
    return tuple(outs)


def idwt2_t(ca: ad.Tensor, ch: ad.Tensor, cv: ad.Tensor, cd: ad.Tensor) -> ad.Tensor:
    """Differentiable inverse transform on Tensors."""
    for name, b in (("cH", ch), ("cV", cv), ("cD", cd)):
        if b.data.shape != ca.data.shape:
            raise ShapeError(f"band {name} shape {b.data.shape} != cA shape {ca.data.shape}")
    data = idwt2(WaveletBands(ca.data, ch.data, cv.data, cd.data))

    def backward(g):
        return tuple(_band(g, _SIGNS[name]) for name in ("cA", "cH", "cV", "cD"))

    return ad.apply_op(data, (ca, ch, cv, cd), backward)
