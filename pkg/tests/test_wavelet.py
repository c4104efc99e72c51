"""Wavelet transform tests against an independent scalar reference."""

import numpy as np
import pytest

import wdci.autodiff as ad
from wdci.errors import ArgumentError, DimensionError, ShapeError, StructureError
from wdci.losses import psnr
from wdci.wavelet import (
    WaveletBands,
    WaveletPyramid,
    decompose,
    dwt2,
    dwt2_t,
    idwt2,
    idwt2_t,
    low_frequency_exchange,
    reconstruct,
)

S = 0.5  # orthonormal Haar filter weight


def reference_haar(x):
    """Scalar-loop single-level transform; written before the vectorized one
    and kept independent of it."""
    b, c, h, w = x.shape
    ca = np.zeros((b, c, h // 2, w // 2))
    chh = np.zeros_like(ca)
    cv = np.zeros_like(ca)
    cd = np.zeros_like(ca)
    for bi in range(b):
        for ci in range(c):
            for i in range(h // 2):
                for j in range(w // 2):
                    a = x[bi, ci, 2 * i, 2 * j]
                    bb = x[bi, ci, 2 * i, 2 * j + 1]
                    cc = x[bi, ci, 2 * i + 1, 2 * j]
                    dd = x[bi, ci, 2 * i + 1, 2 * j + 1]
                    ca[bi, ci, i, j] = S * (a + bb + cc + dd)
                    chh[bi, ci, i, j] = S * (a - bb + cc - dd)
                    cv[bi, ci, i, j] = S * (a + bb - cc - dd)
                    cd[bi, ci, i, j] = S * (a - bb - cc + dd)
    return ca, chh, cv, cd


def test_matches_scalar_reference(rng):
    x = rng.standard_normal((2, 3, 8, 6))
    bands = dwt2(x)
    ref = reference_haar(x)
    for got, want in zip(bands.all_bands(), ref):
        assert np.allclose(got, want, atol=1e-12)


def test_constant_input_bands():
    x = np.full((1, 1, 2, 2), 0.5, dtype=np.float32)
    bands = dwt2(x)
    assert np.allclose(bands.cA, [[1.0]])
    for b in (bands.cH, bands.cV, bands.cD):
        assert np.allclose(b, 0.0, atol=1e-6)


def test_vertical_edge_band():
    # [[1,-1],[1,-1]] varies across columns: a vertical edge. This
    # implementation designates cH (horizontal high-pass) for it.
    x = np.array([[1.0, -1.0], [1.0, -1.0]]).reshape(1, 1, 2, 2)
    bands = dwt2(x)
    ref = reference_haar(x)
    assert np.allclose(bands.cH, [[2.0]])
    assert np.allclose(bands.cH, ref[1])
    for b in (bands.cA, bands.cV, bands.cD):
        assert np.allclose(b, 0.0)


def test_roundtrip_single_level(rng):
    x = rng.standard_normal((1, 3, 8, 8)).astype(np.float32)
    back = idwt2(dwt2(x))
    assert np.abs(back - x).max() < 1e-6


def test_idwt_zero_and_constant():
    zero = WaveletBands(*(np.zeros((1, 1, 3, 3)) for _ in range(4)))
    assert np.allclose(idwt2(zero), 0.0)
    c = 0.731
    bands = WaveletBands(
        cA=np.full((1, 1, 1, 1), 2 * c),
        cH=np.zeros((1, 1, 1, 1)),
        cV=np.zeros((1, 1, 1, 1)),
        cD=np.zeros((1, 1, 1, 1)),
    )
    assert np.allclose(idwt2(bands), c)


def test_bands_roundtrip_from_band_side(rng):
    bands = WaveletBands(*(rng.standard_normal((1, 2, 4, 4)).astype(np.float32) for _ in range(4)))
    again = dwt2(idwt2(bands))
    for got, want in zip(again.all_bands(), bands.all_bands()):
        assert np.abs(got - want).max() < 1e-6


def test_odd_dims_error_names_axis():
    with pytest.raises(DimensionError, match="height"):
        dwt2(np.zeros((1, 1, 3, 4)))
    with pytest.raises(DimensionError, match="width"):
        dwt2(np.zeros((1, 1, 4, 3)))


def test_band_shape_mismatch():
    bands = WaveletBands(
        cA=np.zeros((1, 1, 2, 2)),
        cH=np.zeros((1, 1, 2, 3)),
        cV=np.zeros((1, 1, 2, 2)),
        cD=np.zeros((1, 1, 2, 2)),
    )
    with pytest.raises(ShapeError, match="cH"):
        idwt2(bands)


def test_parseval(rng):
    x = rng.standard_normal((2, 3, 16, 16))
    bands = dwt2(x)
    e_in = np.sum(x * x)
    e_out = sum(np.sum(b * b) for b in bands.all_bands())
    assert abs(e_out - e_in) / e_in < 1e-4


def test_linearity(rng):
    x = rng.standard_normal((1, 2, 8, 8))
    y = rng.standard_normal((1, 2, 8, 8))
    a, b = 1.7, -0.3
    lhs = dwt2(a * x + b * y)
    for lb, xb, yb in zip(lhs.all_bands(), dwt2(x).all_bands(), dwt2(y).all_bands()):
        assert np.abs(lb - (a * xb + b * yb)).max() < 1e-5


def test_decompose_shapes_and_roundtrip(rng):
    x = rng.standard_normal((1, 3, 128, 128)).astype(np.float32)
    p = decompose(x, 3)
    sizes = [lvl.cH.shape[-1] for lvl in p.levels]
    assert sizes == [64, 32, 16]
    assert p.levels[-1].cA.shape[-2:] == (16, 16)
    assert np.abs(reconstruct(p) - x).max() < 1e-5


def test_decompose_level1_equals_dwt2(rng):
    x = rng.standard_normal((1, 1, 6, 6))
    p = decompose(x, 1)
    for got, want in zip(p.levels[0].all_bands(), dwt2(x).all_bands()):
        assert np.allclose(got, want)


def test_decompose_pads_and_restores(rng):
    x = rng.standard_normal((1, 3, 50, 41)).astype(np.float32)
    for levels in (1, 2, 3):
        p = decompose(x, levels)
        assert np.abs(reconstruct(p) - x).max() < 1e-5


def test_decompose_bad_level():
    with pytest.raises(ArgumentError):
        decompose(np.zeros((1, 1, 8, 8)), 0)


def test_reconstruct_empty_pyramid():
    with pytest.raises(StructureError):
        reconstruct(WaveletPyramid(levels=[]))


def test_exchange_identical_images(rng):
    img = rng.uniform(0, 1, (32, 32, 3)).astype(np.float32)
    s_normal, s_low = low_frequency_exchange(img, img, 3)
    assert np.abs(s_normal - img).max() < 1e-5
    assert np.abs(s_low - img).max() < 1e-5


def test_exchange_shape_mismatch():
    with pytest.raises(ShapeError):
        low_frequency_exchange(np.zeros((8, 8, 3)), np.zeros((8, 16, 3)))


def test_exchange_linear_darkening_ordering(rng):
    # 20 synthetic pairs, low = 0.1 * normal: the image carrying the bright
    # approximation must beat the raw dark input against the bright target.
    from wdci.data import synthesize_stereo_pair

    wins = []
    for seed in range(20):
        normal, _right = synthesize_stereo_pair(seed, size=64)
        low = 0.1 * normal
        s_normal, _s_low = low_frequency_exchange(low, normal, 3)
        wins.append(psnr(s_normal, normal) > psnr(low, normal))
    assert all(wins)


def test_exchange_batch_ordering(rng):
    from wdci.data import synthesize_stereo_pair

    snormal_scores, slow_scores = [], []
    for seed in range(20):
        normal, _right = synthesize_stereo_pair(seed, size=64)
        low = np.clip(0.15 * normal + rng.normal(0, 0.005, normal.shape), 0, 1).astype(np.float32)
        s_normal, s_low = low_frequency_exchange(low, normal, 3)
        snormal_scores.append(psnr(s_normal, normal))
        slow_scores.append(psnr(s_low, normal))
    assert np.mean(snormal_scores) > np.mean(slow_scores)


def test_differentiable_wrappers_roundtrip_and_adjoint(rng):
    x = ad.Tensor(rng.standard_normal((1, 2, 8, 8)), requires_grad=True)
    ca, ch, cv, cd = dwt2_t(x)
    back = idwt2_t(ca, ch, cv, cd)
    assert np.abs(back.data - x.data).max() < 1e-6
    # orthonormality: gradient of sum(dwt bands * R) equals idwt of R parts
    r = [rng.standard_normal(ca.shape) for _ in range(4)]
    loss = (
        ad.sum_(ca * r[0]) + ad.sum_(ch * r[1]) + ad.sum_(cv * r[2]) + ad.sum_(cd * r[3])
    )
    loss.backward()
    expected = idwt2(WaveletBands(r[0], r[1], r[2], r[3]))
    assert np.abs(x.grad - expected).max() < 1e-10
