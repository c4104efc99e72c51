"""Training objective (five terms) and evaluation metrics.

The objective sums a frequency-domain L1 and an SSIM-based spatial term on
the full-resolution outputs of both views, plus frequency, spatial and
perceptual terms on the 1/8-scale low-frequency outputs against the deepest
approximation band of the ground truth.
"""

import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError
from .images import to_bchw
from .nn import Conv2d, Module

PSNR_CAP_DB = 99.0


# -- frequency-domain loss ------------------------------------------------------


def fft_l1(pred, target) -> Tensor:
    """Mean over spectrum bins of |dRe| + |dIm| of the unnormalized 2D DFT."""
    pred = ad.as_tensor(pred)
    target = ad.as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"pred shape {pred.shape} != target shape {target.shape}")
    diff = pred - target
    spec = np.fft.fft2(diff.data, axes=(-2, -1))
    val = np.asarray(
        (np.abs(spec.real) + np.abs(spec.imag)).mean(), dtype=diff.data.dtype
    )
    hw = diff.data.shape[-1] * diff.data.shape[-2]

    def backward(g):
        s = np.sign(spec.real) + 1j * np.sign(spec.imag)
        grad = np.fft.ifft2(s, axes=(-2, -1)).real * (hw / diff.data.size)
        return (g * grad.astype(diff.data.dtype),)

    return ad.apply_op(val, (diff,), backward)


def freq_loss(pred_l, pred_r, gt_l, gt_r) -> Tensor:
    """Frequency-domain distance summed over both views."""
    return fft_l1(pred_l, gt_l) + fft_l1(pred_r, gt_r)


# -- SSIM and spatial loss -------------------------------------------------------


def _gaussian_kernel(win_size, sigma, channels, dtype):
    ax = np.arange(win_size, dtype=np.float64) - (win_size - 1) / 2.0
    g1 = np.exp(-(ax**2) / (2.0 * sigma**2))
    k = np.outer(g1, g1)
    k /= k.sum()
    w = np.broadcast_to(k, (channels, 1, win_size, win_size)).astype(dtype)
    return Tensor(np.ascontiguousarray(w))


def ssim(a, b, peak=1.0, win_size=11, sigma=1.5) -> Tensor:
    """Differentiable mean SSIM over a Gaussian window (valid positions only)."""
    a, b = ad.as_tensor(a), ad.as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"shapes differ: {a.shape} vs {b.shape}")
    if a.ndim != 4:
        raise ShapeError(f"ssim expects (B, C, H, W), got {a.shape}")
    _, c, h, w = a.shape
    if min(h, w) < win_size:
        raise ConfigError(
            f"image ({h}, {w}) smaller than SSIM window {win_size}; "
            f"use a smaller odd win_size"
        )
    win = _gaussian_kernel(win_size, sigma, c, a.data.dtype)

    def blur(t):
        return ad.conv2d(t, win, pad=0, groups=c)

    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    mu_a, mu_b = blur(a), blur(b)
    mu_aa, mu_bb, mu_ab = mu_a * mu_a, mu_b * mu_b, mu_a * mu_b
    var_a = blur(a * a) - mu_aa
    var_b = blur(b * b) - mu_bb
    cov = blur(a * b) - mu_ab
    num = (2.0 * mu_ab + c1) * (2.0 * cov + c2)
    den = (mu_aa + mu_bb + c1) * (var_a + var_b + c2)
    return ad.mean(num / den)


def adaptive_win(h, w, win_size=11):
    """Largest odd window not exceeding the requested size or the image."""
    m = min(h, w, win_size)
    return m if m % 2 else m - 1


def spatial_loss(pred_l, pred_r, gt_l, gt_r, peak=1.0, win_size=11, sigma=1.5) -> Tensor:
    """(1 - SSIM) summed over both views."""
    one_l = 1.0 - ssim(pred_l, gt_l, peak, win_size, sigma)
    one_r = 1.0 - ssim(pred_r, gt_r, peak, win_size, sigma)
    return one_l + one_r


# -- perceptual loss ---------------------------------------------------------------


class ConvFeatureExtractor(Module):
    """Frozen, seeded stack of 3x3 conv + ReLU layers used as a feature map."""

    def __init__(self, channels=(16, 16, 32, 32, 32), seed=777):
        rng = np.random.default_rng(seed)
        widths = (3,) + tuple(channels)
        self.layers = [
            Conv2d(widths[i], widths[i + 1], 3, rng=rng) for i in range(len(channels))
        ]
        for p in self.parameters():
            p.requires_grad = False

    def forward(self, x):
        x = ad.as_tensor(x)
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i + 1 < len(self.layers):
                x = ad.relu(x)
        return x


class PretrainedBackbone(Module):
    """VGG-style feature stack loaded from a provisioned npz weight file.

    The archive must hold conv00.weight/conv00.bias, conv01..., in network
    order, plus a `pool_after` int array naming conv indices followed by 2x2
    max pooling. Features are taken after `cut` conv layers (ReLU applied).
    """

    def __init__(self, weights_path, cut=5):
        if not weights_path or not os.path.exists(weights_path):
            raise ConfigError(
                "pretrained perceptual backbone requested but no weight file is "
                f"provisioned at {weights_path!r}; provide vgg_weights or use the "
                "default extractor"
            )
        with np.load(weights_path) as z:
            self.pool_after = (
                set(int(i) for i in z["pool_after"]) if "pool_after" in z.files else set()
            )
            self.layers = []
            for i in range(cut):
                wname, bname = f"conv{i:02d}.weight", f"conv{i:02d}.bias"
                if wname not in z.files:
                    raise ConfigError(f"weight file lacks {wname}; archive has {z.files}")
                w = z[wname].astype(np.float32)
                conv = Conv2d(w.shape[1], w.shape[0], w.shape[2])
                conv.weight.data = w
                conv.bias.data = z[bname].astype(np.float32)
                self.layers.append(conv)
        for p in self.parameters():
            p.requires_grad = False

    def forward(self, x):
        x = ad.as_tensor(x)
        for i, layer in enumerate(self.layers):
            x = ad.relu(layer(x))
            if i in self.pool_after:
                x = ad.maxpool2x2(x)
        return x


def make_extractor(kind="conv5", weights_path=None, seed=777, cut=5):
    """Build the perceptual feature extractor named by `kind`."""
    if kind in ("conv5", "default"):
        return ConvFeatureExtractor(seed=seed)
    if kind == "vgg19":
        return PretrainedBackbone(weights_path, cut=cut)
    raise ConfigError(f"unknown perceptual extractor kind {kind!r}")


def perceptual_loss(
    pred_l, pred_r, gt_l, gt_r, extractor, weight=1e-4, per_view=False
) -> Tensor:
    """Weighted L2 norm of summed per-view feature residuals.

    The default form sums the two views' residuals inside a single norm;
    per_view=True instead norms each view separately and adds them.
    """
    if extractor is None:
        raise ConfigError("perceptual loss requires a feature extractor; none configured")
    r_l = extractor(pred_l) - extractor(ad.as_tensor(gt_l))
    r_r = extractor(pred_r) - extractor(ad.as_tensor(gt_r))
    if per_view:
        n = ad.sqrt(ad.sum_(r_l * r_l) + 1e-12) + ad.sqrt(ad.sum_(r_r * r_r) + 1e-12)
    else:
        s = r_l + r_r
        n = ad.sqrt(ad.sum_(s * s) + 1e-12)
    return weight * n


# -- total objective -----------------------------------------------------------------


@dataclass
class LossBreakdown:
    l_fre: float
    l_spa: float
    l_fre_1_8: float
    l_spa_1_8: float
    l_vgg_1_8: float
    total: float
    graph: Optional[Tensor] = field(default=None, repr=False, compare=False)


@dataclass
class LossFlags:
    use_freq: bool = True
    use_spa: bool = True
    use_freq18: bool = True
    use_spa18: bool = True
    use_vgg18: bool = True


def total_loss(out, sample, extractor, flags: LossFlags = None, win_size=11) -> LossBreakdown:
    """Five-term objective; `out` is a NetOutput, `sample` carries GT tensors.

    The 1/8-scale SSIM window shrinks to the largest odd size that fits when
    the deep targets are smaller than the full-scale window.
    """
    flags = flags or LossFlags()
    gl, gr = sample.gt_left, sample.gt_right
    g3l, g3r = sample.gt_low3_left, sample.gt_low3_right
    zero = Tensor(np.zeros((), dtype=np.float32))

    t_fre = freq_loss(out.enhanced_left, out.enhanced_right, gl, gr) if flags.use_freq else zero
    t_spa = (
        spatial_loss(out.enhanced_left, out.enhanced_right, gl, gr, win_size=win_size)
        if flags.use_spa
        else zero
    )
    t_fre18 = (
        freq_loss(out.lowfreq_left, out.lowfreq_right, g3l, g3r) if flags.use_freq18 else zero
    )
    if flags.use_spa18:
        h, w = np.asarray(g3l).shape[-2:]
        win18 = adaptive_win(h, w, win_size)
        sig18 = 1.5 * win18 / 11.0
        t_spa18 = spatial_loss(
            out.lowfreq_left, out.lowfreq_right, g3l, g3r, win_size=win18, sigma=sig18
        )
    else:
        t_spa18 = zero
    t_vgg18 = (
        perceptual_loss(out.lowfreq_left, out.lowfreq_right, g3l, g3r, extractor)
        if flags.use_vgg18
        else zero
    )

    graph = t_fre + t_spa + t_fre18 + t_spa18 + t_vgg18
    parts = [float(t.data) for t in (t_fre, t_spa, t_fre18, t_spa18, t_vgg18)]
    return LossBreakdown(
        l_fre=parts[0],
        l_spa=parts[1],
        l_fre_1_8=parts[2],
        l_spa_1_8=parts[3],
        l_vgg_1_8=parts[4],
        total=parts[0] + parts[1] + parts[2] + parts[3] + parts[4],
        graph=graph,
    )


# -- metrics ---------------------------------------------------------------------------


def psnr(a, b, peak=1.0) -> float:
    """10 log10(peak^2 / MSE), capped at the 99 dB identity sentinel."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return float(min(10.0 * np.log10(peak * peak / mse), PSNR_CAP_DB))


def ssim_index(a, b, peak=1.0, win_size=11, sigma=1.5) -> float:
    """Non-differentiable SSIM on images in any supported layout."""
    a4, _ = to_bchw(np.asarray(a))
    b4, _ = to_bchw(np.asarray(b))
    with ad.no_grad():
        return float(ssim(a4.astype(np.float64), b4.astype(np.float64), peak, win_size, sigma).data)


def mse_binary_map(a, b, threshold) -> np.ndarray:
    """Boolean map, True (white) where per-pixel channel MSE exceeds threshold."""
    a4, layout = to_bchw(np.asarray(a))
    b4, _ = to_bchw(np.asarray(b))
    if a4.shape != b4.shape:
        raise ShapeError(f"shapes differ: {a4.shape} vs {b4.shape}")
    err = ((a4.astype(np.float64) - b4.astype(np.float64)) ** 2).mean(axis=1)
    out = err > threshold
    return out if layout == "bchw" else out[0]
