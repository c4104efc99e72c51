"""Two-view enhancement network with wavelet-decoupled branches.

Each view is embedded, decomposed level by level (the fused low-frequency
feature of one level feeds the next transform), and the raw input image is
injected at every scale through space-to-depth downsampling. The deepest
low-frequency feature runs through the illumination block per view with no
cross-view exchange; the three detail bands of every level interact across
views through row-wise parallax attention and are then refined by guided
cross-attention. Reconstruction inverts the transform from the deepest level
outward, seeded by the low-frequency output, and a global residual connects
input to output. Both views share all weights.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeError, StructureError, ValidationError
from .nn import (
    SKFF,
    ChannelAttention,
    Conv2d,
    CrossAttention,
    DepthwiseSeparableConv,
    LayerNorm2d,
    Module,
    SpaceToDepthDown,
    simple_gate,
)
from .wavelet import dwt2_t, idwt2_t


@dataclass
class NetConfig:
    base_channels: int = 16
    levels: int = 3
    iam_kernel: int = 7
    skff_reduction: int = 8
    use_hf_cim: bool = True
    use_dtem: bool = True
    use_iam: bool = True
    use_downsample_fusion: bool = True
    global_residual: bool = True
    seed: int = 0

    def band_channels(self):
        """Channel width of the detail bands at levels 1..L."""
        widths = []
        c = self.base_channels
        for i in range(self.levels):
            widths.append(c)
            c = self.feat_channels(i + 1)
        return widths

    def feat_channels(self, level):
        """Width of the fused low-frequency feature leaving `level`."""
        band = self.base_channels
        for _ in range(level - 1):
            band = self._fused(band)
        return self._fused(band)

    def _fused(self, band_c):
        if not self.use_downsample_fusion:
            return band_c
        return min(2 * band_c, 4 * self.base_channels)

    def hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class ParallaxAttention:
    """Row-stochastic cross-view attention stacks, each (B, H, W, W)."""

    t_l2r: np.ndarray
    t_r2l: np.ndarray


@dataclass
class NetOutput:
    enhanced_left: Tensor
    enhanced_right: Tensor
    lowfreq_left: Tensor
    lowfreq_right: Tensor
    attention: Optional[list] = field(default=None)


class IAM(Module):
    """Illumination adjustment: two gated residual stages.

    Stage one mixes space with a large depthwise kernel, stage two reweighs
    channels; both halve their expanded width through the simple gate.
    """

    def __init__(self, channels, kernel=7, rng=None):
        self.expand1 = Conv2d(channels, 2 * channels, 1, rng=rng)
        self.spatial = Conv2d(2 * channels, 2 * channels, kernel, rng=rng, groups=2 * channels)
        self.proj1 = Conv2d(channels, channels, 1, rng=rng)
        self.expand2 = Conv2d(channels, 2 * channels, 1, rng=rng)
        self.ca = ChannelAttention(2 * channels, rng=rng)
        self.proj2 = Conv2d(channels, channels, 1, rng=rng)

    def forward(self, x):
        x = ad.as_tensor(x)
        y = x + self.proj1(simple_gate(self.spatial(self.expand1(x))))
        z = y + self.proj2(simple_gate(self.ca(self.expand2(y))))
        return z


class HFCIM(Module):
    """Cross-view interaction of the detail bands via row-wise attention.

    The three bands of each view are fused (SKFF), normalized and projected;
    one shared projection produces both the query and key maps so that
    swapping the views exactly swaps the two attention maps. Attention is
    computed independently per image row over the full width, and each band
    is updated by adding the other view's band warped through the map.
    """

    def __init__(self, channels, rng=None, reduction=8):
        self.fuse = SKFF(channels, 3, rng=rng, reduction=reduction)
        self.norm = LayerNorm2d(channels)
        self.proj = Conv2d(channels, channels, 1, rng=rng)

    def _rows(self, x):
        b, c, h, w = x.shape
        return ad.reshape(ad.transpose(x, (0, 2, 3, 1)), (b * h, w, c))

    def forward(self, left, right):
        lv, lh, ld = (ad.as_tensor(t) for t in left)
        rv, rh, rd = (ad.as_tensor(t) for t in right)
        if lv.shape != rv.shape:
            raise ShapeError(f"view shapes differ: {lv.shape} vs {rv.shape}")
        b, c, h, w = lv.shape
        q = self._rows(self.proj(self.norm(self.fuse([lv, lh, ld]))))
        k = self._rows(self.proj(self.norm(self.fuse([rv, rh, rd]))))
        scale = float(1.0 / np.sqrt(c))
        t_l2r = ad.softmax(ad.matmul(k, ad.transpose(q, (0, 2, 1))) * scale, axis=-1)
        t_r2l = ad.softmax(ad.matmul(q, ad.transpose(k, (0, 2, 1))) * scale, axis=-1)

        def warp(t, band):
            rows = self._rows(band)
            out = ad.matmul(t, rows)
            return ad.transpose(ad.reshape(out, (b, h, w, c)), (0, 3, 1, 2))

        right_out = tuple(rb + warp(t_l2r, lb) for lb, rb in zip((lv, lh, ld), (rv, rh, rd)))
        left_out = tuple(lb + warp(t_r2l, rb) for lb, rb in zip((lv, lh, ld), (rv, rh, rd)))
        attn = ParallaxAttention(
            t_l2r=t_l2r.data.reshape(b, h, w, w).copy(),
            t_r2l=t_r2l.data.reshape(b, h, w, w).copy(),
        )
        return left_out, right_out, attn


class DTEM(Module):
    """Detail and texture refinement of one view's band triplet.

    The post-interaction bands are pre-convolved and fused into a complete
    map that guides cross-attention over the original vertical and horizontal
    bands; their refined versions jointly guide the diagonal band.
    """

    def __init__(self, channels, rng=None, reduction=8):
        self.pre_v = DepthwiseSeparableConv(channels, channels, 3, rng=rng)
        self.pre_h = DepthwiseSeparableConv(channels, channels, 3, rng=rng)
        self.pre_d = DepthwiseSeparableConv(channels, channels, 3, rng=rng)
        self.fuse = SKFF(channels, 3, rng=rng, reduction=reduction)
        self.att_v = CrossAttention(channels, rng=rng)
        self.att_h = CrossAttention(channels, rng=rng)
        self.att_dv = CrossAttention(channels, rng=rng)
        self.att_dh = CrossAttention(channels, rng=rng)
        self.post_v = DepthwiseSeparableConv(channels, channels, 3, rng=rng)
        self.post_h = DepthwiseSeparableConv(channels, channels, 3, rng=rng)
        self.post_d = DepthwiseSeparableConv(channels, channels, 3, rng=rng)

    def forward(self, interacted, original):
        v_i, h_i, d_i = (ad.as_tensor(t) for t in interacted)
        v0, h0, d0 = (ad.as_tensor(t) for t in original)
        s = self.fuse([self.pre_v(v_i), self.pre_h(h_i), self.pre_d(d_i)])
        v_mid = self.att_v(s, v0)
        h_mid = self.att_h(s, h0)
        d_mid = self.att_dv(v_mid, d0) + self.att_dh(h_mid, d0)
        return (self.post_v(v_mid), self.post_h(h_mid), self.post_d(d_mid))


class WDCINet(Module):
    """Weight-shared two-view enhancement network."""

    def __init__(self, cfg: NetConfig = None):
        self.cfg = cfg or NetConfig()
        cfg = self.cfg
        rng = np.random.default_rng(cfg.seed)
        c0 = cfg.base_channels
        bands = cfg.band_channels()
        feats = [cfg.feat_channels(i + 1) for i in range(cfg.levels)]
        self.embed = Conv2d(3, c0, 3, rng=rng)
        if cfg.use_downsample_fusion:
            self.down = [
                SpaceToDepthDown(3, bands[i], 2 ** (i + 1), rng=rng)
                for i in range(cfg.levels)
            ]
            self.fuse = [
                Conv2d(2 * bands[i], feats[i], 3, rng=rng) for i in range(cfg.levels)
            ]
        if cfg.use_iam:
            self.iam = IAM(feats[-1], kernel=cfg.iam_kernel, rng=rng)
        self.to_low = Conv2d(feats[-1], 3, 1, rng=rng)
        self.lift = Conv2d(3, bands[-1], 1, rng=rng)
        if cfg.use_hf_cim:
            self.hfcim = [
                HFCIM(bands[i], rng=rng, reduction=cfg.skff_reduction)
                for i in range(cfg.levels)
            ]
        if cfg.use_dtem:
            self.dtem = [
                DTEM(bands[i], rng=rng, reduction=cfg.skff_reduction)
                for i in range(cfg.levels)
            ]
        self.merge = [
            Conv2d(bands[i + 1], bands[i], 1, rng=rng) for i in range(cfg.levels - 1)
        ]
        self.final = Conv2d(c0, 3, 3, rng=rng)

    def _validate(self, left, right):
        for name, img in (("left", left), ("right", right)):
            if img.ndim != 4 or img.shape[1] != 3:
                raise ShapeError(f"{name} input must be (B, 3, H, W), got {img.shape}")
            if not np.isfinite(img).all():
                raise ValidationError(f"{name} input contains non-finite values")
        if left.shape != right.shape:
            raise ShapeError(f"view shapes differ: {left.shape} vs {right.shape}")
        mult = 2**self.cfg.levels
        h, w = left.shape[2], left.shape[3]
        if h % mult or w % mult:
            raise ShapeError(
                f"spatial dims ({h}, {w}) must be divisible by {mult}; "
                f"pad the input (e.g. reflect-pad) to the next multiple first"
            )

    def _encode(self, img_t):
        a = self.embed(img_t)
        triplets = []
        for i in range(self.cfg.levels):
            ca, ch, cv, cd = dwt2_t(a)
            triplets.append((cv, ch, cd))
            if self.cfg.use_downsample_fusion:
                extra = self.down[i](img_t)
                a = self.fuse[i](ad.concat([ca, extra], axis=1))
            else:
                a = ca
        return triplets, a

    def _lowfreq(self, deep_feature):
        g = self.iam(deep_feature) if self.cfg.use_iam else deep_feature
        return self.to_low(g)

    def _decode(self, img_t, e3, enhanced_triplets):
        a = self.lift(e3)
        for i in range(self.cfg.levels - 1, -1, -1):
            v, h, d = enhanced_triplets[i]
            a = idwt2_t(a, h, v, d)
            if i > 0:
                a = self.merge[i - 1](a)
        out = self.final(a)
        return img_t + out if self.cfg.global_residual else out

    def forward(self, left, right, collect_attention=False) -> NetOutput:
        left = np.asarray(left, dtype=np.float32) if not isinstance(left, Tensor) else left
        right = np.asarray(right, dtype=np.float32) if not isinstance(right, Tensor) else right
        ldata = left.data if isinstance(left, Tensor) else left
        rdata = right.data if isinstance(right, Tensor) else right
        self._validate(ldata, rdata)
        lt = ad.as_tensor(left)
        rt = ad.as_tensor(right)

        trip_l, deep_l = self._encode(lt)
        trip_r, deep_r = self._encode(rt)
        e3_l = self._lowfreq(deep_l)
        e3_r = self._lowfreq(deep_r)

        attn_maps = [] if collect_attention else None
        inter_l, inter_r = [], []
        for i in range(self.cfg.levels):
            if self.cfg.use_hf_cim:
                li, ri, attn = self.hfcim[i](trip_l[i], trip_r[i])
            else:
                li, ri, attn = trip_l[i], trip_r[i], None
            inter_l.append(li)
            inter_r.append(ri)
            if collect_attention:
                attn_maps.append(attn)

        enh_l, enh_r = [], []
        for i in range(self.cfg.levels):
            if self.cfg.use_dtem:
                enh_l.append(self.dtem[i](inter_l[i], trip_l[i]))
                enh_r.append(self.dtem[i](inter_r[i], trip_r[i]))
            else:
                enh_l.append(inter_l[i])
                enh_r.append(inter_r[i])

        return NetOutput(
            enhanced_left=self._decode(lt, e3_l, enh_l),
            enhanced_right=self._decode(rt, e3_r, enh_r),
            lowfreq_left=e3_l,
            lowfreq_right=e3_r,
            attention=attn_maps,
        )


def save_checkpoint(path, model: WDCINet, epoch=0, extra=None):
    """Write all parameters plus a manifest (config, hash, epoch) to one npz."""
    manifest = {
        "net_config": asdict(model.cfg),
        "config_hash": model.cfg.hash(),
        "epoch": int(epoch),
        "seed": int(model.cfg.seed),
    }
    if extra:
        manifest.update(extra)
    arrays = {f"param:{name}": p.data for name, p in model.named_parameters()}
    np.savez(path, manifest=np.frombuffer(json.dumps(manifest).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path):
    """Rebuild the model from a checkpoint; returns (model, manifest)."""
    with np.load(path) as z:
        if "manifest" not in z:
            raise StructureError(f"checkpoint {path} has no manifest")
        manifest = json.loads(bytes(z["manifest"].tobytes()).decode())
        state = {
            key[len("param:") :]: z[key] for key in z.files if key.startswith("param:")
        }
    cfg = NetConfig(**manifest["net_config"])
    model = WDCINet(cfg)
    model.load_state_dict(state)
    return model, manifest
