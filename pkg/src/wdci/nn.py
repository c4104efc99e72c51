"""Differentiable building blocks: modules, convolutions, gating, attention.

All parameters are drawn from a seeded numpy Generator passed to each
constructor, so an identical seed reproduces identical parameters. Forward
evaluation never mutates parameters; updates go through the optimizer.
"""

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .errors import ShapeError


class Module:
    """Base class with recursive parameter discovery."""

    def _children(self):
        for name, value in vars(self).items():
            if isinstance(value, (Parameter, Module)):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Parameter, Module)):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix=""):
        for name, value in self._children():
            full = f"{prefix}.{name}" if prefix else name
            if isinstance(value, Parameter):
                yield full, value
            else:
                yield from value.named_parameters(full)

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def num_params(self):
        return sum(p.data.size for p in self.parameters())

    def astype(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise ShapeError(f"state mismatch; missing={missing}, unexpected={extra}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.data.shape:
                raise ShapeError(
                    f"parameter {name}: shape {arr.shape} != expected {p.data.shape}"
                )
            p.data = arr.astype(p.data.dtype)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _conv_init(rng, cout, cin_per_group, kh, kw, dtype=np.float32):
    fan_in = cin_per_group * kh * kw
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(cout, cin_per_group, kh, kw)).astype(dtype)


class Conv2d(Module):
    """Stride-1 convolution with 'same' padding for odd kernels."""

    def __init__(self, cin, cout, kernel=1, rng=None, bias=True, groups=1, pad=None):
        if cin % groups or cout % groups:
            raise ShapeError(f"channels ({cin}, {cout}) not divisible by groups {groups}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Parameter(_conv_init(rng, cout, cin // groups, kernel, kernel))
        self.bias = Parameter(np.zeros(cout, dtype=np.float32)) if bias else None
        self.groups = groups
        self.pad = kernel // 2 if pad is None else pad

    def forward(self, x):
        if x.shape[1] != self.weight.data.shape[1] * self.groups:
            raise ShapeError(
                f"expected {self.weight.data.shape[1] * self.groups} input channels, "
                f"got {x.shape[1]}"
            )
        return ad.conv2d(x, self.weight, self.bias, pad=self.pad, groups=self.groups)


class DepthwiseSeparableConv(Module):
    """Depthwise k x k followed by a pointwise 1x1 projection."""

    def __init__(self, cin, cout, kernel=3, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.depthwise = Conv2d(cin, cin, kernel, rng=rng, groups=cin)
        self.pointwise = Conv2d(cin, cout, 1, rng=rng)

    def forward(self, x):
        return self.pointwise(self.depthwise(x))


class LayerNorm2d(Module):
    """Layer normalization over the channel axis of (B, C, H, W)."""

    def __init__(self, channels, eps=1e-5):
        self.gamma = Parameter(np.ones((1, channels, 1, 1), dtype=np.float32))
        self.beta = Parameter(np.zeros((1, channels, 1, 1), dtype=np.float32))
        self.eps = eps

    def forward(self, x):
        mu = ad.mean(x, axis=1, keepdims=True)
        xc = x - mu
        var = ad.mean(xc * xc, axis=1, keepdims=True)
        xn = xc / ad.sqrt(var + self.eps)
        return xn * self.gamma + self.beta


def embed_image(conv: Conv2d, image) -> Tensor:
    """Lift a 3-channel image batch to embedding features (shape-preserving)."""
    image = ad.as_tensor(image)
    if image.ndim != 4 or image.shape[1] != 3:
        raise ShapeError(f"expected (B, 3, H, W) image batch, got {image.shape}")
    return conv(image)


class SpaceToDepthDown(Module):
    """PixelUnshuffle by `factor` then a 1x1 compression to `cout` channels."""

    def __init__(self, cin, cout, factor, rng=None):
        self.factor = factor
        self.compress = Conv2d(cin * factor * factor, cout, 1, rng=rng)

    def forward(self, x):
        return self.compress(ad.pixel_unshuffle(x, self.factor))


def simple_gate(x) -> Tensor:
    """Split channels in half and multiply the halves elementwise."""
    x = ad.as_tensor(x)
    if x.shape[1] % 2:
        raise ShapeError(f"simple_gate needs an even channel count, got {x.shape[1]}")
    a, b = ad.chunk(x, 2, axis=1)
    return a * b


class SKFF(Module):
    """Selective kernel feature fusion over parallel branches.

    Global-average statistics of the branch sum pass through a bottleneck,
    per-branch projections produce logits, and a softmax across branches
    yields per-channel convex weights.
    """

    def __init__(self, channels, n_branches, rng=None, reduction=8):
        hidden = max(channels // reduction, 4)
        self.squeeze = Conv2d(channels, hidden, 1, rng=rng)
        self.branch_proj = [Conv2d(hidden, channels, 1, rng=rng) for _ in range(n_branches)]
        self.n_branches = n_branches

    def attention(self, branches):
        if len(branches) != self.n_branches:
            raise ShapeError(f"expected {self.n_branches} branches, got {len(branches)}")
        shape0 = branches[0].shape
        for i, br in enumerate(branches[1:], 1):
            if br.shape != shape0:
                raise ShapeError(f"branch {i} shape {br.shape} != branch 0 shape {shape0}")
        u = branches[0]
        for br in branches[1:]:
            u = u + br
        s = ad.mean(u, axis=(2, 3), keepdims=True)
        z = ad.leaky_relu(self.squeeze(s), 0.2)
        logits = ad.concat([proj(z) for proj in self.branch_proj], axis=1)
        b, c = shape0[0], shape0[1]
        logits = ad.reshape(logits, (b, self.n_branches, c, 1, 1))
        return ad.softmax(logits, axis=1)

    def forward(self, branches):
        branches = [ad.as_tensor(b) for b in branches]
        w = self.attention(branches)
        out = None
        for k, br in enumerate(branches):
            wk = ad.reshape(
                ad.narrow(w, 1, k, 1), (br.shape[0], br.shape[1], 1, 1)
            )
            term = br * wk
            out = term if out is None else out + term
        return out


class ChannelAttention(Module):
    """Scale each channel by a sigmoid gate of its pooled statistics."""

    def __init__(self, channels, rng=None):
        self.gate = Conv2d(channels, channels, 1, rng=rng)

    def weights(self, x):
        s = ad.mean(x, axis=(2, 3), keepdims=True)
        return ad.sigmoid(self.gate(s))

    def forward(self, x):
        x = ad.as_tensor(x)
        return x * self.weights(x)


class CrossAttention(Module):
    """Scaled dot-product cross-attention with channels as tokens.

    Queries come from x, keys and values from the guide; attending over
    channels keeps cost linear in image area. Output shape equals x.
    """

    def __init__(self, channels, rng=None):
        self.q_proj = Conv2d(channels, channels, 1, rng=rng)
        self.k_proj = Conv2d(channels, channels, 1, rng=rng)
        self.v_proj = Conv2d(channels, channels, 1, rng=rng)
        self.out_proj = Conv2d(channels, channels, 1, rng=rng)

    def attention(self, guide, x):
        if guide.shape != x.shape:
            raise ShapeError(f"guide shape {guide.shape} != x shape {x.shape}")
        b, c, h, w = x.shape
        q = ad.reshape(self.q_proj(x), (b, c, h * w))
        k = ad.reshape(self.k_proj(guide), (b, c, h * w))
        logits = ad.matmul(q, ad.transpose(k, (0, 2, 1))) * float(1.0 / np.sqrt(h * w))
        return ad.softmax(logits, axis=-1)

    def forward(self, guide, x):
        guide, x = ad.as_tensor(guide), ad.as_tensor(x)
        b, c, h, w = x.shape
        attn = self.attention(guide, x)
        v = ad.reshape(self.v_proj(guide), (b, c, h * w))
        out = ad.reshape(ad.matmul(attn, v), (b, c, h, w))
        return self.out_proj(out)
