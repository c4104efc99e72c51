"""Synthetic stereo low-light data: degradation, cropping, dataset ingestion.

Ground-truth stereo pairs live in a directory as {scene_id}_L.png and
{scene_id}_R.png. Low-light inputs are generated with a parametric
degradation (gamma curve, gain, optional smooth illumination field,
heteroscedastic noise) applied with identical parameters to both views of a
pair. Deep supervision targets are the deepest approximation band of a
three-level wavelet decomposition of the ground truth, cached as raw float
arrays with a small header.
"""

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .errors import ArgumentError, IngestionError, ShapeError, ValidationError
from .images import load_png, to_bchw
from .wavelet import decompose

CACHE_MAGIC = b"WDCA"
CACHE_VERSION = 1
_DTYPE_TAGS = {0: np.float32, 1: np.float64}
_TAG_OF = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}

# Sampling ranges for generated datasets; explicit construction may use any
# value inside the wider VALID ranges below.
GAMMA_RANGE = (2.0, 3.5)
GAIN_RANGE = (0.1, 0.5)
VALID_GAMMA = (0.5, 5.0)
VALID_GAIN = (1e-3, 1.0)


@dataclass
class DegradationParams:
    gamma: float
    gain: float
    read_noise_sigma: float = 0.0
    shot_noise_scale: float = 0.0
    illum_field: Optional[np.ndarray] = None
    seed: int = 0

    def validate(self):
        if not (VALID_GAMMA[0] <= self.gamma <= VALID_GAMMA[1]):
            raise ValidationError(f"gamma {self.gamma} outside {VALID_GAMMA}")
        if not (VALID_GAIN[0] <= self.gain <= VALID_GAIN[1]):
            raise ValidationError(f"gain {self.gain} outside {VALID_GAIN}")
        if self.read_noise_sigma < 0 or self.shot_noise_scale < 0:
            raise ValidationError("noise magnitudes must be nonnegative")
        if self.illum_field is not None:
            f = np.asarray(self.illum_field)
            if f.min() < 0.2 - 1e-6 or f.max() > 1.0 + 1e-6:
                raise ValidationError(
                    f"illumination field range [{f.min():.3f}, {f.max():.3f}] "
                    "outside [0.2, 1.0]"
                )

    @classmethod
    def sample(cls, seed, shape_hw=None, non_uniform=False):
        """Draw parameters deterministically; the field needs the image size."""
        rng = np.random.default_rng(seed)
        gamma = float(rng.uniform(*GAMMA_RANGE))
        gain = float(rng.uniform(*GAIN_RANGE))
        read = float(rng.uniform(0.002, 0.01))
        shot = float(rng.uniform(0.001, 0.005))
        field = None
        if non_uniform:
            if shape_hw is None:
                raise ArgumentError("non-uniform sampling needs the image shape")
            field = make_illum_field(shape_hw, rng)
        return cls(gamma, gain, read, shot, field, seed=seed)


def make_illum_field(shape_hw, rng, grid=8, amplitude=0.15):
    """Smooth illumination field in [0.25, 0.95], bilinear from a coarse grid."""
    h, w = shape_hw
    coarse = rng.uniform(0.0, 1.0, (grid, grid)).astype(np.float32)
    img = Image.fromarray(coarse, mode="F").resize((w, h), Image.BILINEAR)
    up = np.asarray(img, dtype=np.float32)
    base = float(rng.uniform(0.25, 0.95 - amplitude))
    return base + amplitude * up


def _degrade_one(img, p: DegradationParams, rng):
    x = img.astype(np.float32)
    if p.gamma != 1.0:
        x = np.power(x, p.gamma)
    x = p.gain * x
    if p.illum_field is not None:
        field = np.asarray(p.illum_field, dtype=np.float32)
        if field.shape != x.shape[:2]:
            raise ShapeError(
                f"illumination field {field.shape} does not match image {x.shape[:2]}"
            )
        x = x * field[..., None]
    if p.read_noise_sigma > 0:
        x = x + rng.normal(0.0, p.read_noise_sigma, x.shape).astype(np.float32)
    if p.shot_noise_scale > 0:
        std = np.sqrt(p.shot_noise_scale * np.clip(x, 0.0, None))
        x = x + (rng.standard_normal(x.shape).astype(np.float32) * std.astype(np.float32))
    return np.clip(x, 0.0, 1.0)


def degrade(gt_pair, p: DegradationParams):
    """Apply one parameter set to both views; deterministic per p.seed."""
    p.validate()
    rng = np.random.default_rng(p.seed)
    left, right = gt_pair
    return _degrade_one(np.asarray(left), p, rng), _degrade_one(np.asarray(right), p, rng)


# -- samples ------------------------------------------------------------------------


@dataclass
class StereoSample:
    """One (possibly batched) training sample, all arrays (B, 3, H, W)."""

    low_left: np.ndarray
    low_right: np.ndarray
    gt_left: np.ndarray
    gt_right: np.ndarray
    gt_low3_left: np.ndarray
    gt_low3_right: np.ndarray
    scene_ids: tuple = ()

    def validate(self):
        imgs = (self.low_left, self.low_right, self.gt_left, self.gt_right)
        shape = imgs[0].shape
        for name, a in zip(("low_left", "low_right", "gt_left", "gt_right"), imgs):
            if a.shape != shape:
                raise ValidationError(f"{name} shape {a.shape} != {shape}")
            if not np.isfinite(a).all():
                raise ValidationError(f"{name} contains non-finite values")
        b, c, h, w = shape
        want = (b, c, h // 8, w // 8)
        for name, a in (("gt_low3_left", self.gt_low3_left), ("gt_low3_right", self.gt_low3_right)):
            if a.shape != want:
                raise ValidationError(f"{name} shape {a.shape} != expected {want}")
        return self


def deep_target(gt_bchw, levels=3):
    """Deepest approximation band of the multi-level transform of the GT."""
    return decompose(np.asarray(gt_bchw, dtype=np.float32), levels).levels[-1].cA


def make_sample(low_pair, gt_pair, scene_id="") -> StereoSample:
    ll, _ = to_bchw(low_pair[0])
    lr, _ = to_bchw(low_pair[1])
    gl, _ = to_bchw(gt_pair[0])
    gr, _ = to_bchw(gt_pair[1])
    return StereoSample(
        low_left=ll.astype(np.float32),
        low_right=lr.astype(np.float32),
        gt_left=gl.astype(np.float32),
        gt_right=gr.astype(np.float32),
        gt_low3_left=deep_target(gl),
        gt_low3_right=deep_target(gr),
        scene_ids=(scene_id,),
    ).validate()


def random_crop(sample: StereoSample, size: int, seed) -> StereoSample:
    """One shared crop window for all six tensors; window aligned to the
    8-pixel grid so the deep targets stay exact crops."""
    b, c, h, w = sample.gt_left.shape
    if size % 8:
        raise ArgumentError(f"crop size {size} must be divisible by 8")
    if size > h or size > w:
        raise ArgumentError(f"crop size {size} exceeds image ({h}, {w})")
    rng = np.random.default_rng(seed)
    top = 8 * int(rng.integers(0, (h - size) // 8 + 1))
    left = 8 * int(rng.integers(0, (w - size) // 8 + 1))
    t8, l8, s8 = top // 8, left // 8, size // 8

    def cut(a):
        return np.ascontiguousarray(a[..., top : top + size, left : left + size])

    def cut8(a):
        return np.ascontiguousarray(a[..., t8 : t8 + s8, l8 : l8 + s8])

    return StereoSample(
        low_left=cut(sample.low_left),
        low_right=cut(sample.low_right),
        gt_left=cut(sample.gt_left),
        gt_right=cut(sample.gt_right),
        gt_low3_left=cut8(sample.gt_low3_left),
        gt_low3_right=cut8(sample.gt_low3_right),
        scene_ids=sample.scene_ids,
    )


def stack_samples(samples) -> StereoSample:
    return StereoSample(
        low_left=np.concatenate([s.low_left for s in samples]),
        low_right=np.concatenate([s.low_right for s in samples]),
        gt_left=np.concatenate([s.gt_left for s in samples]),
        gt_right=np.concatenate([s.gt_right for s in samples]),
        gt_low3_left=np.concatenate([s.gt_low3_left for s in samples]),
        gt_low3_right=np.concatenate([s.gt_low3_right for s in samples]),
        scene_ids=tuple(i for s in samples for i in s.scene_ids),
    )


# -- cache files ----------------------------------------------------------------------


def write_array(path, arr):
    """Raw float array with header: magic, version, dtype tag, ndim, dims."""
    arr = np.ascontiguousarray(arr)
    tag = _TAG_OF.get(arr.dtype)
    if tag is None:
        raise ArgumentError(f"unsupported cache dtype {arr.dtype}")
    with open(path, "wb") as f:
        f.write(CACHE_MAGIC)
        f.write(struct.pack("<IBB", CACHE_VERSION, tag, arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(arr.tobytes())


def read_array(path):
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CACHE_MAGIC:
            raise ValidationError(f"{path}: bad cache magic {magic!r}")
        version, tag, ndim = struct.unpack("<IBB", f.read(6))
        if version != CACHE_VERSION:
            raise ValidationError(f"{path}: cache version {version} unsupported")
        shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
        dtype = _DTYPE_TAGS.get(tag)
        if dtype is None:
            raise ValidationError(f"{path}: unknown dtype tag {tag}")
        data = np.frombuffer(f.read(), dtype=dtype)
    return data.reshape(shape).copy()


# -- dataset ---------------------------------------------------------------------------


@dataclass
class SceneEntry:
    scene_id: str
    split: str
    left_path: Path
    right_path: Path
    param_seed: int
    non_uniform: bool


def _scene_seed(dataset_seed, scene_id):
    h = hashlib.sha256(f"{dataset_seed}:{scene_id}".encode()).digest()
    return int.from_bytes(h[:8], "little")


def make_manifest(scene_ids, val_fraction=0.2, seed=0):
    """Deterministic train/val labeling; returns [(scene_id, split), ...]."""
    ids = sorted(scene_ids)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    n_val = int(round(len(ids) * val_fraction))
    val = {ids[i] for i in order[:n_val]}
    return [(sid, "val" if sid in val else "train") for sid in ids]


def write_manifest(path, entries):
    with open(path, "w") as f:
        for sid, split in entries:
            f.write(f"{sid} {split}\n")


def read_manifest(path):
    entries = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2 or parts[1] not in ("train", "val"):
            raise IngestionError(f"bad manifest line: {line!r}")
        entries.append((parts[0], parts[1]))
    return entries


class StereoDataset:
    """Enumerable set of stereo scenes with deterministic degradation."""

    def __init__(self, root_dir, entries, seed=0, cache_dir=None, non_uniform_fraction=0.4):
        self.root = Path(root_dir)
        self.seed = seed
        self.cache_dir = Path(cache_dir) if cache_dir else None
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        missing = []
        self.entries = []
        for sid, split in entries:
            lp = self.root / f"{sid}_L.png"
            rp = self.root / f"{sid}_R.png"
            if not lp.exists() or not rp.exists():
                missing.append(sid)
                continue
            pseed = _scene_seed(seed, sid)
            nu = np.random.default_rng(pseed).uniform() < non_uniform_fraction
            self.entries.append(SceneEntry(sid, split, lp, rp, pseed, nu))
        if missing:
            raise IngestionError(
                f"scenes missing a view under {root_dir}: {', '.join(sorted(missing))}"
            )

    @property
    def train_entries(self):
        return [e for e in self.entries if e.split == "train"]

    @property
    def val_entries(self):
        return [e for e in self.entries if e.split == "val"]

    def __len__(self):
        return len(self.entries)

    def _cached_target(self, entry, side, gt_bchw):
        if self.cache_dir is None:
            return deep_target(gt_bchw)
        path = self.cache_dir / f"{entry.scene_id}_{side}_low3.bin"
        if path.exists():
            return read_array(path)
        target = deep_target(gt_bchw)
        write_array(path, target)
        return target

    def load(self, entry: SceneEntry) -> StereoSample:
        gt_l = load_png(entry.left_path)
        gt_r = load_png(entry.right_path)
        params = DegradationParams.sample(
            entry.param_seed, shape_hw=gt_l.shape[:2], non_uniform=entry.non_uniform
        )
        low_l, low_r = degrade((gt_l, gt_r), params)
        gl, _ = to_bchw(gt_l)
        gr, _ = to_bchw(gt_r)
        ll, _ = to_bchw(low_l)
        lr, _ = to_bchw(low_r)
        return StereoSample(
            low_left=ll.astype(np.float32),
            low_right=lr.astype(np.float32),
            gt_left=gl.astype(np.float32),
            gt_right=gr.astype(np.float32),
            gt_low3_left=self._cached_target(entry, "L", gl),
            gt_low3_right=self._cached_target(entry, "R", gr),
            scene_ids=(entry.scene_id,),
        ).validate()


def build_dataset(root_dir, manifest, seed=0, cache_dir=None) -> StereoDataset:
    """Ingest a GT pair directory; `manifest` is a path or (id, split) list."""
    entries = read_manifest(manifest) if isinstance(manifest, (str, Path)) else list(manifest)
    return StereoDataset(root_dir, entries, seed=seed, cache_dir=cache_dir)


# -- synthetic scenes --------------------------------------------------------------------


def synthesize_stereo_pair(seed, size=96, max_disparity=8):
    """Procedural stereo pair: smooth background plus soft boxes shifted by
    per-object disparity in the right view. Returns two (H, W, 3) images."""
    rng = np.random.default_rng(seed)
    h = w = int(size)
    canvas_w = w + max_disparity

    coarse = rng.uniform(0.15, 0.95, (3, 6, 6)).astype(np.float32)
    bg = np.stack(
        [
            np.asarray(
                Image.fromarray(coarse[c], mode="F").resize(
                    (canvas_w, h), Image.BILINEAR
                ),
                dtype=np.float32,
            )
            for c in range(3)
        ],
        axis=-1,
    )

    left = np.empty((h, w, 3), dtype=np.float32)
    right = np.empty((h, w, 3), dtype=np.float32)
    bg_disp = int(rng.integers(0, 3))
    left[:] = bg[:, max_disparity:, :]
    right[:] = bg[:, max_disparity - bg_disp : canvas_w - bg_disp, :]

    for _ in range(int(rng.integers(5, 9))):
        bh = int(rng.integers(h // 8, h // 2))
        bw = int(rng.integers(w // 8, w // 2))
        top = int(rng.integers(0, h - bh))
        lft = int(rng.integers(0, w - bw))
        disp = int(rng.integers(0, max_disparity + 1))
        color = rng.uniform(0.1, 0.95, 3).astype(np.float32)
        alpha = float(rng.uniform(0.6, 1.0))
        left[top : top + bh, lft : lft + bw] = (
            alpha * color + (1 - alpha) * left[top : top + bh, lft : lft + bw]
        )
        r0 = max(lft - disp, 0)
        r1 = max(lft + bw - disp, 0)
        if r1 > r0:
            right[top : top + bh, r0:r1] = (
                alpha * color + (1 - alpha) * right[top : top + bh, r0:r1]
            )
    return np.clip(left, 0, 1), np.clip(right, 0, 1)


def generate_scene_dir(root_dir, n_pairs, size=96, seed=0):
    """Write n synthetic GT pairs as PNGs; returns the scene ids."""
    from .images import save_png

    root = Path(root_dir)
    root.mkdir(parents=True, exist_ok=True)
    ids = []
    for i in range(n_pairs):
        sid = f"s{i:04d}"
        gt_l, gt_r = synthesize_stereo_pair(seed + i, size=size)
        save_png(root / f"{sid}_L.png", gt_l)
        save_png(root / f"{sid}_R.png", gt_r)
        ids.append(sid)
    return ids
