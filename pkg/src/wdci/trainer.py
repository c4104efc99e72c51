"""Training loop, validation, evaluation, checkpointing.

Desk-scale defaults (batch 2, crops of 64, 50 epochs) keep a run in the
minutes range on CPU; the published-protocol values (batch 20, crops of 128,
1000 epochs, initial learning rate 2e-4 halved every 250 epochs) are
available through paper_scale(). Runs are fully deterministic under a fixed
seed on one platform configuration.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import autodiff as ad
from .data import StereoDataset, random_crop, stack_samples
from .errors import ArgumentError, ConfigError, TrainingDiverged
from .images import reflect_pad_to_multiple
from .losses import LossFlags, make_extractor, psnr, ssim_index, total_loss
from .network import NetConfig, WDCINet, load_checkpoint, save_checkpoint
from .optim import Adam, clip_global_norm


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 2
    crop_size: int = 64
    lr_initial: float = 2e-4
    lr_halve_every: int = 250
    seed: int = 0
    channels: int = 16
    levels: int = 3
    iam_kernel: int = 7
    grad_clip: float = 1.0
    extractor: str = "conv5"
    vgg_weights: str = ""
    # ablation switches (each maps to one module or loss term)
    disable_hf_cim: bool = False
    disable_dtem: bool = False
    disable_iam: bool = False
    disable_downsample_fusion: bool = False
    disable_freq_loss: bool = False
    disable_spa_loss: bool = False
    disable_freq18_loss: bool = False
    disable_spa18_loss: bool = False
    disable_vgg18_loss: bool = False

    def validate(self):
        for name in ("epochs", "batch_size", "crop_size", "lr_initial", "lr_halve_every", "channels", "levels"):
            if getattr(self, name) <= 0:
                raise ArgumentError(f"{name} must be positive, got {getattr(self, name)}")
        if self.crop_size % (2**self.levels):
            raise ArgumentError(
                f"crop_size {self.crop_size} must be divisible by 2^levels = {2**self.levels}"
            )
        return self

    def net_config(self) -> NetConfig:
        return NetConfig(
            base_channels=self.channels,
            levels=self.levels,
            iam_kernel=self.iam_kernel,
            use_hf_cim=not self.disable_hf_cim,
            use_dtem=not self.disable_dtem,
            use_iam=not self.disable_iam,
            use_downsample_fusion=not self.disable_downsample_fusion,
            seed=self.seed,
        )

    def loss_flags(self) -> LossFlags:
        return LossFlags(
            use_freq=not self.disable_freq_loss,
            use_spa=not self.disable_spa_loss,
            use_freq18=not self.disable_freq18_loss,
            use_spa18=not self.disable_spa18_loss,
            use_vgg18=not self.disable_vgg18_loss,
        )

    def hash(self) -> str:
        import hashlib

        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def paper_scale(**overrides) -> TrainConfig:
    """The published training protocol as a config preset."""
    cfg = TrainConfig(epochs=1000, batch_size=20, crop_size=128)
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg.validate()


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Initial rate halved every lr_halve_every epochs (floor division)."""
    return cfg.lr_initial * 0.5 ** (epoch // cfg.lr_halve_every)


@dataclass
class CheckpointSeries:
    best_path: Optional[Path]
    last_path: Path
    log_path: Path
    history: list = field(default_factory=list)


def _build_extractor(cfg: TrainConfig):
    if cfg.disable_vgg18_loss:
        return None
    return make_extractor(cfg.extractor, weights_path=cfg.vgg_weights or None)


def enhance_pair(model: WDCINet, low_left, low_right):
    """Enhance one (H, W, 3) pair; pads internally and restores the size."""
    from .images import to_bchw

    mult = 2**model.cfg.levels
    ll, _ = to_bchw(np.asarray(low_left, dtype=np.float32))
    rr, _ = to_bchw(np.asarray(low_right, dtype=np.float32))
    h, w = ll.shape[2], ll.shape[3]
    ll, _pad = reflect_pad_to_multiple(ll, mult)
    rr, _ = reflect_pad_to_multiple(rr, mult)
    with ad.no_grad():
        out = model.forward(ll, rr)
    enh_l = out.enhanced_left.data[0, :, :h, :w]
    enh_r = out.enhanced_right.data[0, :, :h, :w]
    return (
        np.clip(enh_l, 0.0, 1.0).transpose(1, 2, 0),
        np.clip(enh_r, 0.0, 1.0).transpose(1, 2, 0),
    )


def _validate_model(model, entries, dataset):
    scores = []
    for entry in entries:
        sample = dataset.load(entry)
        with ad.no_grad():
            out = model.forward(sample.low_left, sample.low_right)
        el = np.clip(out.enhanced_left.data, 0, 1)
        er = np.clip(out.enhanced_right.data, 0, 1)
        scores.append(
            (
                psnr(el, sample.gt_left),
                psnr(er, sample.gt_right),
                ssim_index(el, sample.gt_left),
                ssim_index(er, sample.gt_right),
            )
        )
    arr = np.asarray(scores)
    return {
        "val_psnr_l": float(arr[:, 0].mean()),
        "val_psnr_r": float(arr[:, 1].mean()),
        "val_ssim_l": float(arr[:, 2].mean()),
        "val_ssim_r": float(arr[:, 3].mean()),
    }


def train(cfg: TrainConfig, dataset: StereoDataset, out_dir, max_steps=None) -> CheckpointSeries:
    """Optimize on the train split; logs one JSON record per epoch."""
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_entries = dataset.train_entries
    if not train_entries:
        raise ArgumentError("dataset has an empty train split")
    val_entries = dataset.val_entries

    model = WDCINet(cfg.net_config())
    extractor = _build_extractor(cfg)
    flags = cfg.loss_flags()
    opt = Adam(model.parameters())
    samples = [dataset.load(e) for e in train_entries]

    log_path = out / "train_log.jsonl"
    last_path = out / "last.npz"
    best_path = out / "best.npz"
    history = []
    best_score = -math.inf
    have_best = False
    order_rng = np.random.default_rng([cfg.seed, 1])
    steps_per_epoch = math.ceil(len(samples) / cfg.batch_size)
    global_step = 0

    with open(log_path, "w") as log_f:
        for epoch in range(cfg.epochs):
            lr = lr_at(epoch, cfg)
            perm = order_rng.permutation(len(samples))
            term_sums = np.zeros(6)
            n_batches = 0
            for step in range(steps_per_epoch):
                if max_steps is not None and global_step >= max_steps:
                    break
                idx = perm[step * cfg.batch_size : (step + 1) * cfg.batch_size]
                crops = [
                    random_crop(
                        samples[i], cfg.crop_size, seed=[cfg.seed, 2, epoch, step, int(i)]
                    )
                    for i in idx
                ]
                batch = stack_samples(crops)
                out_t = model.forward(batch.low_left, batch.low_right)
                bd = total_loss(out_t, batch, extractor, flags)
                if not math.isfinite(bd.total):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch} step {step}: {bd}",
                        batch_index=step,
                        breakdown=bd,
                    )
                model.zero_grad()
                bd.graph.backward()
                if cfg.grad_clip > 0:
                    clip_global_norm(model.parameters(), cfg.grad_clip)
                opt.step(lr)
                term_sums += (
                    bd.l_fre,
                    bd.l_spa,
                    bd.l_fre_1_8,
                    bd.l_spa_1_8,
                    bd.l_vgg_1_8,
                    bd.total,
                )
                n_batches += 1
                global_step += 1

            record = {
                "epoch": epoch,
                "lr": lr,
                "l_fre": term_sums[0] / max(n_batches, 1),
                "l_spa": term_sums[1] / max(n_batches, 1),
                "l_fre_1_8": term_sums[2] / max(n_batches, 1),
                "l_spa_1_8": term_sums[3] / max(n_batches, 1),
                "l_vgg_1_8": term_sums[4] / max(n_batches, 1),
                "total": term_sums[5] / max(n_batches, 1),
            }
            if val_entries:
                record.update(_validate_model(model, val_entries, dataset))
                score = (record["val_psnr_l"] + record["val_psnr_r"]) / 2.0
                if score > best_score:
                    best_score = score
                    save_checkpoint(best_path, model, epoch=epoch, extra={"train_config": asdict(cfg)})
                    have_best = True
            log_f.write(json.dumps(record) + "\n")
            log_f.flush()
            history.append(record)
            if max_steps is not None and global_step >= max_steps:
                break

    save_checkpoint(last_path, model, epoch=cfg.epochs - 1, extra={"train_config": asdict(cfg)})
    if not have_best:
        save_checkpoint(best_path, model, epoch=cfg.epochs - 1, extra={"train_config": asdict(cfg)})
    return CheckpointSeries(best_path=best_path, last_path=last_path, log_path=log_path, history=history)


@dataclass
class MetricsTable:
    rows: list
    means: dict

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["scene_id", "psnr_left", "psnr_right", "ssim_left", "ssim_right"])
            for row in self.rows:
                w.writerow(row)

    def console(self):
        lines = [f"{'scene':<12}{'PSNR L':>9}{'PSNR R':>9}{'SSIM L':>9}{'SSIM R':>9}"]
        for sid, pl, pr, sl, sr in self.rows:
            lines.append(f"{sid:<12}{pl:>9.3f}{pr:>9.3f}{sl:>9.4f}{sr:>9.4f}")
        m = self.means
        lines.append(
            f"{'mean':<12}{m['psnr_left']:>9.3f}{m['psnr_right']:>9.3f}"
            f"{m['ssim_left']:>9.4f}{m['ssim_right']:>9.4f}"
        )
        return "\n".join(lines)


def evaluate(checkpoint_path, dataset: StereoDataset, split="val", expect_config_hash=None) -> MetricsTable:
    """Per-scene PSNR/SSIM for both views, plus their means."""
    model, manifest = load_checkpoint(checkpoint_path)
    if expect_config_hash is not None and expect_config_hash != manifest["config_hash"]:
        raise ConfigError(
            f"checkpoint config hash {manifest['config_hash']} does not match "
            f"expected {expect_config_hash}"
        )
    entries = dataset.val_entries if split == "val" else dataset.entries
    if split == "val" and not entries:
        entries = dataset.entries
    rows = []
    for entry in entries:
        sample = dataset.load(entry)
        enh_l, enh_r = enhance_pair(
            model,
            sample.low_left[0].transpose(1, 2, 0),
            sample.low_right[0].transpose(1, 2, 0),
        )
        gt_l = sample.gt_left[0].transpose(1, 2, 0)
        gt_r = sample.gt_right[0].transpose(1, 2, 0)
        rows.append(
            (
                entry.scene_id,
                psnr(enh_l, gt_l),
                psnr(enh_r, gt_r),
                ssim_index(enh_l, gt_l),
                ssim_index(enh_r, gt_r),
            )
        )
    arr = np.asarray([r[1:] for r in rows], dtype=np.float64)
    means = {
        "psnr_left": float(arr[:, 0].mean()) if len(rows) else float("nan"),
        "psnr_right": float(arr[:, 1].mean()) if len(rows) else float("nan"),
        "ssim_left": float(arr[:, 2].mean()) if len(rows) else float("nan"),
        "ssim_right": float(arr[:, 3].mean()) if len(rows) else float("nan"),
    }
    return MetricsTable(rows=rows, means=means)
