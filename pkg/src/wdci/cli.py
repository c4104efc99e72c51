"""Command-line entry point.

Subcommands: train, enhance, evaluate, lfswap, ablate. Every run resolves
its configuration first, writes it under the output directory, and keeps all
artifacts there. Exit codes: 0 success, 1 runtime failure, 2 usage or
configuration error. WDCI_OUT overrides the default output root.
"""

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from .config import resolve_train_config, train_config_mapping, write_resolved
from .data import (
    DegradationParams,
    build_dataset,
    degrade,
    make_manifest,
    synthesize_stereo_pair,
    write_manifest,
)
from .errors import ConfigError, TrainingDiverged, WdciError
from .images import load_png, save_png
from .losses import mse_binary_map, psnr
from .network import load_checkpoint
from .trainer import enhance_pair, evaluate, train
from .wavelet import low_frequency_exchange

ABLATION_FLAGS = {
    "no-dtem": "disable_dtem",
    "no-hf-cim": "disable_hf_cim",
    "no-iam": "disable_iam",
    "no-down-fusion": "disable_downsample_fusion",
    "no-fre": "disable_freq_loss",
    "no-spa": "disable_spa_loss",
    "no-fre18": "disable_freq18_loss",
    "no-spa18": "disable_spa18_loss",
    "no-vgg18": "disable_vgg18_loss",
}


def _default_out(subcommand):
    root = os.environ.get("WDCI_OUT", "wdci_out")
    return str(Path(root) / subcommand)


def _parse_overrides(pairs):
    overrides = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def _resolve_for(args, extra_overrides=None):
    overrides = _parse_overrides(getattr(args, "set", None))
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = str(args.seed)
    if extra_overrides:
        overrides.update(extra_overrides)
    return resolve_train_config(getattr(args, "config", None), overrides)


def _require_path(path, what):
    if not Path(path).exists():
        raise ConfigError(f"{what} not found: {path}")
    return Path(path)


def _dataset_for(args, out, cfg_seed):
    data_root = _require_path(args.data, "dataset path")
    if args.manifest:
        manifest = _require_path(args.manifest, "manifest")
        entries = manifest
    else:
        ids = sorted(p.name[:-6] for p in data_root.glob("*_L.png"))
        entries = make_manifest(ids, val_fraction=args.val_fraction, seed=cfg_seed)
        write_manifest(out / "manifest.txt", entries)
    return build_dataset(data_root, entries, seed=cfg_seed, cache_dir=out / "cache")


def cmd_train(args) -> int:
    out = Path(args.out)
    extra = {}
    for name in args.ablate or []:
        if name not in ABLATION_FLAGS:
            raise ConfigError(
                f"unknown ablation {name!r}; choose from {', '.join(sorted(ABLATION_FLAGS))}"
            )
        extra[ABLATION_FLAGS[name]] = "true"
    cfg = _resolve_for(args, extra)
    mapping = train_config_mapping(cfg)
    mapping["config_hash"] = cfg.hash()
    mapping["command"] = "train"
    write_resolved(out, mapping)
    dataset = _dataset_for(args, out, cfg.seed)
    series = train(cfg, dataset, out, max_steps=args.max_steps)
    print(f"wrote {series.last_path} and {series.log_path}")
    return 0


def cmd_enhance(args) -> int:
    out = Path(args.out)
    ckpt = _require_path(args.checkpoint, "checkpoint")
    left_path = _require_path(args.left, "left image")
    right_path = _require_path(args.right, "right image")
    write_resolved(
        out,
        {
            "command": "enhance",
            "checkpoint": str(ckpt),
            "left": str(left_path),
            "right": str(right_path),
            "seed": args.seed,
        },
    )
    model, _manifest = load_checkpoint(ckpt)
    enh_l, enh_r = enhance_pair(model, load_png(left_path), load_png(right_path))
    lp = out / f"{left_path.stem}_enhanced.png"
    rp = out / f"{right_path.stem}_enhanced.png"
    save_png(lp, enh_l)
    save_png(rp, enh_r)
    print(f"wrote {lp} and {rp}")
    return 0


def cmd_evaluate(args) -> int:
    out = Path(args.out)
    ckpt = _require_path(args.checkpoint, "checkpoint")
    write_resolved(
        out,
        {
            "command": "evaluate",
            "checkpoint": str(ckpt),
            "data": args.data,
            "threshold": args.threshold,
            "split": args.split,
            "seed": args.seed,
        },
    )
    dataset = _dataset_for(args, out, args.seed or 0)
    expect = None
    if args.config:
        expect = _resolve_for(args).hash()
    table = evaluate(ckpt, dataset, split=args.split, expect_config_hash=expect)
    table.to_csv(out / "metrics.csv")
    print(table.console())

    model, _ = load_checkpoint(ckpt)
    maps_dir = out / "mse_maps"
    maps_dir.mkdir(exist_ok=True)
    entries = dataset.val_entries if args.split == "val" else dataset.entries
    if args.split == "val" and not entries:
        entries = dataset.entries
    for entry in entries:
        sample = dataset.load(entry)
        enh_l, enh_r = enhance_pair(
            model,
            sample.low_left[0].transpose(1, 2, 0),
            sample.low_right[0].transpose(1, 2, 0),
        )
        for side, enh, gt in (
            ("L", enh_l, sample.gt_left[0].transpose(1, 2, 0)),
            ("R", enh_r, sample.gt_right[0].transpose(1, 2, 0)),
        ):
            m = mse_binary_map(enh, gt, args.threshold)
            save_png(maps_dir / f"{entry.scene_id}_{side}.png", m[..., None].repeat(3, -1).astype(np.float32))
    print(f"wrote {out / 'metrics.csv'} and {maps_dir}")
    return 0


def _lfswap_pairs(args, out):
    if args.synthetic:
        rng = np.random.default_rng(args.seed or 0)
        for i in range(args.synthetic):
            normal, _right = synthesize_stereo_pair((args.seed or 0) + i, size=args.size)
            params = DegradationParams(
                gamma=1.0,
                gain=float(rng.uniform(0.1, 0.3)),
                read_noise_sigma=0.003,
                shot_noise_scale=0.001,
                seed=(args.seed or 0) + 1000 + i,
            )
            low, _ = degrade((normal, normal), params)
            yield f"syn{i:04d}", low, normal
    else:
        data_root = _require_path(args.data, "pair directory")
        for low_path in sorted(data_root.glob("*_low.png")):
            pair_id = low_path.name[: -len("_low.png")]
            normal_path = data_root / f"{pair_id}_normal.png"
            if not normal_path.exists():
                raise ConfigError(f"missing counterpart for {low_path.name}: {normal_path.name}")
            yield pair_id, load_png(low_path), load_png(normal_path)


def cmd_lfswap(args) -> int:
    out = Path(args.out)
    write_resolved(
        out,
        {
            "command": "lfswap",
            "data": args.data or "",
            "synthetic": args.synthetic or 0,
            "levels": "1,2,3",
            "seed": args.seed,
        },
    )
    csv_path = out / "lfswap.csv"
    by_level = {1: [], 2: [], 3: []}
    n_pairs = 0
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(
            [
                "pair_id",
                "level",
                "psnr_s_normal_vs_normal",
                "psnr_s_low_vs_normal",
                "psnr_low_vs_normal",
            ]
        )
        for pair_id, low, normal in _lfswap_pairs(args, out):
            n_pairs += 1
            for level in (1, 2, 3):
                s_normal, s_low = low_frequency_exchange(low, normal, level)
                row = (
                    psnr(s_normal, normal),
                    psnr(s_low, normal),
                    psnr(low, normal),
                )
                by_level[level].append(row)
                w.writerow([pair_id, level, f"{row[0]:.4f}", f"{row[1]:.4f}", f"{row[2]:.4f}"])

    summary_path = out / "summary.txt"
    with open(summary_path, "w") as f:
        if n_pairs == 0:
            f.write("no pairs found; empty run\n")
        else:
            for level in (1, 2, 3):
                arr = np.asarray(by_level[level])
                line = (
                    f"L={level}: mean PSNR(s_normal, normal) = {arr[:, 0].mean():.3f} dB, "
                    f"mean PSNR(s_low, normal) = {arr[:, 1].mean():.3f} dB, "
                    f"mean PSNR(low, normal) = {arr[:, 2].mean():.3f} dB"
                )
                f.write(line + "\n")
            arr3 = np.asarray(by_level[3])
            ordered = arr3[:, 0].mean() > arr3[:, 1].mean()
            f.write(
                "ordering (swapped-in normal approximation beats swapped-in low "
                f"approximation at L=3): {'satisfied' if ordered else 'VIOLATED'}\n"
            )
    print(Path(summary_path).read_text(), end="")
    print(f"wrote {csv_path}")
    return 0


def cmd_ablate(args) -> int:
    out = Path(args.out)
    cfg = _resolve_for(args)
    mapping = train_config_mapping(cfg)
    mapping["command"] = "ablate"
    write_resolved(out, mapping)
    dataset = _dataset_for(args, out, cfg.seed)
    results = []
    from .network import WDCINet

    baseline_params = WDCINet(cfg.net_config()).num_params()
    for name in ["baseline"] + sorted(ABLATION_FLAGS):
        run_cfg = resolve_train_config(
            None,
            {
                **{k: str(v) for k, v in train_config_mapping(cfg).items()},
                **({ABLATION_FLAGS[name]: "true"} if name != "baseline" else {}),
            },
        )
        run_cfg.epochs = 1
        series = train(run_cfg, dataset, out / name.replace("-", "_"), max_steps=1)
        n_params = WDCINet(run_cfg.net_config()).num_params()
        results.append((name, n_params, series.history[0]["total"]))
    summary = out / "ablations.csv"
    with open(summary, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["ablation", "n_params", "one_step_loss", "baseline_params"])
        for name, n_params, loss in results:
            w.writerow([name, n_params, f"{loss:.6f}", baseline_params])
    for name, n_params, loss in results:
        print(f"{name:<16} params={n_params:<10} one-step loss={loss:.4f}")
    print(f"wrote {summary}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="wdci", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, default_out):
        sp.add_argument("--out", default=_default_out(default_out), help="output directory")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--config", default=None, help="flat key=value config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override")

    sp = sub.add_parser("train", help="train the network")
    common(sp, "train")
    sp.add_argument("--data", required=True, help="directory of {id}_L.png/{id}_R.png GT pairs")
    sp.add_argument("--manifest", default=None, help="scene_id/split manifest file")
    sp.add_argument("--val-fraction", type=float, default=0.2)
    sp.add_argument("--ablate", action="append", choices=sorted(ABLATION_FLAGS), help="disable one module/loss")
    sp.add_argument("--max-steps", type=int, default=None)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("enhance", help="enhance one stereo pair")
    common(sp, "enhance")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--left", required=True)
    sp.add_argument("--right", required=True)
    sp.set_defaults(func=cmd_enhance)

    sp = sub.add_parser("evaluate", help="metrics and error maps on a dataset")
    common(sp, "evaluate")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--manifest", default=None)
    sp.add_argument("--val-fraction", type=float, default=0.2)
    sp.add_argument("--split", choices=("val", "all"), default="val")
    sp.add_argument("--threshold", type=float, default=0.01, help="MSE map threshold")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("lfswap", help="low-frequency exchange experiment")
    common(sp, "lfswap")
    sp.add_argument("--data", default=None, help="directory of {id}_low.png/{id}_normal.png")
    sp.add_argument("--synthetic", type=int, default=0, help="generate N synthetic pairs instead")
    sp.add_argument("--size", type=int, default=96, help="synthetic image size")
    sp.set_defaults(func=cmd_lfswap)

    sp = sub.add_parser("ablate", help="one training step per ablation flag")
    common(sp, "ablate")
    sp.add_argument("--data", required=True)
    sp.add_argument("--manifest", default=None)
    sp.add_argument("--val-fraction", type=float, default=0.2)
    sp.set_defaults(func=cmd_ablate)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "lfswap" and not args.data and not args.synthetic:
        parser.error("lfswap needs --data or --synthetic N")
    try:
        return args.func(args)
    except (ConfigError, WdciError) as e:
        if isinstance(e, TrainingDiverged):
            print(f"error: {e}", file=sys.stderr)
            return 1
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
