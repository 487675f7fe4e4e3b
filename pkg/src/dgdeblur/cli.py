"""Command-line pipeline: dataset generation, training, evaluation,
ablation sweeps, variant comparison, rank reports, gradient checking.

All commands are driven by one flat configuration file plus a handful
of flags, write only under the chosen output directory, and are
deterministic: rerunning a command with unchanged inputs reproduces
byte-identical outputs.

Exit codes: 0 on success, 2 for configuration errors, 3 for runtime
failures (missing inputs, divergence, failed checks).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import fileio, training
from .autodiff import ContractError, Tape, grad_check
from .blur import BlurConfig, gen_dataset, load_dataset
from .config import (ConfigError, ExperimentConfig, config_digest,
                     format_config, load_config, model_config)
from .model import build_model, forward_model
from .training import TrainConfig, multiscale_loss, rank_trajectories, train

METRIC_COLUMNS = ("image_id", "psnr", "ssim", "edge_psnr", "interior_psnr")
RANK_COLUMNS = ("scale", "step", "variant", "r_eff", "d", "utilization")
AGGREGATE_COLUMNS = ("variant", "psnr", "ssim", "edge_psnr", "interior_psnr")
ABLATE_VARIANTS = ("input", "gg", "face", "cell")
ABLATE_SIZES = (4, 8, 16, 32)
ABLATE_DEPTHS = (1, 2, 3, 4)


def _split_seed(base: int, index: int) -> int:
    return int(np.random.SeedSequence(base, spawn_key=(index,)).generate_state(1)[0])


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, data_seed=args.seed, model_seed=args.seed,
                      train_seed=args.seed)
    return cfg


def _dataset_dir(args) -> Path:
    return Path(args.out) / "dataset"


def _require_dataset(args, split: str):
    manifest = _dataset_dir(args) / split / "manifest.csv"
    if not manifest.exists():
        raise RuntimeError(f"missing {manifest}; run the gen command first")
    return load_dataset(manifest)


def _train_cfg(cfg: ExperimentConfig) -> TrainConfig:
    return TrainConfig(
        steps=cfg.steps, batch=cfg.batch, lr=cfg.lr, lr_min=cfg.lr_min,
        beta1=cfg.beta1, beta2=cfg.beta2, weight_decay=cfg.weight_decay,
        loss_lambda=cfg.loss_lambda, loss_scales=cfg.loss_scales,
        augment=cfg.augment, seed=cfg.train_seed)


def _variant_digest(cfg: ExperimentConfig, variant: str) -> str:
    return config_digest(replace(cfg, variant=variant))


def _train_variant(cfg: ExperimentConfig, variant: str, train_items, val_items):
    model = build_model(model_config(cfg, variant))
    result = train(model, train_items, val_items, _train_cfg(cfg))
    if result.diverged:
        raise RuntimeError(
            f"training the {variant} variant diverged; kept the last finite state")
    return result


def _write_train_outputs(out_dir: Path, cfg: ExperimentConfig, variant: str, result):
    out_dir.mkdir(parents=True, exist_ok=True)
    fileio.write_csv(out_dir / "log.csv", training.LOG_COLUMNS, result.log_rows)
    fileio.save_checkpoint(out_dir / "checkpoint.ckpt",
                           result.model.named_values(),
                           _variant_digest(cfg, variant))


def _load_trained(cfg: ExperimentConfig, args, variant: str):
    path = Path(args.out) / f"train_{variant}" / "checkpoint.ckpt"
    if not path.exists():
        raise RuntimeError(f"missing {path}; run the train command first")
    digest, values = fileio.load_checkpoint(path)
    expected = _variant_digest(cfg, variant)
    if digest != expected:
        raise RuntimeError(
            f"{path} was trained under a different configuration "
            f"(digest {digest}, expected {expected})")
    model = build_model(model_config(cfg, variant))
    model.load_values(values)
    return model


def _metric_rows(reports):
    nan = float("nan")
    return [(r.image_id, r.psnr, r.ssim,
             nan if r.edge_psnr is None else r.edge_psnr,
             r.interior_psnr) for r in reports]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = _load_cfg(args)
    base = _dataset_dir(args)
    weights = {
        "filled_square": cfg.weight_filled_square,
        "hollow_box": cfg.weight_hollow_box,
        "thin_line": cfg.weight_thin_line,
    }
    blur_cfg = BlurConfig(trunc=cfg.blur_trunc, mode=cfg.blur_mode)
    for index, (split, count) in enumerate((("train", cfg.n_train), ("test", cfg.n_test))):
        gen_dataset(base / split, count, cfg.height, cfg.width,
                    sigma_mode=cfg.sigma_mode, sigma_min=cfg.sigma_min,
                    sigma_max=cfg.sigma_max,
                    shapes_range=(cfg.shapes_min, cfg.shapes_max),
                    weights=weights, seed=_split_seed(cfg.data_seed, index),
                    blur_cfg=blur_cfg, write_pgm=cfg.write_pgm)
        print(f"gen: wrote {count} images to {base / split}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    train_items = _require_dataset(args, "train")
    test_items = _require_dataset(args, "test")
    result = _train_variant(cfg, cfg.variant, train_items, test_items)
    out_dir = Path(args.out) / f"train_{cfg.variant}"
    _write_train_outputs(out_dir, cfg, cfg.variant, result)
    print(f"train: {cfg.variant} variant, {cfg.steps} steps, "
          f"final validation psnr {result.final_val_psnr:.2f} dB -> {out_dir}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    items = _require_dataset(args, "test")
    model = _load_trained(cfg, args, cfg.variant)
    reports, aggregate, outputs = training.evaluate(
        model, items, args.edge_quantile, args.edge_dilation, keep_outputs=True)
    out_dir = Path(args.out) / f"eval_{cfg.variant}"
    out_dir.mkdir(parents=True, exist_ok=True)
    fileio.write_csv(out_dir / "metrics.csv", METRIC_COLUMNS, _metric_rows(reports))
    for it, restored in zip(items, outputs):
        fileio.write_f32g(out_dir / f"restored_{it.image_id}.f32g", restored)
        if cfg.write_pgm:
            fileio.write_pgm(out_dir / f"restored_{it.image_id}.pgm", restored)
    print(f"eval: {cfg.variant} variant, mean psnr {aggregate['psnr']:.2f} dB "
          f"over {len(items)} images -> {out_dir}")
    return 0


def cmd_compare(args) -> int:
    cfg = _load_cfg(args)
    train_items = _require_dataset(args, "train")
    test_items = _require_dataset(args, "test")
    out_dir = Path(args.out) / "compare"
    out_dir.mkdir(parents=True, exist_ok=True)

    aggregate_rows = []
    rank_rows = []
    residuals = {}
    for variant in ("gg", "face", "cell"):
        result = _train_variant(cfg, variant, train_items, test_items)
        reports, aggregate, outputs = training.evaluate(
            result.model, test_items, args.edge_quantile, args.edge_dilation,
            keep_outputs=True)
        fileio.write_csv(out_dir / f"metrics_{variant}.csv", METRIC_COLUMNS,
                         _metric_rows(reports))
        aggregate_rows.append((variant, aggregate["psnr"], aggregate["ssim"],
                               aggregate["edge_psnr"], aggregate["interior_psnr"]))
        rank_rows.extend(rank_trajectories(result.model, test_items))
        residuals[variant] = [np.abs(restored - it.sharp)
                              for it, restored in zip(test_items, outputs)]
        print(f"compare: {variant} mean psnr {aggregate['psnr']:.2f} dB")

    fileio.write_csv(out_dir / "aggregate.csv", AGGREGATE_COLUMNS, aggregate_rows)
    fileio.write_csv(out_dir / "rank.csv", RANK_COLUMNS, rank_rows)
    for variant in ("face", "cell"):
        for it, res, base in zip(test_items, residuals[variant], residuals["gg"]):
            fileio.write_f32g(out_dir / f"resdiff_{variant}_{it.image_id}.f32g",
                              res - base)
    print(f"compare: reports -> {out_dir}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_cfg(args)
    train_items = _require_dataset(args, "train")
    test_items = _require_dataset(args, "test")
    out_path = Path(args.out) / f"ablate_{args.axis}.csv"

    def scores(model):
        _, aggregate = training.evaluate(model, test_items)
        return (aggregate["psnr"], aggregate["ssim"], aggregate["edge_psnr"],
                aggregate["interior_psnr"])

    rows = []
    if args.axis == "flux_bc":
        variant = cfg.variant if cfg.variant != "gg" else "face"
        from .operator import FLUX_KINDS
        from .partition import BOUNDARY_KINDS
        for flux in (k for k in FLUX_KINDS if k != "none"):
            for bc in BOUNDARY_KINDS:
                swept = replace(cfg, variant=variant, flux=flux, bc=bc)
                result = _train_variant(swept, variant, train_items, test_items)
                rows.append((flux, bc) + scores(result.model))
                print(f"ablate: flux={flux} bc={bc} psnr {rows[-1][2]:.2f} dB")
        header = ("flux", "bc", "psnr", "ssim", "edge_psnr", "interior_psnr")
    elif args.axis == "variant":
        for variant in ABLATE_VARIANTS:
            if variant == "input":
                _, aggregate = training.input_baseline(test_items)
                rows.append((variant, aggregate["psnr"], aggregate["ssim"],
                             aggregate["edge_psnr"], aggregate["interior_psnr"]))
            else:
                result = _train_variant(cfg, variant, train_items, test_items)
                rows.append((variant,) + scores(result.model))
            print(f"ablate: variant={variant} psnr {rows[-1][1]:.2f} dB")
        header = AGGREGATE_COLUMNS
    else:
        for size in ABLATE_SIZES:
            for depth in ABLATE_DEPTHS:
                swept = replace(cfg, element_size=size, layers=depth)
                variant = cfg.variant if cfg.variant != "gg" else "face"
                result = _train_variant(swept, variant, train_items, test_items)
                rows.append((size, depth) + scores(result.model))
                print(f"ablate: p={size} layers={depth} psnr {rows[-1][2]:.2f} dB")
        header = ("element_size", "layers", "psnr", "ssim", "edge_psnr",
                  "interior_psnr")

    fileio.write_csv(out_path, header, rows)
    print(f"ablate: {len(rows)} rows -> {out_path}")
    return 0


def cmd_rank(args) -> int:
    cfg = _load_cfg(args)
    items = _require_dataset(args, "test")
    model = _load_trained(cfg, args, cfg.variant)
    rows = rank_trajectories(model, items)
    out_path = Path(args.out) / f"rank_{cfg.variant}.csv"
    fileio.write_csv(out_path, RANK_COLUMNS, rows)
    for row in rows:
        print(f"rank: step {row[1]} r_eff {row[3]:.3f} of d={row[4]}")
    print(f"rank: -> {out_path}")
    return 0


def cmd_gradcheck(args) -> int:
    cfg = _load_cfg(args)
    # small pinned geometry keeps the finite-difference sweep quick
    probe = replace(cfg, channels=8, heads=2, layers=1, height=16, width=16)
    model = build_model(model_config(probe))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(probe.data_seed)))
    image = rng.uniform(0.0, 1.0, (probe.height, probe.width, 1))
    target = rng.uniform(0.0, 1.0, (probe.height, probe.width, 1))

    def objective():
        return multiscale_loss(forward_model(image, model, Tape()), target,
                               training.LossConfig(probe.loss_lambda, 1))

    entries = grad_check(objective, model.parameters(), step=1e-5, tol=5e-4)
    failed = [e for e in entries if not e.passed]
    for e in entries:
        status = "PASS" if e.passed else "FAIL"
        print(f"gradcheck: {status} {e.name} max_rel_err {e.max_rel_err:.3e}")
    if failed:
        print(f"gradcheck: {len(failed)} of {len(entries)} parameters failed",
              file=sys.stderr)
        return 3
    print(f"gradcheck: all {len(entries)} parameters pass at 5e-4")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="path to a flat key = value config file")
    sub.add_argument("--out", default="out", help="output directory (default: out)")
    sub.add_argument("--seed", type=int, default=None,
                     help="override every configured seed with one value")


def _add_edge_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--edge-quantile", type=float, default=0.9,
                     help="gradient-magnitude quantile defining the edge band")
    sub.add_argument("--edge-dilation", type=int, default=2,
                     help="dilation radius of the edge band in pixels")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dgdeblur",
        description="Element-local Galerkin operator layers for spatially "
                    "varying defocus deblurring")
    parser.add_argument("--print-defaults", action="store_true",
                        help="print the default configuration and exit")
    sub = parser.add_subparsers(dest="command")

    for name, fn, doc in (
            ("gen", cmd_gen, "generate the synthetic blur dataset"),
            ("train", cmd_train, "train the configured variant"),
            ("eval", cmd_eval, "evaluate a trained checkpoint on the test split"),
            ("ablate", cmd_ablate, "sweep one design axis and tabulate metrics"),
            ("compare", cmd_compare, "train and contrast gg, face, and cell variants"),
            ("rank", cmd_rank, "report latent effective-rank trajectories"),
            ("gradcheck", cmd_gradcheck, "finite-difference audit of all gradients")):
        p = sub.add_parser(name, help=doc)
        _add_common(p)
        if name in ("eval", "compare"):
            _add_edge_flags(p)
        if name == "ablate":
            p.add_argument("--axis", required=True,
                           choices=("flux_bc", "variant", "element_size"),
                           help="which design axis to sweep")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_defaults:
        print(format_config(ExperimentConfig()), end="")
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.fn(args)
    except ConfigError as err:
        print(f"dgdeblur: config error: {err}", file=sys.stderr)
        return 2
    except (ContractError, RuntimeError, OSError) as err:
        print(f"dgdeblur: error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
