"""Command line: train / eval / attack / corrupt / bench / export.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

log = logging.getLogger("mtsfm")


def _threads(args) -> int:
    if getattr(args, "deterministic", False):
        return 1
    env = os.environ.get("SFMK_THREADS")
    return int(env) if env else 0


def _net_config(preset: str):
    from ..nets.config import NetConfig

    return NetConfig.preset(preset)


def load_dataset(data: str, net_cfg, split: str = "", exclude: str = "", n_synth: int = 4, seed: int = 0) -> list:
    if data == "synth":
        from .synth import SceneConfig, synth_dataset

        return synth_dataset(n_synth, SceneConfig(height=net_cfg.height, width=net_cfg.width), seed=seed)
    if data.startswith("kitti:"):
        if not split:
            raise ValueError("kitti data needs --split")
        from .kitti import load_kitti_layout

        return load_kitti_layout(data[len("kitti:") :], split, net_cfg.height, net_cfg.width, exclude or None)
    raise ValueError(f"unknown data source {data!r}")


def _load_model(path):
    from ..nets.model import SfMModel

    return SfMModel.load(path)


# -- subcommands --------------------------------------------------------------
def cmd_train(args) -> int:
    from ..ndiff import set_default_dtype
    from ..nets.model import SfMModel
    from ..train import OptimConfig, fit
    from .config import RunConfig, dump_config, read_config

    cfg = read_config(args.config) if args.config else RunConfig()
    over = {k: v for k, v in dict(
        arch=args.arch, learn_intrinsics=args.learn_intrinsics or None, preset=args.preset, data=args.data,
        seed=args.seed, epochs=args.epochs, batch_size=args.batch_size, split=args.split,
    ).items() if v is not None}
    cfg = replace(cfg, **over).validate()
    set_default_dtype(np.float32 if cfg.precision == "float32" else np.float64)
    net_cfg = _net_config(cfg.preset)
    data = load_dataset(cfg.data, net_cfg, cfg.split, cfg.exclude, cfg.synth_scenes, cfg.seed)
    if not data:
        raise ValueError("dataset is empty")
    model = SfMModel(net_cfg, cfg.arch, cfg.learn_intrinsics, seed=cfg.seed)
    optim = None
    if cfg.optimizer != "auto":
        optim = OptimConfig(kind=cfg.optimizer, lr=cfg.lr or 1e-4, weight_decay=cfg.weight_decay, decay_epoch=cfg.decay_epoch)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run.cfg").write_text(dump_config(cfg))
    history = fit(model, data, optim, epochs=cfg.epochs, batch_size=cfg.batch_size, out_dir=out, seed=cfg.seed, convention=cfg.pose_convention)
    print(f"final epoch {history[-1].epoch} loss {history[-1].mean_loss!r}")
    return 0


def _eval_data(args, model_cfg):
    n = getattr(args, "synth_scenes", 4)
    return load_dataset(args.data, model_cfg, args.split or "", "", n, args.seed)


def cmd_eval(args) -> int:
    from ..evaluation import evaluate, evaluate_predictions, read_depth_png, report_csv, report_table

    mode = "unscaled" if args.unscaled else "scaled"
    if args.predictions:
        net_cfg = _net_config(args.preset)
        data = [t for t in _eval_data(args, net_cfg) if t.depth is not None]
        preds = [read_depth_png(Path(args.predictions) / f"{i:06d}.png") for i in range(len(data))]
        report = evaluate_predictions(preds, [t.depth for t in data], mode, crop=args.crop)
    else:
        model = _load_model(args.checkpoint)
        data = _eval_data(args, model.cfg)
        report = evaluate(model.predict_depth, data, mode, crop=args.crop)
    rows = {mode: report}
    print(report_table(rows))
    if args.csv:
        report_csv(rows, args.csv)
    return 0


def cmd_attack(args) -> int:
    from ..robust.attacks import pgd_iterations
    from ..robust.sweep import Condition, robustness_sweep, rows_to_csv

    model = _load_model(args.checkpoint)
    data = _eval_data(args, model.cfg)
    kind = {"pgd": "pgd", "flip-h": "flip_h", "flip-v": "flip_v"}[args.kind]
    name = "training_loss" if kind == "pgd" else kind
    suite = [Condition("clean", "clean")] + [Condition(kind, name, float(e)) for e in args.eps]
    for e in args.eps:
        print(f"{args.kind}: eps={e:g} -> {pgd_iterations(e)} iterations")
    rows = robustness_sweep(model, data, suite, seed=args.seed, csv_path=args.csv)
    sys.stdout.write(rows_to_csv(rows))
    return 0


def cmd_corrupt(args) -> int:
    from ..robust.corruptions import CORRUPTIONS, CorruptionSpec, corrupt
    from .imageio import read_image, write_image

    names = list(CORRUPTIONS) if args.all else [args.name]
    if names == [None]:
        raise SystemExit("corrupt: give --name or --all")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.input:
        images = [(Path(p).stem, read_image(p)) for p in args.input]
    else:
        data = load_dataset(args.data, _net_config(args.preset), args.split or "", "", 4, args.seed)
        images = [(f"{i:06d}", t.target) for i, t in enumerate(data)]
    for name in names:
        spec = CorruptionSpec(name, args.severity)
        for i, (stem, img) in enumerate(images):
            write_image(out / f"{stem}_{name}_s{args.severity}.png", corrupt(img, spec, seed=args.seed + i))
    print(f"wrote {len(names) * len(images)} images to {out}")
    return 0


def cmd_bench(args) -> int:
    from ..ndiff import set_default_dtype

    set_default_dtype(np.float32)
    if args.checkpoint:
        model = _load_model(args.checkpoint)
    else:
        from ..nets.model import SfMModel

        model = SfMModel(_net_config(args.preset), args.arch)
    rng = np.random.default_rng(args.seed)
    img = rng.random((model.cfg.height, model.cfg.width, 3))
    model.predict_depth(img)  # warm-up
    t0 = time.perf_counter()
    for _ in range(args.iters):
        model.predict_depth(img)
    dt = time.perf_counter() - t0
    fps = args.iters / dt
    print(f"{args.iters} forward passes at {model.cfg.height}x{model.cfg.width}: {fps:.2f} frames/second")
    return 0


def cmd_export(args) -> int:
    from ..evaluation import write_depth_png

    model = _load_model(args.checkpoint)
    data = _eval_data(args, model.cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, t in enumerate(data):
        write_depth_png(out / f"{i:06d}.png", model.predict_depth(t.target))
    print(f"exported {len(data)} depth maps to {out}")
    return 0


# -- parser -------------------------------------------------------------------
def _arch(s: str) -> str:
    from ..nets.model import parse_arch

    try:
        return parse_arch(s)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mtsfm", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--deterministic", action="store_true", help="single-threaded numerics")
    sub = p.add_subparsers(dest="command", required=True)

    def data_args(sp, default="synth"):
        sp.add_argument("--data", default=default, help="synth or kitti:<root>")
        sp.add_argument("--split", help="split file for kitti data")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--synth-scenes", type=int, default=4, dest="synth_scenes")

    t = sub.add_parser("train", help="train depth + ego networks")
    t.add_argument("--config")
    t.add_argument("--arch", type=_arch, help="depth,ego in {t,c}, e.g. t,c")
    t.add_argument("--learn-intrinsics", action="store_true", dest="learn_intrinsics")
    t.add_argument("--preset", choices=("paper", "desk"))
    t.add_argument("--data")
    t.add_argument("--split")
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int, dest="batch_size")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="depth metrics")
    g = e.add_mutually_exclusive_group(required=True)
    g.add_argument("--checkpoint")
    g.add_argument("--predictions", help="directory of exported 16-bit depth PNGs")
    data_args(e)
    e.add_argument("--preset", choices=("paper", "desk"), default="desk")
    s = e.add_mutually_exclusive_group()
    s.add_argument("--scaled", action="store_true", default=True)
    s.add_argument("--unscaled", action="store_true")
    e.add_argument("--crop", action="store_true", help="apply the customary evaluation crop")
    e.add_argument("--csv")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("attack", help="adversarial robustness")
    a.add_argument("--checkpoint", required=True)
    a.add_argument("--kind", choices=("pgd", "flip-h", "flip-v"), default="pgd")
    a.add_argument("--eps", type=float, nargs="+", required=True)
    a.add_argument("--csv")
    data_args(a)
    a.set_defaults(func=cmd_attack)

    c = sub.add_parser("corrupt", help="write corrupted images")
    c.add_argument("--name")
    c.add_argument("--all", action="store_true")
    c.add_argument("--severity", type=int, default=5, choices=range(1, 6))
    c.add_argument("--out-dir", required=True, dest="out_dir")
    c.add_argument("--input", nargs="*")
    c.add_argument("--preset", choices=("paper", "desk"), default="desk")
    data_args(c)
    c.set_defaults(func=cmd_corrupt)

    b = sub.add_parser("bench", help="inference frames per second")
    b.add_argument("--checkpoint")
    b.add_argument("--preset", choices=("paper", "desk"), default="desk")
    b.add_argument("--arch", type=_arch, default="tt")
    b.add_argument("--iters", type=int, default=10)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bench)

    x = sub.add_parser("export", help="16-bit PNG depth predictions")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--out-dir", required=True, dest="out_dir")
    data_args(x)
    x.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse already printed usage
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    n = _threads(args)
    try:
        if n:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(n):
                return args.func(args)
        return args.func(args)
    except (ValueError, OSError, RuntimeError, KeyError) as e:
        print(f"mtsfm {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
