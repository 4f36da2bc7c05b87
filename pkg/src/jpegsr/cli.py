"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 runtime failure. Every command
writes one machine-readable JSON summary line to stdout; progress and
notices go to stderr. Checkpoints given as bare file names are also
looked up in $JPEGSR_MODEL_DIR.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

MODEL_DIR_ENV = "JPEGSR_MODEL_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _summary(payload):
    print(json.dumps(payload))


def _read_luma(path):
    from . import imageio

    plane, was_color = imageio.read_image(path)
    if was_color:
        print(f"note: {path} is color; converted to luminance", file=sys.stderr)
    return plane


def _resolve_model(path):
    if os.path.exists(path):
        return path
    env_dir = os.environ.get(MODEL_DIR_ENV, "")
    if env_dir:
        candidate = os.path.join(env_dir, path)
        if os.path.exists(candidate):
            return candidate
    raise FileNotFoundError(f"model checkpoint not found: {path}")


def cmd_degrade(args):
    from . import imageio
    from .jpegcodec import degrade
    from .metrics import psnr

    img = _read_luma(args.infile)
    y, z = degrade(img, args.qf)
    imageio.write_image(args.out_y, y)
    imageio.write_image(args.out_z, z)
    _summary({
        "command": "degrade", "input": args.infile, "qf": args.qf,
        "hr_size": list(img.shape), "lr_size": list(y.shape),
        "psnr_y_z": round(psnr(y, z), 4),
        "out_y": args.out_y, "out_z": args.out_z,
    })
    return 0


def cmd_train(args):
    from .dataset import TrainConfig
    from .training import Trainer

    cfg = TrainConfig.from_yaml(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    trainer = Trainer(cfg)
    stage = args.stage
    trainer.run(stage if stage in ("all", "joint") else f"stage{stage}",
                resume=(stage == "all"))
    csv_path = os.path.join(cfg.out_dir, "loss_curves.csv")
    last = {}
    for r in trainer.records:
        last[r.stage] = r.val_loss
    _summary({
        "command": "train", "config": args.config, "stage": stage,
        "seed": cfg.seed, "out_dir": cfg.out_dir, "loss_csv": csv_path,
        "final_val_loss": {k: (None if math.isnan(v) else v) for k, v in last.items()},
    })
    return 0


def cmd_sr(args):
    from . import imageio
    from .model import CompressedSRNet

    net = CompressedSRNet.load(_resolve_model(args.model))
    plane = _read_luma(args.infile)
    out01 = net.super_resolve(imageio.to_unit(plane))
    out = imageio.from_unit(out01)
    imageio.write_image(args.out, out)
    _summary({
        "command": "sr", "input": args.infile, "model": args.model,
        "model_qf": int(net.qf), "in_size": list(plane.shape),
        "out_size": list(out.shape), "out": args.out,
    })
    return 0


def cmd_eval(args):
    from .metrics import psnr, ssim

    ref = _read_luma(args.ref)
    test = _read_luma(args.test)
    p = psnr(ref, test, args.crop)
    s = ssim(ref, test, args.crop)
    _summary({
        "command": "eval", "ref": args.ref, "test": args.test,
        "crop": args.crop,
        "psnr_db": "inf" if math.isinf(p) else round(p, 6),
        "ssim": round(s, 6),
    })
    return 0


def cmd_rd_curve(args):
    from .lowrate import ModelBank, rd_sweep, write_rd_csv

    models_dir = args.models_dir or os.environ.get(MODEL_DIR_ENV, "")
    if not models_dir:
        raise UsageError("--models-dir required (or set $JPEGSR_MODEL_DIR)")
    img = _read_luma(args.infile)
    qfs = [int(q) for q in args.qfs.split(",")] if args.qfs else None
    bank = ModelBank(models_dir)
    points = rd_sweep(img, bank, qfs=qfs or (5, 10, 20, 30, 40, 50, 60, 70, 80),
                      image_id=os.path.basename(args.infile))
    write_rd_csv(args.out_csv, points)
    _summary({
        "command": "rd-curve", "input": args.infile, "out_csv": args.out_csv,
        "models_dir": models_dir, "model_qfs": bank.qfs,
        "points": [
            {"method": p.method, "qf": p.qf, "bpp": round(p.bpp, 6),
             "psnr_db": round(p.psnr_db, 4)} for p in points
        ],
    })
    return 0


def cmd_grad_check(args):
    from .checks import GRAD_TOLERANCE, gradient_battery

    base = args.seed if args.seed is not None else 0
    seeds = list(range(base, base + args.num_seeds))
    worst = {}
    for seed in seeds:
        for name, err in gradient_battery(seed).items():
            worst[name] = max(worst.get(name, 0.0), err)
    ok = all(v < GRAD_TOLERANCE for v in worst.values())
    for name, err in worst.items():
        print(f"{name}: max_rel_err={err:.3e}", file=sys.stderr)
    _summary({
        "command": "grad-check", "seeds": seeds, "tolerance": GRAD_TOLERANCE,
        "max_rel_error": {k: float(f"{v:.6e}") for k, v in worst.items()},
        "pass": ok,
    })
    return 0 if ok else 2


def cmd_codec(args):
    from . import imageio
    from .jpegcodec import JpegStream, jpeg_decode, jpeg_encode

    if args.mode == "encode":
        img = _read_luma(args.infile)
        stream = jpeg_encode(img, args.qf)
        stream.to_file(args.out)
        _summary({
            "command": "codec", "mode": "encode", "input": args.infile,
            "qf": args.qf, "out": args.out, "bytes": len(stream.data),
            "bpp": round(stream.bpp(), 6),
        })
    else:
        stream = JpegStream.from_file(args.infile)
        plane = jpeg_decode(stream)
        imageio.write_image(args.out, plane)
        _summary({
            "command": "codec", "mode": "decode", "input": args.infile,
            "out": args.out, "size": list(plane.shape),
            "bpp": round(stream.bpp(), 6),
        })
    return 0


def build_parser():
    parser = _Parser(prog="jpegsr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("degrade", help="downsample by 2 and JPEG-compress an image")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--qf", type=int, required=True)
    p.add_argument("--out-y", required=True, help="downsampled (pre-JPEG) output")
    p.add_argument("--out-z", required=True, help="downsampled + compressed output")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("train", help="run the staged training procedure")
    p.add_argument("--config", required=True, help="YAML training config")
    p.add_argument("--stage", default="all", choices=["1", "2", "3", "joint", "all"])
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sr", help="x2 super-resolve an image with a trained model")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--model", required=True, help="checkpoint path (or name in $JPEGSR_MODEL_DIR)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sr)

    p = sub.add_parser("eval", help="PSNR/SSIM between two images")
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--crop", type=int, default=2, help="border pixels to ignore")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rd-curve", help="rate-distortion sweep: JPEG vs SR pipeline")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--models-dir", default="", help="checkpoint directory (default $JPEGSR_MODEL_DIR)")
    p.add_argument("--qfs", default="", help="comma-separated quality factors")
    p.add_argument("--out-csv", required=True)
    p.set_defaults(func=cmd_rd_curve)

    p = sub.add_parser("grad-check", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int, default=None, help="first seed of the sweep")
    p.add_argument("--num-seeds", type=int, default=5)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("codec", help="JPEG encode/decode a grayscale image")
    p.add_argument("mode", choices=["encode", "decode"])
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--qf", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_codec)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (UsageError,) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
