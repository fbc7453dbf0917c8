"""Command-line entry point exposing every capability for scripting.

All machine-readable output is CSV on stdout; diagnostics go to stderr.
Exit codes: 0 success, 1 validation/check failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import gradcheck as gc
from . import metrics
from .datagen import load_triplet, read_manifest, write_dataset
from .flowstats import mean_flow, render_flow, render_occlusion, variance_flow
from .model import load_checkpoint
from .ppm import read_ppm, write_ppm
from .train import TrainConfig, evaluate, infer, train
from .warp import WarpMode, forward_warp, load_acof, save_acof

GRADCHECK_THRESHOLDS = {"adacof": 1e-4, "losses": 1e-4, "network": 1e-3}


def _err(msg):
    print(msg, file=sys.stderr)


def _default_threads():
    env = os.environ.get("ADACOF_THREADS")
    if env:
        return int(env)
    return os.cpu_count() or 1


def cmd_gen_data(args):
    write_dataset(args.out, args.count, args.size, args.max_disp, args.seed)
    _err(f"wrote {args.count} triplets to {args.out}")
    return 0


def cmd_train(args):
    config = TrainConfig.from_json(args.config)
    _, history = train(config, args.out, log=_err)
    last = history[-1]
    print(f"final,{last['loss']:.6g},{last['val_psnr']:.6g},{last['val_ssim']:.6g}")
    return 0


def _load_model(path):
    model, extra = load_checkpoint(path)
    extra = extra or {}
    wmode = WarpMode(extra.get("warp_mode", "adacof"))
    occlusion_enabled = extra.get("occlusion_enabled", True)
    return model, wmode, occlusion_enabled


def cmd_interp(args):
    model, wmode, occ_on = _load_model(args.ckpt)
    frame0 = read_ppm(args.frame0)
    frame1 = read_ppm(args.frame1)
    blended, pf, pb, v = infer(model, frame0.pixels, frame1.pixels, wmode,
                               occ_on, threads=args.threads)
    write_ppm(args.out, blended)
    if args.dump_params:
        save_acof(args.dump_params, pf, v)
        root, ext = os.path.splitext(args.dump_params)
        save_acof(f"{root}.bwd{ext}", pb, v)
    return 0


def cmd_warp(args):
    params, _ = load_acof(args.params)
    image = read_ppm(args.input)
    warped = forward_warp(image.pixels, params, threads=args.threads)
    write_ppm(args.out, warped)
    return 0


def cmd_gradcheck(args):
    modules = [args.module] if args.module else ["adacof", "losses", "network"]
    checks = {"adacof": gc.check_adacof, "losses": gc.check_losses,
              "network": gc.check_network}
    status = 0
    for name in modules:
        err = checks[name](seed=args.seed)
        threshold = GRADCHECK_THRESHOLDS[name]
        ok = err < threshold
        print(f"{name},{err:.3e},{'pass' if ok else 'FAIL'}")
        if not ok:
            status = 1
    return status


def cmd_visualize(args):
    params, occ = load_acof(args.params)
    flow = mean_flow(params, include_grid=args.include_grid)
    var, trace = variance_flow(params)
    write_ppm(f"{args.out_prefix}_meanflow.ppm", render_flow(flow))
    scale = max(float(np.percentile(trace, 99.0)), 1e-12)
    write_ppm(f"{args.out_prefix}_varflow.ppm",
              np.repeat(np.clip(trace / scale, 0.0, 1.0)[None], 3, axis=0))
    write_ppm(f"{args.out_prefix}_occlusion.ppm", render_occlusion(occ))
    return 0


def _eval_checkpoint(model, wmode, occ_on, data_dir):
    names = read_manifest(data_dir)
    triplets = [load_triplet(os.path.join(data_dir, n)) for n in names]
    return evaluate(model, triplets, wmode, occ_on)


def cmd_ablate(args):
    config = TrainConfig.from_json(args.config)
    modes = args.modes.split(",")
    print("mode,val_psnr,val_ssim")
    for mode in modes:
        cfg = TrainConfig(**{**config.__dict__, "warp_mode": mode})
        out_dir = os.path.join(args.out, mode)
        _, history = train(cfg, out_dir, log=_err)
        last = history[-1]
        print(f"{mode},{last['val_psnr']:.6g},{last['val_ssim']:.6g}")
    return 0


def cmd_sweep(args):
    config = TrainConfig.from_json(args.config)
    key, _, values = args.param.partition("=")
    key = {"F": "kernel_size", "d": "dilation"}.get(key, key)
    print(f"{key},val_psnr,val_ssim")
    for value in values.split(","):
        cfg = TrainConfig(**{**config.__dict__, key: int(value)})
        out_dir = os.path.join(args.out, f"{key}{value}")
        _, history = train(cfg, out_dir, log=_err)
        last = history[-1]
        print(f"{value},{last['val_psnr']:.6g},{last['val_ssim']:.6g}")
    return 0


def cmd_bench(args):
    h, _, w = args.size.partition("x")
    h, w = int(h), int(w)
    rng = np.random.default_rng(args.seed)
    image, params = _bench_instance(rng, h, w, args.F, args.d)
    print("threads,seconds,megapixel_taps_per_s")
    for threads in (int(t) for t in args.threads.split(",")):
        forward_warp(image, params, threads=threads)  # warm-up
        reps = max(1, args.reps)
        start = time.perf_counter()
        for _ in range(reps):
            forward_warp(image, params, threads=threads)
        elapsed = (time.perf_counter() - start) / reps
        mts = h * w * args.F * args.F / elapsed / 1e6
        print(f"{threads},{elapsed:.4f},{mts:.1f}")
    return 0


def _bench_instance(rng, h, w, f, d):
    f2 = f * f
    logits = rng.normal(size=(f2, h, w))
    e = np.exp(logits - logits.max(axis=0))
    from .warp import WarpParams
    params = WarpParams(e / e.sum(axis=0),
                        rng.uniform(-2, 2, size=(f2, h, w)),
                        rng.uniform(-2, 2, size=(f2, h, w)),
                        kernel_size=f, dilation=d)
    return rng.random((3, h, w)), params


def cmd_eval(args):
    model, wmode, occ_on = _load_model(args.ckpt)
    names = read_manifest(args.data)
    print("name,psnr_db,ssim,ie")
    psnrs, ssims, ies = [], [], []
    for name in names:
        t = load_triplet(os.path.join(args.data, name))
        blended, _, _, _ = infer(model, t.first.pixels, t.last.pixels,
                                 wmode, occ_on)
        p = metrics.psnr(blended, t.middle.pixels)
        s = metrics.ssim(blended, t.middle.pixels)
        ie = metrics.interpolation_error(blended, t.middle.pixels)
        print(metrics.metrics_row(name, p, s, ie))
        psnrs.append(min(p, 100.0))
        ssims.append(s)
        ies.append(ie)
    print(metrics.metrics_row("mean", float(np.mean(psnrs)),
                              float(np.mean(ssims)), float(np.mean(ies))))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="adacof")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic triplet dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=512)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--max-disp", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train an interpolation model")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("interp", help="interpolate the middle frame")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--frame0", required=True)
    p.add_argument("--frame1", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-params")
    p.add_argument("--threads", type=int, default=_default_threads())
    p.set_defaults(func=cmd_interp)

    p = sub.add_parser("warp", help="apply a raw parameter dump to an image")
    p.add_argument("--params", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=_default_threads())
    p.set_defaults(func=cmd_warp)

    p = sub.add_parser("gradcheck", help="finite-difference verification")
    p.add_argument("--module", choices=["adacof", "network", "losses"])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("visualize", help="render flow statistics maps")
    p.add_argument("--params", required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--include-grid", action="store_true")
    p.set_defaults(func=cmd_visualize)

    p = sub.add_parser("ablate", help="train each operator mode")
    p.add_argument("--config", required=True)
    p.add_argument("--modes", default="fb,kb,ws,woocc,sdc,adacof")
    p.add_argument("--out", default="ablate_out")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="sweep kernel size or dilation")
    p.add_argument("--config", required=True)
    p.add_argument("--param", required=True, help="e.g. F=1,3,5,7 or d=0,1,2")
    p.add_argument("--out", default="sweep_out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="warp throughput report")
    p.add_argument("--size", default="256x256")
    p.add_argument("--F", type=int, default=5)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--threads", default=str(_default_threads()))
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("eval", help="PSNR/SSIM/IE report on a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FloatingPointError, OSError) as exc:
        _err(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
