"""Command line interface: ``collimsim <command> ...``.

Exit codes: 0 success, 1 partial or runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import imageio
from .config import PipelineConfig, default_config_text, load_config
from .errors import CollimsimError, ConfigurationError, UsageError
from .maskgen import mask_to_uint8
from .metrics import PatchSpec, compare_patches
from .pipeline import (
    reference_collimator,
    calibrate_scatter_c,
    generate_dataset,
    run_pipeline,
)
from .physics import GaussianKernelSpec, apply_collimation, blur_mask, estimate_scatter, scatter_fraction

log = logging.getLogger("collimsim")

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    overrides = {
        "seed": getattr(args, "seed", None),
        "samples_per_input": getattr(args, "samples_per_input", None),
        "output_dir": getattr(args, "out", None),
    }
    return cfg.with_overrides(**overrides)


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer: {text}")
    return value


def cmd_init_config(args) -> int:
    text = default_config_text()
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = _config(args)
    inputs = args.inputs or list(cfg.input_paths)
    if not inputs:
        raise ConfigurationError("no inputs: pass image paths or set input_paths in the config")
    result = generate_dataset(inputs, cfg, out_dir=cfg.output_dir, jobs=args.jobs)
    print(f"samples={len(result.records)} failures={len(result.failures)} manifest={result.manifest_path}")
    for name, err in result.failures:
        print(f"failed {name}: {err}", file=sys.stderr)
    return EXIT_OK if result.ok else EXIT_PARTIAL


def cmd_simulate(args) -> int:
    cfg = _config(args)
    image = imageio.load_image(args.input)
    output, mask, record = run_pipeline(image, cfg, sample_index=args.sample_index, input_path=args.input)
    record.image_path = str(args.output)
    imageio.save_image(output, args.output, args.bit_depth or cfg.output_bit_depth)
    if args.mask:
        record.mask_path = str(args.mask)
        imageio.save_image(mask_to_uint8(mask), args.mask, 8)
    if args.record:
        Path(args.record).write_text(record.to_json() + "\n", encoding="utf-8")
    print(f"spec={json.dumps(record.spec)}")
    print(f"scatter_fraction={record.scatter_fraction} clamp_flag={record.clamp_flag}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    reference = imageio.load_image(args.reference)
    target = cfg.scatter_target_fraction if args.target is None else args.target
    c = calibrate_scatter_c(reference, cfg.scatter, target)

    params = replace(cfg.scatter, magnitude_c=c).resolved(reference)
    damped, damping = reference_collimator(reference.shape)
    focal = GaussianKernelSpec(cfg.focal_blur.mean)
    s = estimate_scatter(apply_collimation(reference, damped, focal), params)
    achieved = scatter_fraction(s, blur_mask(damped, focal), damping, params.primary_intensity)
    print(f"magnitude_c={c!r}")
    print(f"target_fraction={target!r} achieved_fraction={achieved!r}")
    if args.write_config:
        new = replace(cfg, scatter=replace(cfg.scatter, magnitude_c=c))
        Path(args.write_config).write_text(default_config_text(new), encoding="utf-8")
    return EXIT_OK


def _fmt(v: float) -> str:
    return "inf" if math.isinf(v) else f"{v:.6g}"


def cmd_compare(args) -> int:
    ref = imageio.load_image(args.reference)
    test = imageio.load_image(args.test)
    patches = [PatchSpec.parse(p) for p in args.patch or []]
    reports = compare_patches(ref, test, patches, data_range=args.data_range)
    patches = patches or [PatchSpec(0, 0, ref.shape[1], ref.shape[0])]
    for i, (p, r) in enumerate(zip(patches, reports)):
        print(f"patch={i} x={p.x} y={p.y} width={p.width} height={p.height} "
              f"nmse={_fmt(r.nmse)} ssim={_fmt(r.ssim)} psnr={_fmt(r.psnr)}")
    if args.table:
        print(f"\n{'patch':>5} {'nMSE':>10} {'SSIM':>8} {'PSNR [dB]':>10}")
        for i, r in enumerate(reports):
            db = "inf" if math.isinf(r.psnr) else f"{r.psnr:.4f}"
            print(f"{i:>5} {r.nmse:>10.4f} {r.ssim:>8.4f} {db:>10}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="collimsim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-config", help="write the annotated default configuration")
    p.add_argument("-o", "--output", help="file to write (default: stdout)")
    p.set_defaults(func=cmd_init_config)

    def common(p):
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--seed", type=_u64, help="override the master seed")

    p = sub.add_parser("generate", help="emit a dataset of simulated images, masks and a manifest")
    common(p)
    p.add_argument("inputs", nargs="*", help="open-field images (default: config input_paths)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--samples-per-input", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("simulate", help="simulate one collimated image")
    common(p)
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--mask", help="where to write the 8-bit label mask")
    p.add_argument("--record", help="where to write the JSON sample record")
    p.add_argument("--sample-index", type=int, default=0)
    p.add_argument("--bit-depth", type=int, choices=(8, 16, 32))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="calibrate the scatter magnitude c on a reference image")
    common(p)
    p.add_argument("reference")
    p.add_argument("--target", type=float, help="deep-shadow scatter fraction (default: config)")
    p.add_argument("--write-config", help="write the configuration with the calibrated c")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("compare", help="nMSE / SSIM / PSNR between a reference and a test image")
    p.add_argument("reference")
    p.add_argument("test")
    p.add_argument("--patch", action="append", metavar="X,Y,W,H")
    p.add_argument("--data-range", type=float)
    p.add_argument("--table", action="store_true", help="also print a human-readable table")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, UsageError) as exc:
        print(f"collimsim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CollimsimError as exc:
        print(f"collimsim: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
