"""``mcseg`` command line: ``run`` the pipeline or generate ``phantom`` images."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import METHODS, load_config
from .errors import ConfigError, McsegError
from .phantom import PhantomSpec, generate_phantom
from .pipeline import find_inputs, run_pipeline
from .raster import save_mask, write_pgm

EXIT_OK, EXIT_USAGE, EXIT_ALL_FAILED = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcseg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="segment microcalcifications in a batch of images")
    run.add_argument("--config", type=Path, help="flat key = value config file")
    run.add_argument("--input", nargs="+", required=True, help="image files and/or directories")
    run.add_argument("--gt", type=Path, help="directory of ground-truth masks named like the inputs")
    run.add_argument("--out", type=Path, required=True)
    run.add_argument("--method", choices=METHODS)
    run.add_argument("--jobs", type=int, help="worker processes (default: all cores)")

    ph = sub.add_parser("phantom", help="write seeded synthetic phantoms and their ground truth")
    ph.add_argument("--seed", type=int, default=0)
    ph.add_argument("--count", type=int, default=1, help="number of phantom images")
    ph.add_argument("--blobs", type=int, default=10, help="planted calcifications per image")
    ph.add_argument("--size", type=int, default=512)
    ph.add_argument("--out", type=Path, required=True)
    return parser


def cmd_run(args) -> int:
    cfg = load_config(args.config, method=args.method)
    if args.jobs is not None and args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    missing = [p for p in args.input if not Path(p).exists()]
    if missing:
        raise ConfigError(f"input not found: {', '.join(map(str, missing))}")
    if not find_inputs(args.input):
        raise ConfigError("no input images found")
    report = run_pipeline(cfg, args.input, args.out, args.gt, args.jobs)
    n_ok = sum(img["status"] == "ok" for img in report["images"])
    print(f"{n_ok}/{len(report['images'])} images processed; report at {args.out / 'report.json'}")
    return EXIT_OK if n_ok else EXIT_ALL_FAILED


def cmd_phantom(args) -> int:
    if args.count < 1:
        raise ConfigError("--count must be >= 1")
    images, truth = args.out / "images", args.out / "truth"
    images.mkdir(parents=True, exist_ok=True)
    truth.mkdir(parents=True, exist_ok=True)
    spec = PhantomSpec(blob_count=args.blobs)
    for i in range(args.count):
        ph = generate_phantom(args.seed + i, spec, (args.size, args.size))
        write_pgm(ph.image, images / f"phantom_{i:03d}.pgm", bit_depth=16)
        save_mask(ph.truth, truth / f"phantom_{i:03d}.png")
    print(f"wrote {args.count} phantoms to {images}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return cmd_run(args) if args.command == "run" else cmd_phantom(args)
    except (ConfigError, ValueError) as exc:
        print(f"mcseg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except McsegError as exc:
        print(f"mcseg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
