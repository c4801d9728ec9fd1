"""Command line front end.

    cosmicseg segment image.fits --mode global --out-dir out/
    cosmicseg train data.csv --layers 7,10,1 --model model.json
    cosmicseg detect image.fits --model model.json --out-dir out/
    cosmicseg synth --seed 3 --blobs 8 --out field.fits
    cosmicseg convert image.fits --pgm image.pgm

Settings come from defaults, then ``--config FILE`` (key=value lines), then
explicit flags.

Exit codes: 0 success, 2 usage error, 3 input-format error, 4 numeric
failure (non-convergence under ``--strict``).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import fits_io, pipeline, synth
from .errors import (
    ConfigError,
    CosmicSegError,
    DimensionMismatch,
    EmptyDataset,
    FitsFormatError,
    ModelShapeMismatch,
    NumericError,
    PgmFormatError,
    StageError,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_NUMERIC = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _odd(text: str) -> int:
    n = int(text)
    if n < 1 or n % 2 == 0:
        raise argparse.ArgumentTypeError(f"{text} is not a positive odd integer")
    return n


def _add_enhance_flags(p):
    g = p.add_argument_group("enhancement and segmentation")
    g.add_argument("--config", type=Path, help="key=value settings file")
    g.add_argument("--log-c", type=float)
    g.add_argument("--se-shape", choices=("square", "cross"))
    g.add_argument("--se-size", type=_odd)
    g.add_argument("--erode-iters", type=int)
    g.add_argument("--sigma", type=float)
    g.add_argument("--mode", choices=("global", "local"))
    g.add_argument("--epsilon", type=float)
    g.add_argument("--max-iter", type=int)
    g.add_argument("--window", type=_odd)
    g.add_argument("--bias", type=float)
    g.add_argument("--threshold", type=float, help="fixed global cut; skips iteration")
    g.add_argument("--min-pixels", type=int)


def _add_train_flags(p):
    g = p.add_argument_group("network")
    g.add_argument("--layers")
    g.add_argument("--lr", type=float)
    g.add_argument("--epochs", type=int)
    g.add_argument("--patience", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--split")
    g.add_argument("--cutoff", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cosmicseg", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("segment", help="enhance and binarize a FITS image")
    p.add_argument("fits", type=Path)
    _add_enhance_flags(p)
    p.add_argument("--truth", type=Path, help="ground-truth mask PGM for metrics")
    p.add_argument("--out-dir", type=Path)
    p.add_argument("--strict", action="store_true", help="exit 4 if the threshold did not converge")

    p = sub.add_parser("train", help="train the region classifier")
    p.add_argument("data", type=Path, help="feature CSV, FITS with .truth.pgm, or a directory")
    _add_enhance_flags(p)
    _add_train_flags(p)
    p.add_argument("--model", type=Path, default=Path("model.json"))
    p.add_argument("--out-dir", type=Path)

    p = sub.add_parser("detect", help="score the regions of a FITS image")
    p.add_argument("fits", type=Path)
    p.add_argument("--model", type=Path, required=True)
    _add_enhance_flags(p)
    p.add_argument("--cutoff", type=float)
    p.add_argument("--truth", type=Path)
    p.add_argument("--out-dir", type=Path)
    p.add_argument("--strict", action="store_true")

    p = sub.add_parser("synth", help="write a synthetic star field and its truth mask")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--blobs", type=int, default=6)
    p.add_argument("--streaks", type=int, default=0)
    p.add_argument("--points", type=int, default=0)
    p.add_argument("--size", default="128x128", help="WIDTHxHEIGHT")
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--bitpix", type=int, default=16, choices=(8, 16, 32, -32, -64))
    p.add_argument("--out", required=True,
                   help="FITS path, or FITS+PGM pair joined by '+'; the truth mask "
                        "defaults to <stem>.truth.pgm")

    p = sub.add_parser("convert", help="export a FITS image as PGM")
    p.add_argument("fits", type=Path)
    p.add_argument("--pgm", type=Path, required=True)
    p.add_argument("--maxval", type=int, default=255, choices=(255, 65535))
    return parser


_CONFIG_KEYS = set(pipeline.PipelineConfig.keys())


def config_from_args(args) -> pipeline.PipelineConfig:
    cfg = pipeline.PipelineConfig()
    if getattr(args, "config", None) is not None:
        cfg = pipeline.PipelineConfig.from_file(args.config)
    overrides = {k: v for k, v in vars(args).items() if k in _CONFIG_KEYS and v is not None}
    return cfg.updated(**overrides).validate()


def _cmd_segment(args) -> int:
    cfg = config_from_args(args)
    result = pipeline.run_segment(cfg, args.fits, args.out_dir, args.truth)
    h, w = result.mask.shape
    print(f"image {w}x{h}, foreground {result.mask.mean():.4f}")
    if result.trace is not None:
        print(result.trace.to_csv(), end="")
    if result.metrics is not None:
        print(json.dumps(result.metrics.to_dict(), sort_keys=True))
    if args.strict and result.trace is not None and not result.trace.converged:
        print(f"threshold did not converge ({result.trace.stop_reason})", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = config_from_args(args)
    outcome = pipeline.run_train(cfg, args.data, args.model, args.out_dir)
    from .bpnn import format_grid

    print(format_grid(outcome.reports))
    print(f"best epoch {outcome.result.best_epoch} of {outcome.result.stopped_epoch}; "
          f"model written to {outcome.model_path}")
    return EXIT_OK


def _cmd_detect(args) -> int:
    cfg = config_from_args(args)
    report = pipeline.run_detect(cfg, args.model, args.fits, args.out_dir, args.truth)
    sys.stdout.write(report.to_json())
    if args.strict and report.trace is not None and not report.trace.converged:
        print(f"threshold did not converge ({report.trace.stop_reason})", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _parse_size(text: str) -> tuple[int, int]:
    try:
        if "x" in text.lower():
            w, h = (int(v) for v in text.lower().split("x"))
        else:
            w = h = int(text)
    except ValueError:
        raise ConfigError(f"bad --size {text!r}; expected WIDTHxHEIGHT") from None
    if w < 1 or h < 1:
        raise ConfigError("--size must be positive")
    return w, h


def _cmd_synth(args) -> int:
    w, h = _parse_size(args.size)
    if "+" in args.out:
        fits_path, truth_path = (Path(p) for p in args.out.split("+", 1))
    else:
        fits_path = Path(args.out)
        truth_path = pipeline.truth_path_for(fits_path)
    field = synth.star_field((h, w), n_blobs=args.blobs, seed=args.seed,
                             n_streaks=args.streaks, n_points=args.points, noise=args.noise)
    header = fits_io.FitsHeader.for_image(w, h, bitpix=args.bitpix, extra=[
        ("OBJECT", "SYNTHETIC", "seeded star field"),
        ("SYNSEED", args.seed, "generator seed"),
    ])
    fits_path.parent.mkdir(parents=True, exist_ok=True)
    fits_path.write_bytes(fits_io.write_fits(header, field.image))
    truth_path.write_bytes(fits_io.write_mask_pgm(field.truth))
    print(f"wrote {fits_path} and {truth_path} ({len(field.blobs)} blobs, "
          f"{len(field.streaks)} streaks, {len(field.points)} hot pixels)")
    return EXIT_OK


def _cmd_convert(args) -> int:
    header, img = pipeline.load_fits_input(args.fits)
    args.pgm.write_bytes(fits_io.write_pgm(img, args.maxval))
    if header.blank_count:
        print(f"{header.blank_count} blank pixels set to 0", file=sys.stderr)
    return EXIT_OK


_COMMANDS = {
    "segment": _cmd_segment,
    "train": _cmd_train,
    "detect": _cmd_detect,
    "synth": _cmd_synth,
    "convert": _cmd_convert,
}


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, (FitsFormatError, PgmFormatError, ModelShapeMismatch, EmptyDataset,
                        DimensionMismatch, OSError, json.JSONDecodeError, KeyError)):
        return EXIT_INPUT
    if isinstance(exc, ConfigError):
        return EXIT_USAGE
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    return EXIT_INPUT


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (CosmicSegError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"cosmicseg {args.command}: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
