"""cli

Kommandozeile für varimorph.

Examples:
  varimorph build --constraints pts.txt --out run/
  varimorph morph2d --a x.pgm --b o.pgm --frames 8 --tmax 1.0 --out frames/
  varimorph morph3d --a a.obj --b b.obj --frames 6 --out frames/
  varimorph influence --a a.pgm --b b.pgm --c c.pgm --path 0,0:0.5,0.3:1,0 --out frames/
  varimorph warp --a a.pgm --b b.pgm --corr pts.txt --frames 8 --out frames/
  varimorph baseline-sdf --a x.pgm --b o.pgm --frames 8 --out frames/
  varimorph reconstruct --stack slices.txt --res 48 --out mesh.obj

Errors print one line "E<code> <kind>: <message>" on stderr; exit codes are
2 (usage), 3 (I/O), 4 (numeric), 1 (anything else).
"""
from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from .config import RunConfig, load_config
from .errors import UsageError, VarimorphError
from .log import configure_logging


class ArgumentParser(argparse.ArgumentParser):
    """argparse that raises UsageError instead of exiting."""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


# flag -> RunConfig field
_FIELDS = {
    "a": "a", "b": "b", "c": "c", "corr": "corr", "stack": "stack", "constraints": "constraints",
    "out": "out", "kernel": "kernel", "dim_hint": "dim_hint", "tmax": "t_max", "frames": "frames",
    "res": "res", "threshold": "threshold", "normal_offset": "normal_offset", "normal_k": "normal_k",
    "max_pairs": "max_pairs", "path": "path", "workers": "workers", "seed": "seed",
}


def config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {field: getattr(args, flag, None) for flag, field in _FIELDS.items()}
    if getattr(args, "no_normalize", False):
        overrides["normalize"] = False
    if getattr(args, "raster", False):
        overrides["raster"] = True
    return load_config(args.cmd, overrides, defaults_file=args.config)


def parse_cli(argv: Optional[List[str]] = None) -> RunConfig:
    args = build_parser().parse_args(argv)
    if not getattr(args, "cmd", None):
        raise UsageError("missing subcommand")
    return config_from_args(args)


def cmd_run(args: argparse.Namespace) -> int:
    from .pipeline import run_pipeline

    try:
        cfg = config_from_args(args)
        manifest = run_pipeline(cfg)
    except VarimorphError as e:
        print(e.line(), file=sys.stderr)
        return e.exit_code
    for name in manifest.outputs:
        print(name)
    return 0


def _common(s: argparse.ArgumentParser, out_help: str = "output directory") -> None:
    s.add_argument("--out", default=None, help=out_help)
    s.add_argument("--kernel", default=None, help="r2logr | r | r3 (default: by dimension)")
    s.add_argument("--dim-hint", dest="dim_hint", default=None)
    s.add_argument("--res", default=None, help="sampling grid resolution per axis")
    s.add_argument("--workers", default=None)
    s.add_argument("--seed", default=None)
    s.add_argument("--no-normalize", dest="no_normalize", action="store_true",
                   help="solve in input coordinates instead of the unit box")
    s.add_argument("--config", default=None, help="defaults file (default: ~/.varimorph)")
    s.add_argument("-v", "--verbose", action="count", default=0)
    s.add_argument("--log-file", dest="log_file", default=None, help="'' disables the log file")
    s.set_defaults(func=cmd_run)


def _image_opts(s: argparse.ArgumentParser) -> None:
    s.add_argument("--threshold", default=None, help="gray level of the boundary (default 127.5)")
    s.add_argument("--normal-offset", dest="normal_offset", default=None, help="in pixels (default 1)")
    s.add_argument("--max-pairs", dest="max_pairs", default=None, help="thin each shape to this many pairs")


def build_parser() -> argparse.ArgumentParser:
    p = ArgumentParser(prog="varimorph", description="variational implicit shapes, morphs and reconstructions")
    sub = p.add_subparsers(dest="cmd", parser_class=ArgumentParser)

    s = sub.add_parser("build", help="Solve a constraint file and write the model")
    s.add_argument("--constraints", default=None)
    _common(s)

    s = sub.add_parser("morph2d", help="Morph between two PGM images")
    s.add_argument("--a", default=None)
    s.add_argument("--b", default=None)
    s.add_argument("--frames", default=None)
    s.add_argument("--tmax", default=None)
    s.add_argument("--raster", action="store_true", help="also write a PGM mask per frame")
    _image_opts(s)
    _common(s)

    s = sub.add_parser("morph3d", help="Morph between two OBJ shapes")
    s.add_argument("--a", default=None)
    s.add_argument("--b", default=None)
    s.add_argument("--frames", default=None)
    s.add_argument("--tmax", default=None)
    s.add_argument("--normal-k", dest="normal_k", default=None, help="normal constraint offset (default 0.01)")
    s.add_argument("--max-pairs", dest="max_pairs", default=None)
    _common(s)

    s = sub.add_parser("influence", help="Morph A to B under the influence of C")
    s.add_argument("--a", default=None)
    s.add_argument("--b", default=None)
    s.add_argument("--c", default=None)
    s.add_argument("--path", default=None, help="s0,t0:s1,t1:...")
    s.add_argument("--frames", default=None)
    s.add_argument("--normal-k", dest="normal_k", default=None)
    s.add_argument("--raster", action="store_true")
    _image_opts(s)
    _common(s)

    s = sub.add_parser("warp", help="Morph after half-way warping by point correspondences")
    s.add_argument("--a", default=None)
    s.add_argument("--b", default=None)
    s.add_argument("--corr", default=None)
    s.add_argument("--frames", default=None)
    s.add_argument("--tmax", default=None)
    _image_opts(s)
    _common(s)

    s = sub.add_parser("baseline-sdf", help="Linear interpolation of signed distance fields")
    s.add_argument("--a", default=None)
    s.add_argument("--b", default=None)
    s.add_argument("--frames", default=None)
    s.add_argument("--threshold", default=None)
    s.add_argument("--raster", action="store_true")
    _common(s)

    s = sub.add_parser("reconstruct", help="Surface from a slice-stack manifest")
    s.add_argument("--stack", default=None)
    _common(s, out_help="output OBJ file or directory")

    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e.line(), file=sys.stderr)
        return e.exit_code
    except SystemExit as e:  # --help
        return int(e.code or 0)
    if not hasattr(args, "func") or args.func is None:
        parser.print_help()
        return UsageError.exit_code
    configure_logging(args.verbose, args.log_file)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
