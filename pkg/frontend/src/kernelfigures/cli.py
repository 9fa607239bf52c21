"""figures CLI: --run <dir> --kind <k> --out <file> [--format raster|vector]."""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, FigureRequest, MissingArtifactError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="figures",
        description="Render diagnostic figures from a kernellab run directory")
    parser.add_argument("--run", required=True, help="run directory")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--format", default="raster",
                        choices=["raster", "vector"])
    args = parser.parse_args(argv)
    try:
        out = render(FigureRequest(args.run, args.kind, args.out, args.format))
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
