"""Command-line entry point: figrender render --kind <k> --in <csv> --out <img>."""

import argparse
import sys

from figrender.figures import SCHEMAS, FigureSpec, render
from figrender.tables import InputError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_RUNTIME = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="figrender",
        description="Render experiment CSVs into figure images.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    cmd = sub.add_parser("render", help="render one CSV into one image")
    cmd.add_argument("--kind", required=True, choices=sorted(SCHEMAS),
                     help="figure kind, fixing the expected CSV schema")
    cmd.add_argument("--in", dest="input", required=True, metavar="CSV",
                     help="input CSV path")
    cmd.add_argument("--out", required=True, metavar="IMG",
                     help="output image path (format from the extension)")
    cmd.add_argument("--xlabel", help="x axis label override")
    cmd.add_argument("--ylabel", help="y axis label override")
    cmd.add_argument("--title", help="figure title")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    spec = FigureSpec(
        input=args.input, kind=args.kind, out=args.out,
        xlabel=args.xlabel, ylabel=args.ylabel, title=args.title,
    )
    try:
        render(spec)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {spec.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
