"""Figure rendering CLI: plot <kind> --in <csv> --out <img> [filters]."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .csvio import CsvFormatError
from .figures import FIGURE_KINDS, EmptySelectionError, FigureSpec, render


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plot", description=__doc__)
    parser.add_argument("kind", choices=FIGURE_KINDS, help="figure kind")
    parser.add_argument("--in", dest="input_path", required=True, type=Path, help="input CSV")
    parser.add_argument("--out", dest="output_path", required=True, type=Path, help="output image")
    parser.add_argument("--methods", help="comma-separated method filter")
    parser.add_argument("--m", type=int, help="ranging-count filter")
    parser.add_argument("--rho", type=float, help="noise-level filter (cdf)")
    parser.add_argument("--logy", action="store_true", help="log-scale y axis (rmse/boxes)")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    methods = tuple(v.strip() for v in args.methods.split(",")) if args.methods else None
    try:
        spec = FigureSpec(
            kind=args.kind,
            input_path=args.input_path,
            output_path=args.output_path,
            methods=methods,
            m=args.m,
            rho=args.rho,
            logy=args.logy,
        )
        out = render(spec)
    except (CsvFormatError, EmptySelectionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
