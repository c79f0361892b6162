"""Command line for sweep-CSV figures.

    plots --csv sweep.csv --metric lifetime --side 7 --out fig.png
"""

from __future__ import annotations

import argparse
import sys

from . import FigureSpec, PlotError, render


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="plots",
                                 description="render sweep-CSV comparison figures")
    ap.add_argument("--csv", required=True)
    ap.add_argument("--metric", required=True,
                    choices=("lifetime", "energy_rate", "tvd"))
    ap.add_argument("--side", type=int, default=None)
    ap.add_argument("--out", required=True)
    ap.add_argument("--log-y", dest="log_y", action="store_true", default=None)
    ap.add_argument("--linear-y", dest="log_y", action="store_false")
    ap.add_argument("--band", action="store_true",
                    help="shade the interquartile range")
    ap.add_argument("--tvd-field", action="store_true",
                    help="use the field-only TVD column")
    args = ap.parse_args(argv)
    spec = FigureSpec(metric=args.metric, out=args.out, side=args.side,
                      log_y=args.log_y, band=args.band,
                      field_only_tvd=args.tvd_field)
    try:
        result = render(args.csv, spec)
    except (OSError, PlotError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {result.out} ({len(result.series)} algorithms, "
          f"{result.n_rows} rows)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
