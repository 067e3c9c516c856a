"""CLI: plot --in <metrics dir> --out <figure dir>."""

from __future__ import annotations

import argparse
import sys

from .metrics_io import SchemaError, scan_directory
from .render import render


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot",
        description="Render regret / violation / deployment panels from metrics files.",
    )
    parser.add_argument("--in", dest="input_dir", required=True, help="directory of metrics CSV files")
    parser.add_argument("--out", dest="output_dir", required=True, help="directory for figures")
    args = parser.parse_args(argv)
    try:
        files = scan_directory(args.input_dir)
    except SchemaError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    if not files:
        print(f"error: no .csv metrics files in {args.input_dir}", file=sys.stderr)
        return 2
    written = render(files, args.output_dir)
    for path in written:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
