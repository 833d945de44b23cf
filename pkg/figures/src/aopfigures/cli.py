"""Render one figure from aopsolver CSV output.

Usage: aop-figures FIGURE_ID INPUT.csv [INPUT2.csv ...] --out OUTPUT.png

Exit codes: 0 success, 1 bad arguments or schema-mismatched input.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .jobs import FIGURE_IDS, FigureJob, SchemaError, render

__all__ = ["main"]


def main(argv: "list[str] | None" = None) -> int:
    parser = argparse.ArgumentParser(prog="aop-figures", description=__doc__)
    parser.add_argument("figure_id", choices=FIGURE_IDS)
    parser.add_argument("inputs", nargs="+", metavar="INPUT.csv")
    parser.add_argument("--out", required=True, metavar="OUTPUT")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        job = FigureJob(
            figure_id=args.figure_id,
            inputs=tuple(Path(p) for p in args.inputs),
            output=Path(args.out),
        )
        render(job)
    except SchemaError as exc:
        print(f"aop-figures: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"aop-figures: cannot write output: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
