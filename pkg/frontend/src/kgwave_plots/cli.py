"""Command line entry: render one figure from one CSV.

Exit codes: 0 success, 2 bad input (schema mismatch, missing columns, empty
data), 3 unexpected rendering failure.
"""

import argparse
import sys

from . import KINDS, PlotJob, SchemaError, render


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="kgwave-plots")
    p.add_argument("--input", required=True, help="CSV path (sidecar <path>.json required)")
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--output", required=True, help="figure path (.svg for deterministic bytes)")
    p.add_argument("--name", default="rho0", help="observable for overlay figures")
    p.add_argument("--t", type=float, default=-1.0, help="time slice for overlay (-1 = last)")
    args = p.parse_args(argv)
    job = PlotJob(input=args.input, kind=args.kind, output=args.output,
                  name=args.name, t=args.t)
    try:
        render(job)
    except (SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"rendering failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
