"""Command-line entry point: results CSV in, figures out.

    ttlaw-plots results.csv --out figures [--group-by d|rho|sigma]

Always writes ``<stem>_residuum.png/.svg`` under the output directory;
when the table contains noisy rows it also writes
``<stem>_noise_floor.png/.svg`` with the σ reference lines.  Exit code
2 flags unusable input, matching the harness convention.
"""

import argparse
import sys
from pathlib import Path

from .figures import GROUP_COLUMNS, plot_noise_floor, plot_residuum_vs_samples
from .tables import ResultsTable, TableError


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="ttlaw-plots", description="render figures from a results CSV"
    )
    parser.add_argument("results", help="results CSV written by the harness")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument(
        "--group-by",
        choices=GROUP_COLUMNS,
        default="d",
        help="column that splits rows into series (default: d)",
    )
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    out = Path(args.out)
    stem = Path(args.results).stem
    try:
        table = ResultsTable.from_csv(args.results)
        summary = plot_residuum_vs_samples(
            table, group_by=args.group_by, out_path=out / f"{stem}_residuum"
        )
        files = list(summary["files"])
        if any(sigma > 0 for sigma in table.values("sigma")):
            files += plot_noise_floor(table, out / f"{stem}_noise_floor")["files"]
    except TableError as exc:
        print(f"ttlaw-plots: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"ttlaw-plots: {exc}", file=sys.stderr)
        return 2
    for path in files:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
