"""qsmpc-plot --figure {fid,compare,scaling,ising} --in DIR --out FILE"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import (
    FigureSpec,
    SchemaError,
    plot_compare,
    plot_fidelity_curves,
    plot_ising,
    plot_scaling_table,
)

_INPUTS = {
    "fid": ("three_level_controlled.csv", "three_level_uncontrolled.csv"),
    "compare": ("compare_fidelity.csv",),
    "scaling": ("scaling.csv",),
    "ising": ("ising_fidelity.csv",),
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="qsmpc-plot",
        description="Render figure analogs from qsmpc experiment CSV outputs.",
    )
    parser.add_argument(
        "--figure", required=True, choices=sorted(_INPUTS), help="figure to render"
    )
    parser.add_argument("--in", dest="in_dir", required=True, help="CSV directory")
    parser.add_argument("--out", required=True, help="output image file (PNG adds SVG)")
    args = parser.parse_args(argv)

    in_dir = Path(args.in_dir)
    paths = [in_dir / name for name in _INPUTS[args.figure]]
    try:
        if args.figure == "fid":
            spec = FigureSpec(
                csv_paths=[str(p) for p in paths],
                output=args.out,
                labels=["controlled", "uncontrolled"],
                title="three-level stabilization",
            )
            written = plot_fidelity_curves(spec.csv_paths, spec)
        elif args.figure == "compare":
            spec = FigureSpec(
                csv_paths=[str(paths[0])],
                output=args.out,
                title="reduced vs scenario-sampling SMPC",
            )
            written = plot_compare(str(paths[0]), spec)
        elif args.figure == "scaling":
            spec = FigureSpec(
                csv_paths=[str(paths[0])],
                output=args.out,
                title="terminal fidelity vs angular momentum",
            )
            images, md = plot_scaling_table(str(paths[0]), spec)
            written = list(images) + [md]
        else:
            spec = FigureSpec(
                csv_paths=[str(paths[0])],
                output=args.out,
                title="Ising chain stabilization",
            )
            written = plot_ising(str(paths[0]), spec)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
