"""Command-line front end: qsmpc <experiment> --config FILE --seed N ...

Thread capping must happen before numpy is imported, so everything heavy
is imported lazily inside main().
"""

from __future__ import annotations

import argparse
import os
import sys

_EXPERIMENTS = ("three-level", "compare", "scaling", "ising", "reduction-check")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="qsmpc",
        description=(
            "Run the reference experiments of the eigenstate-reduced "
            "stochastic MPC library; outputs deterministic CSV files plus "
            "a JSON run manifest."
        ),
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in _EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="JSON config file")
        p.add_argument(
            "--preset",
            help="named preset (defaults to the preset matching the experiment)",
        )
        p.add_argument("--seed", type=int, help="base RNG seed")
        p.add_argument("--paths", type=int, help="number of Monte Carlo paths")
        p.add_argument(
            "--threads",
            type=int,
            help="cap numeric thread count (env QSMPC_THREADS as fallback)",
        )
        p.add_argument("--out", default="results", help="output directory")
    parser.add_argument(
        "--list-presets", action="store_true", help="list preset names and exit"
    )
    return parser


_DEFAULT_PRESET = {
    "three-level": "three-level",
    "compare": "compare",
    "scaling": "scaling",
    "ising": "ising-8",
    "reduction-check": "reduction-check",
}


def _cap_threads(threads):
    if threads is None:
        env = os.environ.get("QSMPC_THREADS")
        threads = int(env) if env else None
    if threads and threads > 0:
        for var in (
            "OMP_NUM_THREADS",
            "OPENBLAS_NUM_THREADS",
            "MKL_NUM_THREADS",
            "NUMEXPR_NUM_THREADS",
        ):
            os.environ[var] = str(threads)
    return threads


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    if "--list-presets" in argv:
        from .presets import PRESETS

        print("\n".join(sorted(PRESETS)))
        return 0
    parser = _build_parser()
    args = parser.parse_args(argv)
    threads = _cap_threads(getattr(args, "threads", None))

    from .experiments import run_experiment
    from .presets import ConfigError, load_config

    preset = args.preset or (None if args.config else _DEFAULT_PRESET[args.experiment])
    overrides = {
        "seed": args.seed,
        "n_paths": args.paths,
        "threads": threads,
    }
    try:
        config = load_config(args.config, preset, overrides)
    except ConfigError as exc:
        parser.error(str(exc))
    if config["experiment"] != args.experiment:
        parser.error(
            f"config is for experiment {config['experiment']!r}, "
            f"but {args.experiment!r} was requested"
        )
    files, _ = run_experiment(config, args.out)
    for name, path in sorted(files.items()):
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
