"""Reproduce miniature versions of the reference experiments through the
same code paths the CLI uses, and show where the CSV outputs land.

The full-scale presets (qsmpc three-level / scaling / ising / compare /
reduction-check) run the paper-scale profiles; this demo shrinks paths and
horizons so it finishes in about a minute.
"""

import json
import tempfile
from pathlib import Path

from qsmpc.experiments import run_experiment
from qsmpc.presets import get_preset, validate_config

out_root = Path(tempfile.mkdtemp(prefix="qsmpc_demo_"))

tweaks = {
    "three-level": {"n_paths": 64, "model": {"T": 6.0}},
    "reduction-check": {"n_paths": 200, "collapse_T": 15.0, "model": {"T": 15.0}},
    "ising": {"n_paths": 16, "model": {"T": 0.5}},
}

for name, preset in (
    ("three-level", "three-level"),
    ("reduction-check", "reduction-check"),
    ("ising", "ising-4"),
):
    cfg = get_preset(preset)
    for key, value in tweaks[name].items():
        if key == "model":
            cfg["model"].update(value)
        else:
            cfg[key] = value
    validate_config(cfg)
    out = out_root / name
    files, results = run_experiment(cfg, out)
    print(f"\n=== {name} -> {out}")
    for label, path in sorted(files.items()):
        print(f"  {label}: {Path(path).name}")
    print("  results:", json.dumps(results, default=str)[:200], "...")

print(f"\nall outputs under {out_root}")
print("plot them with the companion package, e.g.")
print(f"  qsmpc-plot --figure fid --in {out_root/'three-level'} --out fid.png")
