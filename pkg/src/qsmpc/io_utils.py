"""Deterministic CSV and run-manifest emission.

Numeric cells are written with 17 significant digits so equal inputs give
byte-identical files; all files are UTF-8 with LF line endings.
"""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path


def format_number(x):
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def write_csv(path, header, rows, comments=()):
    """Write a CSV file with optional leading '#' comment lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(format_number(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def config_hash(config):
    """SHA-256 of the canonical JSON encoding of a config dict."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def write_manifest(path, experiment, config, extra=None):
    """Write the JSON run manifest (config hash, seeds, versions)."""
    import numpy

    from . import __version__

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = {
        "experiment": experiment,
        "config": config,
        "config_sha256": config_hash(config),
        "seed": config.get("seed"),
        "n_paths": config.get("n_paths"),
        "threads": config.get("threads"),
        "versions": {
            "qsmpc": __version__,
            "numpy": numpy.__version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
        },
    }
    if extra:
        manifest["results"] = extra
    path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return path


def read_csv(path):
    """Read back a CSV written by :func:`write_csv`; returns (header, columns)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    lines = [ln for ln in lines if not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path} is empty")
    header = lines[0].split(",")
    cols = {h: [] for h in header}
    for ln in lines[1:]:
        for h, v in zip(header, ln.split(",")):
            cols[h].append(v)
    return header, cols
