"""Render figure analogs from the experiment CSV files.

Rendering is read-only over the CSVs; byte-identical inputs give
byte-identical images at a fixed matplotlib version (the Agg/SVG metadata
that would vary between runs is stripped).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "qsmpc-plot"

import matplotlib.pyplot as plt
import numpy as np


class SchemaError(ValueError):
    """A CSV is missing, empty, or lacks a required column."""


@dataclass
class FigureSpec:
    """Inputs and labels for one figure."""

    csv_paths: list
    output: str
    labels: list = field(default_factory=list)
    xlabel: str = "time"
    ylabel: str = "mean fidelity"
    title: str = ""

    def __post_init__(self):
        for p in self.csv_paths:
            if not Path(p).exists():
                raise SchemaError(f"input CSV does not exist: {p}")


def read_csv(path, required=()):
    """Read a qsmpc CSV (with optional '#' comments); returns {col: [str]}."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"input CSV does not exist: {path}")
    lines = [
        ln
        for ln in path.read_text(encoding="utf-8").splitlines()
        if ln and not ln.startswith("#")
    ]
    if not lines:
        raise SchemaError(f"empty input CSV: {path}")
    header = lines[0].split(",")
    for col in required:
        if col not in header:
            raise SchemaError(f"{path} is missing required column '{col}'")
    if len(lines) < 2:
        raise SchemaError(f"{path} has a header but no data rows")
    cols = {h: [] for h in header}
    for ln in lines[1:]:
        for h, v in zip(header, ln.split(",")):
            cols[h].append(v)
    return cols


def _floats(cols, name):
    return np.array([float(v) for v in cols[name]])


def _save(fig, output):
    """Write the figure to ``output``; a PNG target also gets an SVG twin."""
    output = Path(output)
    output.parent.mkdir(parents=True, exist_ok=True)
    written = []
    targets = [output]
    if output.suffix == ".png":
        targets.append(output.with_suffix(".svg"))
    for target in targets:
        meta = {"Date": None} if target.suffix == ".svg" else {"Software": None}
        fig.savefig(target, dpi=150, metadata=meta)
        written.append(target)
    plt.close(fig)
    return written


def _band_plot(ax, cols, label):
    t = _floats(cols, "t")
    mean = _floats(cols, "mean_fidelity")
    stderr = _floats(cols, "stderr")
    ax.plot(t, mean, label=label)
    ax.fill_between(t, mean - 2 * stderr, mean + 2 * stderr, alpha=0.25, linewidth=0)


def plot_fidelity_curves(csv_paths, spec):
    """Mean-fidelity curves with +-2 stderr bands; y limited to [0, 1]."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    labels = spec.labels or [Path(p).stem for p in csv_paths]
    for path, label in zip(csv_paths, labels):
        cols = read_csv(path, required=("t", "mean_fidelity", "stderr"))
        _band_plot(ax, cols, label)
    ax.set_xlabel(spec.xlabel)
    ax.set_ylabel(spec.ylabel)
    ax.set_ylim(0.0, 1.0)
    if spec.title:
        ax.set_title(spec.title)
    ax.legend(loc="lower right")
    ax.grid(alpha=0.3)
    return _save(fig, spec.output)


def plot_compare(csv_path, spec):
    """Per-method fidelity curves from the long-format comparison CSV."""
    cols = read_csv(
        csv_path, required=("method", "n_scenarios", "t", "mean_fidelity", "stderr")
    )
    method = np.array(cols["method"])
    scen = np.array([int(v) for v in cols["n_scenarios"]])
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for m, s in sorted(set(zip(method, scen)), key=lambda x: (x[0], x[1])):
        mask = (method == m) & (scen == s)
        t = _floats(cols, "t")[mask]
        mean = _floats(cols, "mean_fidelity")[mask]
        stderr = _floats(cols, "stderr")[mask]
        label = "reduced (scenario-free)" if m == "reduced" else f"standard, {s} scenarios"
        ax.plot(t, mean, label=label)
        ax.fill_between(t, mean - 2 * stderr, mean + 2 * stderr, alpha=0.2, linewidth=0)
    ax.set_xlabel(spec.xlabel)
    ax.set_ylabel(spec.ylabel)
    ax.set_ylim(0.0, 1.0)
    ax.legend(loc="lower right")
    ax.grid(alpha=0.3)
    if spec.title:
        ax.set_title(spec.title)
    return _save(fig, spec.output)


def plot_scaling_table(csv_path, spec):
    """Terminal fidelity vs angular momentum plus a markdown table.

    The markdown echoes the CSV cells verbatim so printed reference values
    survive untouched.  Returns (written image paths, markdown path).
    """
    cols = read_csv(csv_path, required=("j", "terminal_mean_fidelity"))
    j = _floats(cols, "j")
    fid = _floats(cols, "terminal_mean_fidelity")
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(j, fid, marker="o")
    ax.set_xlabel("angular momentum j")
    ax.set_ylabel("terminal mean fidelity")
    ax.set_ylim(min(0.9, fid.min() - 0.02), 1.001)
    ax.grid(alpha=0.3)
    if spec.title:
        ax.set_title(spec.title)
    written = _save(fig, spec.output)

    md_path = Path(spec.output).with_suffix(".md")
    lines = ["| j | terminal mean fidelity |", "| --- | --- |"]
    for j_raw, f_raw in zip(cols["j"], cols["terminal_mean_fidelity"]):
        lines.append(f"| {j_raw} | {f_raw} |")
    md_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return written, md_path


def plot_ising(csv_path, spec):
    """Averaged-fidelity curve of the Ising run."""
    return plot_fidelity_curves([csv_path], spec)
