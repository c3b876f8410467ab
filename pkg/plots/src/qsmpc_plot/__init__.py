"""Static figure rendering for qsmpc CSV outputs (PNG + SVG)."""

__version__ = "0.1.0"

from .figures import (
    FigureSpec,
    SchemaError,
    plot_compare,
    plot_fidelity_curves,
    plot_ising,
    plot_scaling_table,
    read_csv,
)
