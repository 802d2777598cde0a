"""Figures from law-recovery result tables.

The training harness records one CSV row per trained grid cell
(system, d, M, sigma, rho, L, restart, residuum, ...).  This package
reads those tables — and nothing else — and renders the standard
summary figures: log-log residuum against training-set size, grouped
by a chosen column, and the same curves against horizontal noise-level
reference lines.  Figures are derived artifacts; inputs are never
modified, and rerunning a script redraws the same figure.
"""

from .tables import ResultsTable, TableError
from .figures import plot_noise_floor, plot_residuum_vs_samples

__all__ = [
    "ResultsTable",
    "TableError",
    "plot_noise_floor",
    "plot_residuum_vs_samples",
]
