"""Log-log residuum figures.

Both plotters draw residuum against training-set size on log-log axes,
one series per group value, with the group mean marked by a cross at
each M and the individual restarts scattered as plus signs whenever a
cell was trained more than once.  Figures are written as both PNG and
SVG next to each other, and each call returns a small summary of what
was drawn so callers can check figure content without parsing image
files.

The figures are built on :class:`matplotlib.figure.Figure` directly —
no global pyplot state, no backend switching — so the package behaves
the same in scripts, tests, and notebooks.
"""

import warnings
from pathlib import Path

from matplotlib.figure import Figure

from .tables import TableError

GROUP_COLUMNS = ("d", "rho", "sigma")


def _label(value):
    return str(value)


def _series(table, group_by):
    """Per-group points: ``[(label, [(M, [residua]), ...]), ...]``."""
    if group_by not in GROUP_COLUMNS:
        raise TableError(
            f"cannot group by {group_by!r}; choose one of {GROUP_COLUMNS}"
        )
    out = []
    for value in table.values(group_by):
        rows = [r for r in table.rows if getattr(r, group_by) == value]
        points = [
            (m, [r.residuum for r in rows if r.M == m])
            for m in sorted({r.M for r in rows})
        ]
        out.append((_label(value), points))
    return out


def _draw(series, title):
    fig = Figure(figsize=(6.0, 4.5))
    ax = fig.add_subplot()
    scatter_points = 0
    for label, points in series:
        sizes = [m for m, _ in points]
        means = [sum(v) / len(v) for _, v in points]
        (line,) = ax.plot(sizes, means, marker="x", label=label)
        repeated = [(m, v) for m, v in points if len(v) > 1]
        for m, values in repeated:
            ax.plot(
                [m] * len(values),
                values,
                linestyle="none",
                marker="+",
                alpha=0.6,
                color=line.get_color(),
            )
            scatter_points += len(values)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("training samples $M$")
    ax.set_ylabel("residuum")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    return fig, ax, scatter_points


def _save(fig, out_path):
    stem = Path(out_path)
    stem.parent.mkdir(parents=True, exist_ok=True)
    files = [stem.with_suffix(".png"), stem.with_suffix(".svg")]
    for path in files:
        fig.savefig(path, bbox_inches="tight", dpi=150)
    return [str(path) for path in files]


def plot_residuum_vs_samples(table, group_by, out_path):
    """Residuum against training-set size, one series per group value."""
    series = _series(table, group_by)
    fig, ax, scatter_points = _draw(
        [(f"{group_by}={label}", points) for label, points in series],
        "residuum vs. training-set size",
    )
    ax.legend()
    files = _save(fig, out_path)
    return {
        "files": files,
        "groups": [label for label, _ in series],
        "scatter_points": scatter_points,
    }


def plot_noise_floor(table, out_path):
    """Residuum curves per noise level with horizontal reference lines.

    Each positive noise level in the table gets a dashed horizontal
    line at its σ; a table holding only noiseless rows draws no lines
    and warns, since the figure then shows nothing beyond the plain
    learning curves.
    """
    series = _series(table, "sigma")
    fig, ax, scatter_points = _draw(
        [(f"sigma={label}", points) for label, points in series],
        "residuum vs. noise level",
    )
    levels = [value for value in table.values("sigma") if value > 0]
    for level in levels:
        ax.axhline(level, linestyle="--", linewidth=1.0, color="gray")
        ax.annotate(
            f"sigma={level}",
            xy=(1.0, level),
            xycoords=("axes fraction", "data"),
            ha="right",
            va="bottom",
            fontsize=8,
            color="gray",
        )
    if not levels:
        warnings.warn(
            "table has no noisy rows; reference lines omitted", stacklevel=2
        )
    ax.legend()
    files = _save(fig, out_path)
    return {
        "files": files,
        "groups": [label for label, _ in series],
        "scatter_points": scatter_points,
        "reference_levels": levels,
    }
