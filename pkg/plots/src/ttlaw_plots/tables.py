"""Typed access to the result tables written by the training harness.

A results CSV starts with ``#`` comment lines (provenance), then a
header naming at least the eight required columns, then one row per
trained cell.  Rows whose ``status`` column reports anything but
``ok`` describe failed cells and are dropped on load; every kept row
must carry a finite, non-negative residuum.  Parsing is strict — a
missing column, a malformed number, or a table with no usable rows is
a :class:`TableError`, never a silently empty figure.
"""

import csv
import math
from dataclasses import dataclass

REQUIRED_COLUMNS = ("system", "d", "M", "sigma", "rho", "L", "restart", "residuum")
_INT_COLUMNS = ("d", "M", "rho", "L", "restart")


class TableError(ValueError):
    """A results CSV could not be parsed into a usable table."""


@dataclass(frozen=True)
class ResultRow:
    """One trained grid cell."""

    system: str
    d: int
    M: int
    sigma: float
    rho: int
    L: int
    restart: int
    residuum: float


def _cell(source, name, raw, kind):
    try:
        return kind(raw)
    except (TypeError, ValueError):
        raise TableError(
            f"{source}: column {name!r} holds {raw!r}, not a number"
        ) from None


@dataclass(frozen=True)
class ResultsTable:
    """Validated result rows, in file order."""

    rows: tuple

    @classmethod
    def from_csv(cls, path):
        """Parse a results CSV, dropping rows of cells that failed."""
        source = str(path)
        try:
            with open(path, "r", encoding="ascii", newline="") as fh:
                reader = csv.DictReader(
                    line for line in fh if not line.startswith("#")
                )
                if reader.fieldnames is None:
                    raise TableError(f"{source}: no header line")
                missing = [c for c in REQUIRED_COLUMNS if c not in reader.fieldnames]
                if missing:
                    raise TableError(f"{source}: missing columns {missing}")
                raw_rows = list(reader)
        except OSError as exc:
            raise TableError(f"{source}: {exc}") from exc

        rows = []
        for raw in raw_rows:
            if raw.get("status", "ok") != "ok":
                continue
            sigma = _cell(source, "sigma", raw["sigma"], float)
            residuum = _cell(source, "residuum", raw["residuum"], float)
            if not (math.isfinite(residuum) and residuum >= 0):
                raise TableError(
                    f"{source}: residuum {residuum!r} on an ok row"
                )
            if not (math.isfinite(sigma) and sigma >= 0):
                raise TableError(f"{source}: noise level {sigma!r}")
            rows.append(
                ResultRow(
                    system=raw["system"],
                    sigma=sigma,
                    residuum=residuum,
                    **{c: _cell(source, c, raw[c], int) for c in _INT_COLUMNS},
                )
            )
        if not rows:
            raise TableError(f"{source}: no usable result rows")
        return cls(rows=tuple(rows))

    def __len__(self):
        return len(self.rows)

    def values(self, column):
        """Sorted distinct values of one column."""
        return sorted({getattr(row, column) for row in self.rows})
