"""Space-time samples of a solution, with CSV round-tripping."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from .spectral_core import EigenSystem, basis_matrix


def fmt(value: float) -> str:
    """17 significant digits: round-trips every double."""
    return format(float(value), ".17g")


@dataclass
class GridSolution:
    """Row i holds time ``t_grid[i]``, column j holds ``x_grid[j]``.

    ``coeffs`` (one row of spectral coefficients per time) is kept when the
    solution came from a spectral solver, so it can be evaluated off-grid.
    """

    values: np.ndarray
    t_grid: np.ndarray
    x_grid: np.ndarray
    coeffs: Optional[np.ndarray] = None
    system: Optional[EigenSystem] = None
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        self.x_grid = np.asarray(self.x_grid, dtype=float)
        if self.values.shape != (self.t_grid.size, self.x_grid.size):
            raise ValueError(
                f"values shape {self.values.shape} does not match grids "
                f"({self.t_grid.size}, {self.x_grid.size})"
            )
        if self.coeffs is not None:
            self.coeffs = np.asarray(self.coeffs, dtype=float)
            if self.system is None or self.coeffs.shape != (self.t_grid.size, self.system.n_modes):
                raise ValueError("coeffs need a matching eigensystem")

    @classmethod
    def from_coeffs(cls, coeffs, t_grid, system: EigenSystem, k_steps: int, meta=None):
        x_grid = np.linspace(0.0, system.domain_length, k_steps + 1)
        values = np.asarray(coeffs) @ basis_matrix(system, x_grid).T
        return cls(values, t_grid, x_grid, coeffs, system, dict(meta or {}))

    @property
    def m_steps(self) -> int:
        return self.t_grid.size - 1

    @property
    def k_steps(self) -> int:
        return self.x_grid.size - 1

    def at_x(self, x: float) -> np.ndarray:
        """Column of values at ``x``: series synthesis if possible, else a grid node."""
        if self.coeffs is not None:
            return self.coeffs @ basis_matrix(self.system, [x])[0]
        hit = np.flatnonzero(np.isclose(self.x_grid, x, rtol=0, atol=1e-12))
        if hit.size == 0:
            raise ValueError(f"x={x} is not a grid node and no spectral coefficients are stored")
        return self.values[:, hit[0]]

    def to_csv(self, header_comment: Optional[str] = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\r\n")
        w = csv.writer(buf)
        w.writerow(["t\\x"] + [fmt(x) for x in self.x_grid])
        for t, row in zip(self.t_grid, self.values):
            w.writerow([fmt(t)] + [fmt(v) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "GridSolution":
        lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
        rows = list(csv.reader(lines))
        x_grid = np.array([float(v) for v in rows[0][1:]])
        t_grid = np.array([float(r[0]) for r in rows[1:]])
        values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
        return cls(values, t_grid, x_grid)
