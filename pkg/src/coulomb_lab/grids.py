"""Uniform rectangular grids and scalar fields on them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class Grid:
    """Uniform grid on the box [lo, lo + shape*h] (cells) or its nodes.

    ``kind == "cell"``: points are cell centres lo + (i + 1/2) h, i < shape.
    ``kind == "node"``: points are nodes lo + i h, i < shape (shape = cells + 1).
    """

    lo: tuple
    h: float
    shape: tuple
    kind: str = "cell"

    @classmethod
    def box(cls, d: int, lo, hi, h: float, kind: str = "cell") -> "Grid":
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (d,))
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (d,))
        if h <= 0 or np.any(hi <= lo):
            raise DomainError("grid needs h > 0 and hi > lo")
        ncell = np.rint((hi - lo) / h).astype(int)
        if np.any(np.abs(ncell * h - (hi - lo)) > 1e-9 * np.maximum(1.0, hi - lo)):
            raise DomainError("box side is not an integer multiple of h")
        shape = tuple(int(n) for n in (ncell if kind == "cell" else ncell + 1))
        return cls(tuple(float(a) for a in lo), float(h), shape, kind)

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def offset(self) -> float:
        return 0.5 if self.kind == "cell" else 0.0

    @property
    def hi(self) -> tuple:
        ncell = np.asarray(self.shape) - (0 if self.kind == "cell" else 1)
        return tuple(float(a) for a in np.asarray(self.lo) + ncell * self.h)

    @property
    def axes(self) -> list:
        return [self.lo[k] + (np.arange(n) + self.offset) * self.h for k, n in enumerate(self.shape)]

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    @property
    def cell_volume(self) -> float:
        return self.h ** self.d

    def refine(self, factor: int = 2) -> "Grid":
        if self.kind == "cell":
            shape = tuple(n * factor for n in self.shape)
        else:
            shape = tuple((n - 1) * factor + 1 for n in self.shape)
        return Grid(self.lo, self.h / factor, shape, self.kind)

    def locate(self, x) -> np.ndarray:
        """Fractional index coordinates of points (for interpolation)."""
        x = np.asarray(x, dtype=float)
        return (x - np.asarray(self.lo)) / self.h - self.offset


@dataclass
class GridField:
    grid: Grid
    values: np.ndarray
    boundary: Optional[np.ndarray] = field(default=None)
    name: str = "value"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise DomainError(f"field shape {self.values.shape} != grid shape {self.grid.shape}")

    def interpolate(self, x) -> np.ndarray:
        return interpolate_linear(self.grid, self.values, x)

    def integral(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def to_rows(self):
        pts = self.grid.points().reshape(-1, self.grid.d)
        return np.column_stack([pts, self.values.reshape(-1)])


def interpolate_linear(grid: Grid, values: np.ndarray, x) -> np.ndarray:
    """Multilinear interpolation with clamping at the grid edge."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if grid.d == 1 and x.shape[-1] != 1:
        x = x.reshape(-1, 1)
    f = grid.locate(x)
    out = np.zeros(x.shape[0])
    shape = np.asarray(grid.shape)
    i0 = np.clip(np.floor(f).astype(int), 0, shape - 2)
    t = np.clip(f - i0, 0.0, 1.0)
    for corner in range(2 ** grid.d):
        bits = [(corner >> k) & 1 for k in range(grid.d)]
        idx = tuple(i0[:, k] + bits[k] for k in range(grid.d))
        w = np.ones(x.shape[0])
        for k in range(grid.d):
            w *= t[:, k] if bits[k] else (1.0 - t[:, k])
        out += w * values[idx]
    return out
