"""Uniform cell-centred grid on a rectangle and the quadrature primitives.

All integrals use the midpoint rule on cell averages, so ``integrate`` is a
plain weighted sum.  Arrays are stored with shape ``(nx, ny)``: the first
index runs along x.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class GridSpec:
    Lx: float = 1.0
    Ly: float = 1.0
    nx: int = 64
    ny: int = 64

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise InputError("cell counts must be integers")
        if self.nx < 4 or self.ny < 4:
            raise InputError(f"need nx, ny >= 4, got {self.nx}x{self.ny}")
        if not (self.Lx > 0 and self.Ly > 0):
            raise InputError("domain extents must be positive")

    @property
    def hx(self) -> float:
        return self.Lx / self.nx

    @property
    def hy(self) -> float:
        return self.Ly / self.ny

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return self.Lx * self.Ly

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centre coordinate arrays ``(X, Y)``, each of shape ``(nx, ny)``."""
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def contains(self, x: float, y: float) -> bool:
        return 0.0 < x < self.Lx and 0.0 < y < self.Ly

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.Lx, self.Ly, self.nx * factor, self.ny * factor)


@dataclass(frozen=True, eq=False)
class Field:
    """Cell averages of a scalar on ``grid``.

    The array is made read-only on construction; operators always return a
    fresh Field.
    """

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise InputError(f"field shape {vals.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise InputError("field values must be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, grid: GridSpec, c: float) -> "Field":
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_function(cls, grid: GridSpec, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "Field":
        X, Y = grid.centers()
        return cls(grid, np.broadcast_to(fn(X, Y), grid.shape))

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values)

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def __repr__(self):
        return f"Field({self.grid.nx}x{self.grid.ny}, min={self.min():.3g}, max={self.max():.3g})"


@dataclass(frozen=True)
class MeasureSpec:
    """Nonnegative initial measure: Dirac atoms plus an optional density.

    ``atoms`` holds ``(x, y, weight)`` triples.
    """

    atoms: Sequence[tuple[float, float, float]] = ()
    density: Field | None = None
    mass: float = field(init=False)

    def __post_init__(self):
        atoms = tuple((float(x), float(y), float(w)) for x, y, w in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        if any(w <= 0 for _, _, w in atoms):
            raise InputError("atom weights must be positive")
        total = sum(w for _, _, w in atoms)
        if self.density is not None:
            if self.density.min() < 0:
                raise InputError("density must be nonnegative")
            total += integrate(self.density)
        if not total > 0:
            raise InputError("initial measure must have positive total mass")
        object.__setattr__(self, "mass", total)

    def check_inside(self, grid: GridSpec) -> None:
        for x, y, _ in self.atoms:
            if not grid.contains(x, y):
                raise InputError(f"atom at ({x}, {y}) lies outside the open domain")
        if self.density is not None and self.density.grid != grid:
            raise InputError("density lives on a different grid")


def _vals(f) -> np.ndarray:
    return f.values if isinstance(f, Field) else np.asarray(f, dtype=float)


def integrate(f: Field) -> float:
    return float(f.values.sum() * f.grid.cell_area)


def lp_norm(f: Field, p: float = 2.0) -> float:
    """L^p norm by the midpoint rule; ``p=np.inf`` gives the max norm."""
    a = np.abs(f.values)
    if np.isinf(p):
        return float(a.max())
    if p < 1:
        raise InputError(f"lp_norm needs p >= 1, got {p}")
    if p == 1:
        return float(a.sum() * f.grid.cell_area)
    # scale out the max to avoid overflow of a**p
    peak = a.max()
    if peak == 0:
        return 0.0
    return float(peak * ((a / peak) ** p).sum() ** (1.0 / p) * f.grid.cell_area ** (1.0 / p))


TestFunctionLike = Union[float, np.ndarray, Callable, "object"]


def evaluate_on_grid(phi: TestFunctionLike, grid: GridSpec) -> np.ndarray | float:
    """Sample ``phi`` at cell centres.

    Accepts a scalar, an array of grid shape, a callable ``phi(X, Y)`` or any
    object exposing ``evaluate(grid)``.
    """
    if np.isscalar(phi):
        return float(phi)
    if hasattr(phi, "evaluate"):
        return phi.evaluate(grid)
    if callable(phi):
        X, Y = grid.centers()
        return np.broadcast_to(phi(X, Y), grid.shape)
    arr = np.asarray(phi, dtype=float)
    if arr.shape != grid.shape:
        raise InputError("test function array does not match grid")
    return arr


def pair_with_test_function(f: Field, phi: TestFunctionLike) -> float:
    w = evaluate_on_grid(phi, f.grid)
    return float((f.values * w).sum() * f.grid.cell_area)
