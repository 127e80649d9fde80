"""Uniform interval grids and zero-extended grid functions.

Nodes are strictly interior: node k sits at ``x_lo + (k + 1) h`` with
``h = (x_hi - x_lo) / (n + 1)``.  The endpoint values (and everything outside
the interval) are zero by convention and never stored.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidBoundsError, NonFiniteSampleError, TooCoarseError

MIN_NODES = 4


class Endpoint(enum.Enum):
    LEFT = "left"
    RIGHT = "right"


class Extension(enum.Enum):
    ZERO_OUTSIDE = "zero-outside"


def _frozen(arr, dtype=None):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Grid:
    x_lo: float
    x_hi: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.x_lo) and np.isfinite(self.x_hi)) or self.x_lo >= self.x_hi:
            raise InvalidBoundsError(f"need x_lo < x_hi, got ({self.x_lo}, {self.x_hi})")
        if int(self.n) != self.n or self.n < MIN_NODES:
            raise TooCoarseError(f"need at least {MIN_NODES} interior nodes, got n={self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return (self.x_hi - self.x_lo) / (self.n + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.x_lo + self.h * np.arange(1, self.n + 1)

    @property
    def width(self) -> float:
        return self.x_hi - self.x_lo

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.x_lo + self.x_hi)

    def endpoint(self, which: Endpoint) -> float:
        return self.x_lo if which is Endpoint.LEFT else self.x_hi

    def one_sided_distance(self, which: Endpoint) -> np.ndarray:
        """Distance of every node to the chosen endpoint (not the nearer one)."""
        if which is Endpoint.LEFT:
            return self.h * np.arange(1, self.n + 1)
        return self.h * np.arange(self.n, 0, -1)

    def same_as(self, other: "Grid") -> bool:
        return (self.n == other.n and np.isclose(self.x_lo, other.x_lo)
                and np.isclose(self.x_hi, other.x_hi))


def make_grid(x_lo: float, x_hi: float, n: int) -> Grid:
    return Grid(float(x_lo), float(x_hi), n)


@dataclass(frozen=True)
class GridFunction:
    """Samples at the interior nodes of ``grid``; identically zero outside."""

    grid: Grid
    values: np.ndarray
    extension: Extension = field(default=Extension.ZERO_OUTSIDE)

    def __post_init__(self):
        vals = np.asarray(self.values)
        dtype = complex if np.iscomplexobj(vals) else float
        vals = _frozen(vals, dtype=dtype)
        if vals.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got shape {vals.shape}")
        object.__setattr__(self, "values", vals)

    @property
    def nodes(self):
        return self.grid.nodes

    def __call__(self, x):
        """Piecewise-linear evaluation with zero at and beyond the endpoints."""
        g = self.grid
        xp = np.concatenate(([g.x_lo], g.nodes, [g.x_hi]))
        fp = np.concatenate(([0.0], self.values, [0.0]))
        x = np.asarray(x, dtype=float)
        if np.iscomplexobj(fp):
            out = np.interp(x, xp, fp.real) + 1j * np.interp(x, xp, fp.imag)
        else:
            out = np.interp(x, xp, fp)
        return np.where((x <= g.x_lo) | (x >= g.x_hi), 0.0, out)

    def __add__(self, other):
        return GridFunction(self.grid, self.values + _values_of(other, self.grid))

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - _values_of(other, self.grid))

    def __mul__(self, scalar):
        return GridFunction(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


def _values_of(other, grid):
    if isinstance(other, GridFunction):
        if not other.grid.same_as(grid):
            raise ValueError("grid functions live on different grids")
        return other.values
    return np.asarray(other)


def zeros(grid: Grid) -> GridFunction:
    return GridFunction(grid, np.zeros(grid.n))


@dataclass(frozen=True)
class DistanceField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, dtype=float))


def distance_field(grid: Grid) -> DistanceField:
    x = grid.nodes
    return DistanceField(grid, np.minimum(x - grid.x_lo, grid.x_hi - x))


def sample_closed_form(grid: Grid, formula: Callable) -> GridFunction:
    """Evaluate ``formula`` at every interior node."""
    x = grid.nodes
    with np.errstate(all="ignore"):
        try:
            vals = np.asarray(formula(x))
        except (ZeroDivisionError, TypeError):
            vals = None
        if vals is None or vals.shape != x.shape:
            # scalar-only callables, or constants returned for array input
            vals = np.array([_scalar_eval(formula, xi) for xi in x])
    if not np.all(np.isfinite(vals)):
        bad = x[~np.isfinite(vals)]
        raise NonFiniteSampleError(f"formula is not finite at x={bad[0]:.6g}")
    return GridFunction(grid, vals)


def _scalar_eval(formula, x):
    try:
        return formula(float(x))
    except (ZeroDivisionError, ValueError, OverflowError):
        return np.nan
