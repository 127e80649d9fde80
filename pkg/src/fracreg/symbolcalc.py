"""Translation-invariant Fourier multipliers on a periodized line.

Conventions: ``F u(xi) = int e^{-i x xi} u(x) dx``, so ``d/dx`` has symbol
``i xi`` and the order reducer ``(1 + i xi)^t`` with ``t = 1`` is ``1 + d/dx``.
In one dimension the tangential bracket is the constant 1.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import AliasingRiskError, BranchError
from .grid1d import Grid, GridFunction

DEFAULT_XI_MAX = 1.0e3


class Parity(enum.Enum):
    EVEN = "even"
    PLUS = "plus"
    MINUS = "minus"
    NONE = "none"


def _sample_frequencies(sample_count, xi_max, xi_min=1.0e-3):
    return np.geomspace(xi_min, xi_max, sample_count)


@dataclass(frozen=True)
class MultiplierSymbol:
    """A symbol ``xi -> p(xi)`` with order and parity metadata.

    Even symbols and symbols carrying an ellipticity constant are checked on
    construction over log-spaced frequencies up to ``xi_max``.
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    order: float
    parity: Parity = Parity.NONE
    ellipticity_constant: Optional[float] = None
    name: str = "p"
    xi_max: float = DEFAULT_XI_MAX

    def __post_init__(self):
        if self.parity is Parity.EVEN and not check_evenness(self, 64):
            raise ValueError(f"symbol {self.name} is declared even but p(-xi) != p(xi)")
        c = self.ellipticity_constant
        if c is not None and not check_strong_ellipticity(self, c, 64):
            raise ValueError(f"symbol {self.name} fails Re p(xi) >= {c}|xi|^{self.order}")

    def __call__(self, xi):
        return np.asarray(self.evaluate(np.asarray(xi, dtype=float)))

    def is_hermitian(self, sample_count=64) -> bool:
        xi = _sample_frequencies(sample_count, self.xi_max)
        p, q = self(xi), self(-xi)
        return bool(np.all(np.abs(q - np.conj(p)) <= 1e-12 * (1 + np.abs(p))))


def fractional_laplacian_symbol(a: float) -> MultiplierSymbol:
    """``|xi|^{2a}``, the symbol of ``(-Delta)^a``."""
    return MultiplierSymbol(lambda xi: np.abs(xi) ** (2 * a), order=2 * a,
                            parity=Parity.EVEN, ellipticity_constant=1.0,
                            name=f"|xi|^{2 * a:g}")


def xi_symbol(t: float, sign: int = +1, bracket: float = 1.0) -> MultiplierSymbol:
    """``(bracket + sign * i xi)^t`` on the principal branch.

    ``sign=+1`` extends holomorphically to ``Im xi < 0`` and preserves support
    in ``x >= 0``; ``sign=-1`` is the mirror image.
    """
    if bracket <= 0 and float(t) != int(t):
        # 0 +- i xi sweeps across the cut at xi = 0
        raise BranchError(f"(({bracket}) +- i xi)^{t} crosses the principal branch cut")
    s = 1 if sign > 0 else -1

    def evaluate(xi):
        return (bracket + s * 1j * xi) ** t

    parity = Parity.EVEN if t == 0 else (Parity.PLUS if s > 0 else Parity.MINUS)
    return MultiplierSymbol(evaluate, order=float(t), parity=parity,
                            name=f"(1{'+' if s > 0 else '-'}i xi)^{t:g}")


def check_evenness(sym: MultiplierSymbol, sample_count: int = 64) -> bool:
    if sample_count < 16:
        raise ValueError("need at least 16 samples")
    xi = _sample_frequencies(sample_count, sym.xi_max)
    p = np.asarray(sym.evaluate(xi))
    q = np.asarray(sym.evaluate(-xi))
    return bool(np.all(np.abs(q - p) <= 1e-12 * (1 + np.abs(p))))


def check_strong_ellipticity(sym: MultiplierSymbol, c: float, sample_count: int = 64,
                             xi_max: Optional[float] = None) -> bool:
    if c <= 0:
        raise ValueError("ellipticity constant must be positive")
    xi_max = sym.xi_max if xi_max is None else xi_max
    xi = np.geomspace(1.0, xi_max, sample_count)
    xi = np.concatenate([xi, -xi])
    re = np.real(np.asarray(sym.evaluate(xi)))
    return bool(np.all(re >= c * np.abs(xi) ** sym.order))


@dataclass(frozen=True)
class PeriodizationConfig:
    """Transform box ``[-L, L)`` sampled with ``m`` points at the grid spacing."""

    box_halfwidth: float
    padding_factor: int
    m: int

    def __post_init__(self):
        if self.padding_factor < 2:
            raise ValueError("padding_factor must be >= 2")
        if self.m < 2 or self.m & (self.m - 1):
            raise ValueError(f"m must be a power of two, got {self.m}")

    @classmethod
    def for_grid(cls, grid: Grid, padding_factor: int = 4,
                 min_halfwidth: float = 0.0) -> "PeriodizationConfig":
        halfwidth = 0.5 * grid.width
        reach = max(abs(grid.x_lo), abs(grid.x_hi))
        L = max(padding_factor * halfwidth, reach + halfwidth, min_halfwidth)
        m = 1 << int(np.ceil(np.log2(2 * L / grid.h)))
        return cls(box_halfwidth=0.5 * m * grid.h, padding_factor=padding_factor, m=m)

    def validate(self, grid: Grid) -> None:
        h = grid.h
        if abs(self.m * h - 2 * self.box_halfwidth) > 0.5 * h:
            raise AliasingRiskError(
                f"box of {self.m} points at spacing {h:.4g} does not span [-{self.box_halfwidth}, "
                f"{self.box_halfwidth}]")
        if self.box_halfwidth < self.padding_factor * 0.5 * grid.width:
            raise AliasingRiskError(
                f"box halfwidth {self.box_halfwidth:.4g} < {self.padding_factor} x domain halfwidth")
        if grid.x_lo < -self.box_halfwidth or grid.x_hi > self.box_halfwidth:
            raise AliasingRiskError("domain does not fit inside the transform box")

    def box_nodes(self, grid: Grid):
        """Box coordinates and the offset of ``grid`` node 0 inside the box."""
        self.validate(grid)
        h = grid.h
        first = int(np.ceil((-self.box_halfwidth - grid.x_lo) / h - 1 - 1e-9))
        x = grid.x_lo + h * (np.arange(self.m) + first + 1)
        return x, -first


def embed(u: GridFunction, cfg: PeriodizationConfig):
    """Zero-extend ``u`` into the box; returns ``(x_box, values_box, offset)``."""
    x, off = cfg.box_nodes(u.grid)
    vals = np.zeros(cfg.m, dtype=u.values.dtype)
    vals[off:off + u.grid.n] = u.values
    return x, vals, off


def apply_multiplier_box(sym: MultiplierSymbol, values: np.ndarray, h: float) -> np.ndarray:
    """Apply ``sym`` to box samples with spacing ``h``; complex output."""
    xi = 2 * np.pi * np.fft.fftfreq(values.size, d=h)
    with np.errstate(all="ignore"):
        p = np.asarray(sym.evaluate(xi), dtype=complex)
    if not np.all(np.isfinite(p)):
        raise BranchError(f"symbol {sym.name} is not finite on the transform frequencies")
    return np.fft.ifft(p * np.fft.fft(values))


def _realify(out, sym, real_input):
    if real_input and sym.is_hermitian():
        scale = max(np.max(np.abs(out.real)), 1e-300)
        if np.max(np.abs(out.imag)) > 1e-8 * scale:
            raise ValueError("imaginary residue too large for a Hermitian symbol")
        return out.real
    return out


def apply_multiplier(sym: MultiplierSymbol, u: GridFunction,
                     cfg: Optional[PeriodizationConfig] = None) -> GridFunction:
    """Samples of ``F^{-1}(p F(e+ u))`` at the nodes of ``u.grid``."""
    cfg = cfg or PeriodizationConfig.for_grid(u.grid)
    _, vals, off = embed(u, cfg)
    out = apply_multiplier_box(sym, vals, u.grid.h)[off:off + u.grid.n]
    return GridFunction(u.grid, _realify(out, sym, not np.iscomplexobj(u.values)))


def xi_plus_apply_box(t: float, u: GridFunction, cfg: Optional[PeriodizationConfig] = None):
    """``Xi_+^t u`` on the whole transform box; returns ``(x_box, values)``."""
    cfg = cfg or PeriodizationConfig.for_grid(u.grid)
    x, vals, _ = embed(u, cfg)
    out = apply_multiplier_box(xi_symbol(t, +1), vals, u.grid.h)
    if not np.iscomplexobj(u.values):
        out = out.real
    return x, out


def xi_plus_apply(t: float, u: GridFunction, cfg: Optional[PeriodizationConfig] = None) -> GridFunction:
    """Order reducer ``Xi_+^t`` restricted back to the grid of ``u``."""
    if u.grid.x_lo < 0:
        raise ValueError("xi_plus_apply expects a half-line grid with x_lo >= 0")
    cfg = cfg or PeriodizationConfig.for_grid(u.grid)
    _, vals, off = embed(u, cfg)
    out = apply_multiplier_box(xi_symbol(t, +1), vals, u.grid.h)[off:off + u.grid.n]
    if not np.iscomplexobj(u.values):
        out = out.real
    return GridFunction(u.grid, out)
