"""Dirichlet fractional Laplacian on an interval.

The stiffness matrix discretizes the singular integral

    (-Delta)^a u(x) = c_{1,a} int_0^inf (2u(x) - u(x+y) - u(x-y)) y^{-1-2a} dy

for ``u`` interpolated piecewise linearly between the nodes (zero at and
beyond the endpoints).  The cell ``|y| < h`` uses the second difference, the
hat functions are integrated exactly against the kernel, and the exterior
contributes through the exact tail ``2 u(x) int_h^inf y^{-1-2a} dy``.  The
result is a symmetric Toeplitz M-matrix.

Linear interpolation of the ``d^a`` boundary profile costs an O(h^a)
consistency error in the first cells.  A diagonal boundary correction removes
it: each endpoint contributes the amount that makes the half-line scheme
annihilate ``x_+^a`` exactly, as the continuous operator does.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, special
from scipy.linalg import toeplitz
from scipy.signal import fftconvolve

from .errors import (CalibrationError, QuadratureNonconvergenceError,
                     SingularQuadratureError)
from .grid1d import Grid

# offsets beyond which the exact hat moments switch to their Taylor series
_SERIES_FROM = 8
_SERIES_TERMS = 8
# truncation of the half-line correction sums; remainder handled analytically
_TAIL_OFFSET = 2 ** 20


def closed_form_constant(a: float) -> float:
    """``c_{1,a} = 4^a Gamma(1/2 + a) / (sqrt(pi) |Gamma(-a)|)``."""
    _check_order(a)
    return 4.0 ** a * special.gamma(0.5 + a) / (math.sqrt(math.pi) * abs(special.gamma(-a)))


def getoor_constant(a: float) -> float:
    """``B_a`` with ``(-Delta)^a (1 - x^2)_+^a = B_a`` on ``(-1, 1)``."""
    return 4.0 ** a * special.gamma(a + 1) * special.gamma(a + 0.5) / special.gamma(0.5)


def _check_order(a):
    if not 0 < a < 1:
        raise ValueError(f"half-order a must lie in (0, 1), got {a}")


@dataclass(frozen=True)
class NormalizationConstant:
    a: float
    value: float
    probe_widths: tuple = ()
    relative_spread: float = 0.0

    def __float__(self):
        return float(self.value)


def _gaussian_multiplier_at_zero(a, width):
    # (1/pi) int_0^inf xi^{2a} * width sqrt(pi) exp(-width^2 xi^2 / 4) dxi
    val, err = integrate.quad(lambda xi: xi ** (2 * a) * np.exp(-0.25 * (width * xi) ** 2),
                              0, np.inf, epsabs=0, epsrel=1e-13, limit=200)
    return width * math.sqrt(math.pi) * val / math.pi


def _gaussian_kernel_integral_at_zero(a, width):
    # int_0^inf (2 - 2 exp(-y^2/width^2)) y^{-1-2a} dy, without normalization
    f = lambda y: -2.0 * np.expm1(-(y / width) ** 2) * y ** (-1 - 2 * a)
    lo, _ = integrate.quad(f, 0, width, epsabs=0, epsrel=1e-13, limit=200)
    hi, _ = integrate.quad(f, width, np.inf, epsabs=0, epsrel=1e-13, limit=200)
    return lo + hi


def check_constant(a: float, c: float, widths: Sequence[float] = (1.0, 2.0),
                   rtol: float = 1e-6) -> float:
    """Check that ``c`` reconciles multiplier and singular-integral forms.

    Both forms are evaluated on Gaussian probes at the origin.  Returns the
    worst relative mismatch; raises :class:`CalibrationError` above ``rtol``.
    """
    worst = 0.0
    for w in widths:
        mult = _gaussian_multiplier_at_zero(a, w)
        sing = c * _gaussian_kernel_integral_at_zero(a, w)
        worst = max(worst, abs(sing - mult) / abs(mult))
    if worst > rtol:
        raise CalibrationError(
            f"c={c:.10g} leaves the two definitions {worst:.3g} apart (a={a})")
    return worst


def calibrate_constant(a: float, widths: Sequence[float] = (1.0, 2.0),
                       rtol: float = 1e-6) -> NormalizationConstant:
    """Fit ``c_{1,a}`` from Gaussian probes and cross-check the closed form."""
    _check_order(a)
    ratios = [_gaussian_multiplier_at_zero(a, w) / _gaussian_kernel_integral_at_zero(a, w)
              for w in widths]
    c = float(np.mean(ratios))
    spread = (max(ratios) - min(ratios)) / abs(c)
    if spread > rtol:
        raise CalibrationError(f"probe widths disagree by {spread:.3g} for a={a}")
    exact = closed_form_constant(a)
    if abs(c - exact) > rtol * exact:
        raise CalibrationError(f"calibrated {c:.12g} vs closed form {exact:.12g} (a={a})")
    return NormalizationConstant(a=a, value=c, probe_widths=tuple(widths), relative_spread=spread)


# --- hat-function moments of the kernel ------------------------------------------

def _prim_s(s, a):
    # antiderivative of s^{-2a}
    if abs(1 - 2 * a) < 1e-10:
        return np.log(s)
    return s ** (1 - 2 * a) / (1 - 2 * a)


def _prim_k(s, a):
    # antiderivative of s^{-1-2a}
    return -s ** (-2 * a) / (2 * a)


def hat_moments(a: float, count: int) -> np.ndarray:
    """``w[k] = int hat_k(s) s^{-1-2a} ds`` on unit spacing, restricted to ``s >= 1``.

    ``w[0]`` is unused (set to 0); ``w[1]`` covers only the right half of its hat.
    """
    k = np.arange(count, dtype=float)
    w = np.zeros(count)
    small = k[1:min(count, _SERIES_FROM)]
    if small.size:
        right = ((small + 1) * (_prim_k(small + 1, a) - _prim_k(small, a))
                 - (_prim_s(small + 1, a) - _prim_s(small, a)))
        km1 = np.maximum(small - 1, 1.0)
        left = np.where(small > 1,
                        (_prim_s(small, a) - _prim_s(km1, a))
                        - (small - 1) * (_prim_k(small, a) - _prim_k(km1, a)), 0.0)
        w[1:1 + small.size] = left + right
    if count > _SERIES_FROM:
        w[_SERIES_FROM:] = _hat_moment_series(k[_SERIES_FROM:], a)
    return w


def _hat_moment_series(k, a):
    # int_{-1}^{1} (1-|t|) (k+t)^{-p} dt expanded in 1/k
    p = 1 + 2 * a
    total = np.zeros_like(k)
    inv2 = k ** -2.0
    term = np.ones_like(k)
    for j in range(_SERIES_TERMS):
        m = 2 * j
        total += special.poch(p, m) / math.factorial(m) * 2.0 / ((m + 1) * (m + 2)) * term
        term = term * inv2
    return k ** -p * total


def stencil(a: float, count: int) -> np.ndarray:
    """First column of the unit-spacing, unnormalized Toeplitz stiffness."""
    if 2 * a >= 2:
        raise SingularQuadratureError("second-difference excision needs 2a < 2")
    col = -hat_moments(a, count)
    col[0] = 1.0 / a + 2.0 / (2 - 2 * a)
    if count > 1:
        col[1] -= 1.0 / (2 - 2 * a)
    return col


@functools.lru_cache(maxsize=32)
def _boundary_correction_cached(a: float, count: int) -> np.ndarray:
    t = stencil(a, _TAIL_OFFSET + 1)
    t0, tk = t[0], t[1:]
    j = np.arange(1, count + 1, dtype=float)
    f = np.arange(0, _TAIL_OFFSET + count + 2, dtype=float) ** a
    # sum_{k=1}^{K} t_k (j+k)^a
    right = fftconvolve(f[2:2 + _TAIL_OFFSET + count - 1], tk[::-1], mode="valid")[:count]
    # sum_{k=1}^{j-1} t_k (j-k)^a, short enough to do exactly
    tt = np.concatenate(([0.0], tk[:count]))
    left = np.convolve(tt, f[:count + 1])[1:count + 1]
    # sum_{k>K} t_k (j+k)^a ~ -int_{K+1/2}^inf y^{-1-2a} (y+j)^a dy
    kp = _TAIL_OFFSET + 0.5
    tail = np.zeros(count)
    for m in range(12):
        tail -= special.binom(a, m) * j ** m * kp ** (-a - m) / (a + m)
    rho = t0 * j ** a + right + left + tail
    out = rho / j ** a
    out.setflags(write=False)
    return out


def boundary_correction(a: float, count: int) -> np.ndarray:
    """Per-node diagonal shift (unit spacing, unnormalized) for one endpoint.

    Entry ``j-1`` is the residual of the half-line scheme applied to ``x^a`` at
    node ``j`` divided by ``j^a``; subtracting it makes ``x_+^a`` an exact
    discrete null vector.
    """
    size = 1 << max(6, int(np.ceil(np.log2(count))))
    return _boundary_correction_cached(float(a), size)[:count]


@dataclass(frozen=True)
class FracLapMatrix:
    a: float
    grid: Grid
    entries: np.ndarray
    normalization: float
    corrected: bool = True

    def __matmul__(self, u):
        return self.entries @ u

    @property
    def n(self):
        return self.grid.n

    def exterior_tail(self) -> np.ndarray:
        """Analytic ``c int_{outside} |x_j - y|^{-1-2a} dy`` at every node."""
        g = self.grid
        x = g.nodes
        return self.normalization * ((x - g.x_lo) ** (-2 * self.a)
                                     + (g.x_hi - x) ** (-2 * self.a)) / (2 * self.a)


def assemble(a: float, grid: Grid, corrected: bool = True) -> FracLapMatrix:
    """Dense stiffness matrix of ``r+ (-Delta)^a e+`` on ``grid``."""
    _check_order(a)
    n, h = grid.n, grid.h
    c = closed_form_constant(a)
    scale = c * h ** (-2 * a)
    A = toeplitz(stencil(a, n)) * scale
    if corrected:
        r = boundary_correction(a, n)
        A[np.diag_indices(n)] -= scale * (r + r[::-1])
    A.setflags(write=False)
    return FracLapMatrix(a=a, grid=grid, entries=A, normalization=c, corrected=corrected)


def apply_quadrature_oracle(a: float, u_formula: Callable[[float], float], x: float,
                            support: tuple = (-np.inf, np.inf), c: Optional[float] = None,
                            excision: Optional[float] = None, tol: float = 1e-11) -> float:
    """Adaptive quadrature of the principal-value integral at a single point.

    ``u_formula`` must vanish outside ``support``; kinks of ``u`` at the
    support endpoints are used as breakpoints.  The symmetric cell
    ``|y| < excision`` is replaced by ``-u''(x) excision^{2-2a} / (2-2a)`` with
    ``u''`` from a five-point difference with its own, wider step.
    """
    _check_order(a)
    c = closed_form_constant(a) if c is None else c
    lo, hi = support
    if not lo < x < hi:
        raise ValueError("oracle point must lie inside the support")
    gap = min(x - lo, hi - x)
    eps = excision if excision is not None else min(1e-4, 1e-2 * gap)
    ux = float(u_formula(x))
    e = min(1e-3, 0.1 * gap)
    d2 = (-u_formula(x + 2 * e) + 16 * u_formula(x + e) - 30 * ux
          + 16 * u_formula(x - e) - u_formula(x - 2 * e)) / (12 * e * e)
    near = -d2 * eps ** (2 - 2 * a) / (2 - 2 * a)

    def integrand(y):
        return (2 * ux - u_formula(x + y) - u_formula(x - y)) * y ** (-1 - 2 * a)

    breaks = sorted({b for b in (x - lo, hi - x) if np.isfinite(b) and b > eps})
    edges = [eps] + breaks
    total = near
    for left, right in zip(edges[:-1], edges[1:]):
        total += _quad(integrand, left, right, tol)
    far = edges[-1]
    if np.isfinite(lo) and np.isfinite(hi):
        # both shifted copies vanish past the last breakpoint
        total += 2 * ux * far ** (-2 * a) / (2 * a)
    else:
        total += _quad(integrand, far, np.inf, tol)
    return c * total


def _quad(f, lo, hi, tol):
    val, err = integrate.quad(f, lo, hi, epsabs=tol, epsrel=tol, limit=400)
    if not np.isfinite(val) or err > max(1e3 * tol, 1e-8 * abs(val)):
        raise QuadratureNonconvergenceError(f"quad on [{lo}, {hi}] reported error {err:.3g}")
    return val
