"""Boundary regularity diagnostics.

The central measurement is the expansion ``u / d^a ~ sum_s c_s d^s`` near each
endpoint.  A smooth quotient carries no ``d^{2a}`` term; resolvent,
Schrodinger and heat solutions with nonzero ``gamma_0^a u`` do.  Verdicts
compare ``c_2a`` against a Dirichlet control on the same grid so that
discretization artefacts cancel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import (ExponentCollisionError, IncompatibleGridsError, InsufficientScalesError,
                     FitError)
from .grid1d import Endpoint, GridFunction
from .solvers import Solution
from .traces import FitWindow, TraceVector, extract_traces, fit_powers

MIN_SEPARATION = 0.05
MISFIT_THRESHOLD = 1e-3
ZERO_SIGMAS = 3.0
VERDICT_RATIO = 10.0
VERDICT_SIGMAS = 10.0
# candidate outer window edges, as fractions of the domain width
ADAPTIVE_WINDOW_FRACTIONS = (0.05, 0.075, 0.1, 0.15, 0.2)
ENDPOINTS = (Endpoint.LEFT, Endpoint.RIGHT)


@dataclass(frozen=True)
class BoundaryExpansion:
    endpoint: Endpoint
    mu: float
    exponent_basis: Tuple[float, ...]
    coefficients: np.ndarray
    stderr: np.ndarray
    residual_rms: float
    relative_residual: float
    window: Tuple[float, float]
    misfit: bool

    def __post_init__(self):
        if len(self.coefficients) != len(self.exponent_basis):
            raise ValueError("one coefficient per exponent")
        if self.residual_rms < 0:
            raise ValueError("residual_rms must be nonnegative")

    def coefficient(self, exponent: float) -> Tuple[float, float]:
        """``(value, stderr)`` of the coefficient of ``d^exponent``."""
        i = int(np.argmin(np.abs(np.asarray(self.exponent_basis) - exponent)))
        if abs(self.exponent_basis[i] - exponent) > 1e-12:
            raise KeyError(f"exponent {exponent} not in basis")
        return float(self.coefficients[i]), float(self.stderr[i])


def check_basis(exponent_basis: Sequence[float]) -> Tuple[float, ...]:
    basis = tuple(sorted(float(e) for e in exponent_basis))
    if not basis:
        raise ExponentCollisionError("empty exponent basis")
    gaps = np.diff(basis)
    if np.any(gaps < MIN_SEPARATION):
        i = int(np.argmin(gaps))
        raise ExponentCollisionError(
            f"exponents {basis[i]:g} and {basis[i + 1]:g} are closer than {MIN_SEPARATION}")
    return basis


def fit_boundary_expansion(u: GridFunction, mu: float, exponent_basis: Sequence[float],
                           endpoint: Endpoint, window: Optional[FitWindow] = None,
                           misfit_threshold: float = MISFIT_THRESHOLD) -> BoundaryExpansion:
    """Weighted (``w = d``) least squares of ``u / d^mu`` against ``d^s``, ``s`` in the basis.

    ``misfit`` is set when the rms residual exceeds ``misfit_threshold``
    relative to the rms of ``u / d^mu`` on the window.
    """
    basis = check_basis(exponent_basis)
    fit = fit_powers(u, mu, basis, endpoint, window)
    return BoundaryExpansion(endpoint=endpoint, mu=mu, exponent_basis=basis,
                             coefficients=fit.coefficients, stderr=fit.stderr,
                             residual_rms=fit.residual_rms, relative_residual=fit.relative_residual,
                             window=(fit.d_min, fit.d_max),
                             misfit=fit.relative_residual > misfit_threshold)


def verdict_basis(a: float) -> Tuple[float, ...]:
    """``{0, 1, 2, 2a}``; raises when ``2a`` collides with an integer."""
    two_a = 2 * a
    if any(abs(two_a - k) < MIN_SEPARATION for k in range(3)):
        raise ExponentCollisionError(f"2a = {two_a:g} collides with the smooth basis")
    return check_basis((0.0, 1.0, 2.0, two_a))


def adaptive_expansion(u: GridFunction, mu: float, exponent_basis: Sequence[float],
                       endpoint: Endpoint, target: float,
                       fractions: Sequence[float] = ADAPTIVE_WINDOW_FRACTIONS) -> BoundaryExpansion:
    """Expansion whose outer window edge minimizes the stderr of the ``target`` coefficient."""
    best, last_exc = None, None
    for frac in fractions:
        win = FitWindow(d_max=frac * u.grid.width)
        try:
            exp = fit_boundary_expansion(u, mu, exponent_basis, endpoint, win)
        except FitError as exc:
            last_exc = exc
            continue
        if best is None or exp.coefficient(target)[1] < best.coefficient(target)[1]:
            best = exp
    if best is None:
        raise last_exc
    return best


@dataclass(frozen=True)
class HolderEstimate:
    exponent: float
    r_squared: float
    radii: np.ndarray
    oscillation: np.ndarray

    def __float__(self):
        return self.exponent


def _dyadic_radii(grid, scales):
    lo, hi = 8 * grid.h, grid.width / 8
    k = np.arange(int(np.ceil(-np.log2(hi))), int(np.floor(-np.log2(lo))) + 1)
    radii = 2.0 ** -k.astype(float)
    if scales is not None:
        if radii.size < scales:
            raise InsufficientScalesError(f"only {radii.size} dyadic scales fit, {scales} requested")
        radii = radii[-scales:] if scales else radii
    if radii.size < 4:
        raise InsufficientScalesError(f"only {radii.size} dyadic scales between 8h and width/8")
    return radii


def _loglog_slope(r, y):
    lr, ly = np.log(r), np.log(y)
    slope, icpt = np.polyfit(lr, ly, 1)
    ss_res = np.sum((ly - (slope * lr + icpt)) ** 2)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    return float(slope), float(1 - ss_res / ss_tot) if ss_tot > 0 else 1.0


def estimate_holder_exponent(u: GridFunction, x0: float, scales: Optional[int] = None) -> HolderEstimate:
    """Slope of ``log osc_r`` against ``log r`` at ``x0``, clipped to ``[0, 1]``.

    ``osc_r = sup_{|y - x0| <= r} |u(y) - u(x0)|`` over the nodes and the
    endpoints, with ``r = 2^-k`` between ``8h`` and an eighth of the width.
    ``scales`` keeps only the finest that many radii.
    """
    g = u.grid
    if not g.x_lo <= x0 <= g.x_hi:
        raise ValueError(f"x0 = {x0} lies outside the grid")
    radii = _dyadic_radii(g, scales)
    y = np.concatenate(([g.x_lo], g.nodes, [g.x_hi]))
    vals = np.real(u(y))
    u0 = float(np.real(u(np.array([x0]))[0]))
    osc = np.array([np.max(np.abs(vals[np.abs(y - x0) <= r] - u0)) for r in radii])
    if np.any(osc <= 0):
        return HolderEstimate(1.0, 1.0, radii, osc)
    slope, r2 = _loglog_slope(radii, osc)
    return HolderEstimate(float(np.clip(slope, 0.0, 1.0)), r2, radii, osc)


def vanishing_order(u: GridFunction, endpoint: Endpoint, d_range: Optional[Tuple[float, float]] = None):
    """Log-log slope of ``|u|`` against ``d`` near ``endpoint``; returns ``(order, r_squared)``.

    The default range is ``[8h, width / 20]``.
    """
    g = u.grid
    lo, hi = d_range or (8 * g.h, 0.05 * g.width)
    d = g.one_sided_distance(endpoint)
    m = (d >= lo) & (d <= hi)
    y = np.abs(np.real(u.values[m]))
    if m.sum() < 4 or np.any(y <= 0):
        raise InsufficientScalesError("not enough nonzero samples to measure a vanishing order")
    return _loglog_slope(d[m], y)


@dataclass(frozen=True)
class RegularityReport:
    problem: str
    mu: float
    gamma0_a: Dict[Endpoint, Tuple[float, float]]
    c_2a: Dict[Endpoint, Tuple[float, float]]
    holder_exponent_boundary: float
    verdicts: Dict[str, bool]
    control_ratio: Optional[float] = None
    control_c_2a: Dict[Endpoint, Tuple[float, float]] = field(default_factory=dict)
    control_gamma0_a: Dict[Endpoint, Tuple[float, float]] = field(default_factory=dict)
    ratios: Dict[Endpoint, float] = field(default_factory=dict)
    expansions: Dict[Endpoint, BoundaryExpansion] = field(default_factory=dict)
    traces: Dict[Endpoint, TraceVector] = field(default_factory=dict)

    def __post_init__(self):
        if self.control_ratio is not None and not self.control_c_2a:
            raise ValueError("control_ratio requires a control run")
        for table in (self.gamma0_a, self.c_2a, self.control_c_2a, self.control_gamma0_a):
            if any(s < 0 for _, s in table.values()):
                raise ValueError("stderr must be nonnegative")

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())


def describe(sol: Solution) -> str:
    spec = sol.spec
    g = spec.grid
    return f"{spec.kind.value} a={spec.a:g} n={g.n} domain=({g.x_lo:g},{g.x_hi:g})"


def _measure(u: GridFunction, mu: float):
    basis = verdict_basis(mu)
    exps, c2a, g0 = {}, {}, {}
    gam = math.gamma(mu + 1)
    for ep in ENDPOINTS:
        exp = adaptive_expansion(u, mu, basis, ep, 2 * mu)
        exps[ep] = exp
        c2a[ep] = exp.coefficient(2 * mu)
        c0, s0 = exp.coefficient(0.0)
        g0[ep] = (gam * c0, gam * s0)
    return exps, c2a, g0


def limited_regularity_verdict(test: Solution, control: Solution, mu: float) -> RegularityReport:
    """Compare the ``d^{2a}`` coefficient of ``test / d^a`` against a smooth control.

    ``limited-regularity-exhibited`` passes when at both endpoints
    ``|c_2a(test)| > 10 |c_2a(control)|`` and ``|gamma_0^a test| > 10 stderr``;
    ``control-smooth`` passes when ``|c_2a(control)| <= 3 stderr`` at both.
    """
    if not test.spec.grid.same_as(control.spec.grid):
        raise IncompatibleGridsError("test and control must share one grid")
    if test.spec.a != control.spec.a:
        raise IncompatibleGridsError("test and control must share the order a")
    exps, c2a, g0 = _measure(test.u, mu)
    _, c2a_ctl, g0_ctl = _measure(control.u, mu)
    ratios = {ep: abs(c2a[ep][0]) / max(abs(c2a_ctl[ep][0]), 1e-300) for ep in ENDPOINTS}
    exhibited = all(ratios[ep] > VERDICT_RATIO and abs(g0[ep][0]) > VERDICT_SIGMAS * g0[ep][1]
                    for ep in ENDPOINTS)
    smooth = all(abs(c2a_ctl[ep][0]) <= ZERO_SIGMAS * c2a_ctl[ep][1] for ep in ENDPOINTS)
    holder = estimate_holder_exponent(test.u, test.spec.grid.x_hi).exponent
    return RegularityReport(problem=describe(test), mu=mu, gamma0_a=g0, c_2a=c2a,
                            holder_exponent_boundary=holder,
                            verdicts={"limited-regularity-exhibited": exhibited,
                                      "control-smooth": smooth},
                            control_ratio=min(ratios.values()), control_c_2a=c2a_ctl,
                            control_gamma0_a=g0_ctl, ratios=ratios, expansions=exps)


def higher_trace_verdict(test: Solution, mu: float, k: int) -> RegularityReport:
    """Extract ``gamma_0^mu .. gamma_k^mu`` at both endpoints and flag those consistent with zero.

    Vanishing is certified, never smoothness: the verdict
    ``traces-vanish-through-k`` passes only when every extracted trace is
    within three stderr of zero.
    """
    return trace_vanishing_report(test.u, mu, k, describe(test))


def trace_vanishing_report(u: GridFunction, mu: float, k: int, problem: str = "") -> RegularityReport:
    if not 0 <= k <= 3:
        raise ValueError("k must lie in 0..3")
    sigma = 2 * mu
    traces, verdicts, g0 = {}, {}, {}
    for ep in ENDPOINTS:
        tv = extract_traces(u, mu, k + 1, ep, sigma=sigma)
        traces[ep] = tv
        zero = tv.consistent_with_zero(ZERO_SIGMAS)
        for j in range(k + 1):
            verdicts[f"gamma{j}-zero-{ep.value}"] = bool(zero[j])
        g0[ep] = (float(tv.values[0]), float(tv.stderr[0]))
    verdicts["traces-vanish-through-k"] = all(verdicts.values())
    holder = estimate_holder_exponent(u, u.grid.x_hi).exponent
    return RegularityReport(problem=problem, mu=mu, gamma0_a=g0, c_2a={},
                            holder_exponent_boundary=holder, verdicts=verdicts, traces=traces)


def trace_time_series(sol: Solution, mu: float, endpoint: Endpoint = Endpoint.RIGHT):
    """``(times, gamma_0^mu u(t), stderr)`` over the stored heat snapshots (t > 0).

    The fit degree is chosen once on the final snapshot and reused, so the
    series is one fixed linear functional of the snapshots.
    """
    if sol.snapshots is None:
        raise ValueError("trace time series needs a heat solution")
    sigma = None if any(abs(2 * mu - j) < MIN_SEPARATION for j in range(3)) else 2 * mu
    degree = extract_traces(sol.snapshots[-1], mu, 1, endpoint, sigma=sigma).extra_degree
    times, vals, errs = [], [], []
    for t, snap in zip(sol.times, sol.snapshots):
        if t <= 0:
            continue
        tv = extract_traces(snap, mu, 1, endpoint, sigma=sigma, extra_degree=degree)
        times.append(t)
        vals.append(tv.values[0])
        errs.append(tv.stderr[0])
    return np.array(times), np.array(vals), np.array(errs)
