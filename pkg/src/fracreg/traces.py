"""Weighted boundary traces, model Poisson operators and the trace matrix.

With ``d`` the distance to an endpoint, the weighted traces are

    gamma_j^mu u = Gamma(mu + 1 + j) * (d/dd)^j (u / d^mu) at d = 0,

and the model Poisson operators are ``K_(j) phi = phi d^j e^{-d} / j!`` and
``K^mu_(j) phi = d^mu K_(j) phi / Gamma(mu + 1 + j)``.  Traces are estimated
by windowed least squares of ``u / d^mu`` in powers of ``d``; the window is
halved once and the shift in each coefficient is folded into its stderr.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .errors import IllConditionedFitError, WindowTooNarrowError
from .grid1d import Endpoint, Grid, GridFunction

MAX_TRACES = 6
GRAM_CONDITION_LIMIT = 1e10


@dataclass(frozen=True)
class FitWindow:
    """Distances ``[m_lo * h, d_max]`` from the endpoint used in a fit.

    ``d_max`` defaults to a fifth of the domain width.
    """

    m_lo: float = 4.0
    d_max: Optional[float] = None

    def bounds(self, grid: Grid):
        d_max = 0.2 * grid.width if self.d_max is None else self.d_max
        return self.m_lo * grid.h, d_max

    def halved(self, grid: Grid) -> "FitWindow":
        lo, hi = self.bounds(grid)
        return FitWindow(self.m_lo, 0.5 * hi)


@dataclass(frozen=True)
class PowerFit:
    exponents: tuple
    coefficients: np.ndarray
    stderr: np.ndarray
    stat_stderr: np.ndarray
    residual_rms: float
    relative_residual: float
    d_min: float
    d_max: float
    points: int


def _weighted_lstsq(X, y, weights):
    """Weighted least squares; returns coefficients, covariance, residual."""
    sw = np.sqrt(weights)
    Xw = X * sw[:, None]
    gram = Xw.T @ Xw
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > GRAM_CONDITION_LIMIT:
        raise IllConditionedFitError(f"Gram matrix condition {cond:.3g} exceeds {GRAM_CONDITION_LIMIT:g}")
    coef, *_ = np.linalg.lstsq(Xw, y * sw, rcond=None)
    resid = y - X @ coef
    dof = max(len(y) - X.shape[1], 1)
    sigma2 = np.sum(weights * resid ** 2) / dof
    cov = sigma2 * np.linalg.inv(gram)
    return coef, cov, resid


def _power_fit_once(d, y, exponents, weight_power):
    scale = d.max()
    X = np.stack([(d / scale) ** e for e in exponents], axis=1)
    coef, cov, resid = _weighted_lstsq(X, y, d ** weight_power)
    unscale = scale ** -np.asarray(exponents, dtype=float)
    stat = np.sqrt(np.maximum(np.diag(cov), 0.0)) * unscale
    return coef * unscale, stat, resid


def window_samples(u: GridFunction, endpoint: Endpoint, window: FitWindow):
    grid = u.grid
    d = grid.one_sided_distance(endpoint)
    lo, hi = window.bounds(grid)
    mask = (d >= lo * (1 - 1e-12)) & (d <= hi * (1 + 1e-12))
    return d[mask], u.values[mask]


def fit_powers(u: GridFunction, mu: float, exponents: Sequence[float], endpoint: Endpoint,
               window: Optional[FitWindow] = None, weight_power: float = 1.0,
               estimate_bias: bool = True) -> PowerFit:
    """Least-squares fit of ``u / d^mu`` against ``d^e`` for ``e`` in ``exponents``.

    Weights are ``d^weight_power``.  With ``estimate_bias`` the fit is repeated
    on the half window and the coefficient shift is added to the stderr in
    quadrature.
    """
    window = window or FitWindow()
    exponents = tuple(float(e) for e in exponents)
    return _windowed_fit(u, mu, endpoint, window, len(exponents), estimate_bias,
                         lambda d, y: _power_fit_once(d, y, exponents, weight_power),
                         exponents)


def _windowed_fit(u, mu, endpoint, window, nterms, estimate_bias, fit_once, exponents):
    d, vals = window_samples(u, endpoint, window)
    need = 3 * nterms
    if d.size < need:
        raise WindowTooNarrowError(f"window holds {d.size} points, need {need}")
    y = np.real(vals) / d ** mu
    coef, stat, resid = fit_once(d, y)
    err = stat
    if estimate_bias:
        dh, vh = window_samples(u, endpoint, window.halved(u.grid))
        if dh.size >= need:
            ch, _, _ = fit_once(dh, np.real(vh) / dh ** mu)
            err = np.sqrt(stat ** 2 + (coef - ch) ** 2)
    rms = float(np.sqrt(np.mean(resid ** 2)))
    yscale = float(np.sqrt(np.mean(y ** 2)))
    return PowerFit(exponents=tuple(exponents), coefficients=coef, stderr=err, stat_stderr=stat,
                    residual_rms=rms, relative_residual=rms / yscale if yscale > 0 else 0.0,
                    d_min=float(d.min()), d_max=float(d.max()), points=int(d.size))


@dataclass(frozen=True)
class TraceVector:
    mu: float
    M: int
    endpoint: Endpoint
    values: np.ndarray
    stderr: np.ndarray
    weighted: bool = True
    extra_degree: Optional[int] = None

    def __post_init__(self):
        if len(self.values) != self.M or len(self.stderr) != self.M:
            raise ValueError("trace vector length must equal M")
        if np.any(np.asarray(self.stderr) < 0):
            raise ValueError("stderr must be nonnegative")

    def consistent_with_zero(self, k: float = 3.0) -> np.ndarray:
        return np.abs(self.values) <= k * self.stderr


def _chebyshev_fit_once(d, y, degree, sigma):
    # Chebyshev columns on [0, d_max] keep the Gram matrix well conditioned;
    # the monomial coefficients at d = 0 follow by an exact linear map.
    dmax = d.max()
    cols = [np.polynomial.Chebyshev.basis(k, domain=[0.0, dmax])(d) for k in range(degree + 1)]
    if sigma is not None:
        cols.append((d / dmax) ** sigma)
    X = np.stack(cols, axis=1)
    coef, cov, resid = _weighted_lstsq(X, y, d)
    J = np.zeros((degree + 1, X.shape[1]))
    for k in range(degree + 1):
        mono = np.polynomial.Chebyshev.basis(k, domain=[0.0, dmax]).convert(
            kind=np.polynomial.Polynomial).coef
        J[:mono.size, k] = mono
    mono_coef = J @ coef
    stat = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", J, cov, J), 0.0))
    return mono_coef, stat, resid


AUTO_EXTRA_DEGREES = range(2, 9)


def _trace_fit_fixed(u, mu, M, endpoint, window, sigma, extra_degree):
    degree = M - 1 + extra_degree
    if sigma is not None and any(abs(sigma - e) < 0.05 for e in range(degree + 1)):
        sigma = None
    nterms = degree + 1 + (sigma is not None)
    return _windowed_fit(u, mu, endpoint, window, nterms, True,
                         lambda d, y: _chebyshev_fit_once(d, y, degree, sigma),
                         [float(j) for j in range(degree + 1)])


def _trace_fit(u, mu, M, endpoint, window, sigma, extra_degree, norm):
    if not 1 <= M <= MAX_TRACES:
        raise ValueError(f"M must lie in 1..{MAX_TRACES}")
    window = window or FitWindow()
    if extra_degree is not None:
        return _trace_fit_fixed(u, mu, M, endpoint, window, sigma, extra_degree)
    best, best_err, last_exc = None, np.inf, None
    for extra in AUTO_EXTRA_DEGREES:
        try:
            fit = _trace_fit_fixed(u, mu, M, endpoint, window, sigma, extra)
        except (IllConditionedFitError, WindowTooNarrowError) as exc:
            last_exc = exc
            continue
        err = float(np.sum(fit.stderr[:M] * norm))
        if err < best_err:
            best, best_err = fit, err
    if best is None:
        raise last_exc
    return best


def extract_traces(u: GridFunction, mu: float, M: int, endpoint: Endpoint,
                   window: Optional[FitWindow] = None, sigma: Optional[float] = None,
                   extra_degree: Optional[int] = None) -> TraceVector:
    """Estimate ``gamma_0^mu u, ..., gamma_{M-1}^mu u`` at one endpoint.

    The polynomial part of the fit runs to degree ``M - 1 + extra_degree`` so
    that non-polynomial ``u / d^mu`` does not bias the reported orders;
    ``sigma`` adds a ``d^sigma`` nuisance column.  With ``extra_degree=None``
    the degree minimizing the summed trace stderr is used.
    """
    j = np.arange(M)
    norm = special.gamma(mu + 1 + j) * special.factorial(j)
    fit = _trace_fit(u, mu, M, endpoint, window, sigma, extra_degree, norm)
    return TraceVector(mu=mu, M=M, endpoint=endpoint, values=fit.coefficients[:M] * norm,
                       stderr=fit.stderr[:M] * norm, extra_degree=len(fit.exponents) - M)


def extract_normal_derivatives(u: GridFunction, M: int, endpoint: Endpoint,
                               window: Optional[FitWindow] = None,
                               extra_degree: Optional[int] = None) -> TraceVector:
    """Unweighted traces ``gamma_j u = (d/dd)^j u`` at the endpoint."""
    norm = special.factorial(np.arange(M))
    fit = _trace_fit(u, 0.0, M, endpoint, window, None, extra_degree, norm)
    return TraceVector(mu=0.0, M=M, endpoint=endpoint, values=fit.coefficients[:M] * norm,
                       stderr=fit.stderr[:M] * norm, weighted=False,
                       extra_degree=len(fit.exponents) - M)


# --- Poisson operators ---------------------------------------------------------------

def boundary_cutoff(grid: Grid, endpoint: Endpoint) -> np.ndarray:
    """Smooth cutoff: 1 within a third of the width of ``endpoint``, 0 beyond two thirds."""
    s = grid.one_sided_distance(endpoint) / grid.width
    t = np.clip(3 * s - 1, 0.0, 1.0)

    def psi(z):
        out = np.zeros_like(z)
        pos = z > 0
        out[pos] = np.exp(-1.0 / z[pos])
        return out

    return psi(1 - t) / (psi(1 - t) + psi(t))


def poisson_Kj_mu(grid: Grid, mu: float, j: int, phi: float, endpoint: Endpoint,
                  cutoff: bool = False) -> GridFunction:
    """``phi d^{mu+j} e^{-d} / (Gamma(mu+1+j) j!)`` toward ``endpoint``."""
    if mu <= -1:
        raise ValueError("mu must exceed -1")
    if j < 0 or j > MAX_TRACES:
        raise ValueError(f"j must lie in 0..{MAX_TRACES}")
    d = grid.one_sided_distance(endpoint)
    vals = phi * d ** (mu + j) * np.exp(-d) / (special.gamma(mu + 1 + j) * math.factorial(j))
    if cutoff:
        vals = vals * boundary_cutoff(grid, endpoint)
    return GridFunction(grid, vals)


def poisson_Kj(grid: Grid, j: int, phi: float, endpoint: Endpoint,
               cutoff: bool = False) -> GridFunction:
    d = grid.one_sided_distance(endpoint)
    if j < 0 or j > MAX_TRACES:
        raise ValueError(f"j must lie in 0..{MAX_TRACES}")
    vals = phi * d ** j * np.exp(-d) / math.factorial(j)
    if cutoff:
        vals = vals * boundary_cutoff(grid, endpoint)
    return GridFunction(grid, vals)


def poisson_K0(grid: Grid, phi: float, endpoint: Endpoint, cutoff: bool = False) -> GridFunction:
    return poisson_Kj(grid, 0, phi, endpoint, cutoff)


# --- trace matrices ------------------------------------------------------------------

@dataclass(frozen=True)
class TraceMatrix:
    M: int
    psi: np.ndarray
    mu: Optional[float] = None

    def __post_init__(self):
        psi = np.array(self.psi, dtype=float)
        if psi.shape != (self.M, self.M):
            raise ValueError("psi must be M x M")
        if not np.allclose(np.triu(psi), np.eye(self.M), rtol=0, atol=1e-14):
            raise ValueError("trace matrix must be unit lower triangular")
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)

    def inverse(self) -> np.ndarray:
        from scipy.linalg import solve_triangular
        return solve_triangular(self.psi, np.eye(self.M), lower=True, unit_diagonal=True)


def trace_matrix(M: int, mu: Optional[float] = None) -> TraceMatrix:
    """Matrix of traces of the Poisson family.

    Without ``mu`` this is ``gamma_j K_(k) = (-1)^{j-k} C(j, k)``.  With ``mu``
    it is ``gamma_j^mu K^mu_(k)``, which carries the extra factor
    ``Gamma(mu+1+j) / Gamma(mu+1+k)`` below the diagonal.
    """
    if not 1 <= M <= MAX_TRACES:
        raise ValueError(f"M must lie in 1..{MAX_TRACES}")
    psi = np.zeros((M, M))
    for j in range(M):
        for k in range(j + 1):
            psi[j, k] = (-1) ** (j - k) * math.comb(j, k)
            if mu is not None:
                psi[j, k] *= math.exp(special.gammaln(mu + 1 + j) - special.gammaln(mu + 1 + k))
    return TraceMatrix(M=M, psi=psi, mu=mu)


# --- decomposition -------------------------------------------------------------------

@dataclass(frozen=True)
class Decomposition:
    u: GridFunction
    mu: float
    M: int
    singular_part: GridFunction
    remainder: GridFunction
    traces: dict = field(default_factory=dict)
    coefficients: dict = field(default_factory=dict)


def decompose(u: GridFunction, mu: float, M: int, sigma_hint: Optional[float] = None,
              window: Optional[FitWindow] = None,
              extra_degree: Optional[int] = None) -> Decomposition:
    """Split ``u`` into a Poisson part carrying its first ``M`` traces and a remainder.

    Per endpoint: ``phi`` are the extracted traces, ``psi = Psi^{-1} phi`` and
    the singular part is ``sum_j K^mu_(j) psi_j`` localized by a smooth
    cutoff so that each endpoint's piece vanishes near the other endpoint.
    """
    grid = u.grid
    psi_inv = trace_matrix(M, mu).inverse()
    singular = np.zeros(grid.n)
    traces, coeffs = {}, {}
    for ep in (Endpoint.LEFT, Endpoint.RIGHT):
        tv = extract_traces(u, mu, M, ep, window, sigma_hint, extra_degree)
        psi = psi_inv @ tv.values
        for j in range(M):
            singular += poisson_Kj_mu(grid, mu, j, psi[j], ep, cutoff=True).values
        traces[ep] = tv
        coeffs[ep] = psi
    sing = GridFunction(grid, singular)
    return Decomposition(u=u, mu=mu, M=M, singular_part=sing,
                         remainder=GridFunction(grid, np.real(u.values) - singular),
                         traces=traces, coefficients=coeffs)
