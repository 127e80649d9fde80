"""Direct solvers for the stationary, resolvent, Schrodinger and heat problems.

All four reduce to dense systems built from the assembled stiffness matrix
``A``.  Factorizations report the 1-norm condition number, with the inverse
formed from the factors; systems whose condition exceeds
``NEAR_EIGENVALUE_CONDITION`` are refused as numerically singular.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import linalg

from .errors import NearEigenvalueError, SingularSystemError
from .fraclap import FracLapMatrix, assemble
from .grid1d import Grid, GridFunction

NEAR_EIGENVALUE_CONDITION = 1e12


class TimeStepping(enum.Enum):
    IMPLICIT_EULER = "ImplicitEuler"
    CRANK_NICOLSON = "CrankNicolson"


class ProblemKind(enum.Enum):
    STATIONARY = "stationary"
    RESOLVENT = "resolvent"
    SCHRODINGER = "schrodinger"
    HEAT = "heat"


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    t_end: float
    scheme: TimeStepping = TimeStepping.IMPLICIT_EULER
    save_every: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < self.dt:
            raise ValueError("t_end must be at least dt")
        if self.save_every < 1:
            raise ValueError("save_every must be >= 1")

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))


RhsSampler = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class ProblemSpec:
    """One Dirichlet problem on ``grid``.

    ``rhs`` is a GridFunction, or for heat a sampler ``f(x, t)``.  The kind is
    implied by which of ``lam``, ``potential`` and ``time`` is set.
    """

    a: float
    grid: Grid
    rhs: Union[GridFunction, RhsSampler]
    potential: Optional[GridFunction] = None
    lam: Optional[complex] = None
    time: Optional[TimeGrid] = None
    initial: Optional[GridFunction] = None

    def __post_init__(self):
        if not 0 < self.a < 1:
            raise ValueError(f"a must satisfy 0 < a < 1, got {self.a}")
        set_ = [self.lam is not None, self.potential is not None, self.time is not None]
        if sum(set_) > 1:
            raise ValueError("at most one of lam, potential, time may be given")
        if self.time is None and not isinstance(self.rhs, GridFunction):
            raise ValueError("stationary problems need a GridFunction rhs")
        for g in (self.rhs, self.potential, self.initial):
            if isinstance(g, GridFunction) and not g.grid.same_as(self.grid):
                raise ValueError("all grid functions must live on the problem grid")

    @property
    def kind(self) -> ProblemKind:
        if self.lam is not None:
            return ProblemKind.RESOLVENT
        if self.potential is not None:
            return ProblemKind.SCHRODINGER
        if self.time is not None:
            return ProblemKind.HEAT
        return ProblemKind.STATIONARY

    def rhs_at(self, t: float) -> np.ndarray:
        if isinstance(self.rhs, GridFunction):
            return self.rhs.values
        vals = np.broadcast_to(np.asarray(self.rhs(self.grid.nodes, t)), (self.grid.n,))
        return np.array(vals)


@dataclass(frozen=True)
class SolverReport:
    method: str
    factorization: str
    condition_estimate: float
    steps: int = 0


@dataclass(frozen=True)
class Solution:
    spec: ProblemSpec
    u: GridFunction
    residual_norm: float
    solver_report: SolverReport
    times: Optional[np.ndarray] = None
    snapshots: Optional[Sequence[GridFunction]] = None


@dataclass(frozen=True)
class Factorization:
    """A reusable dense factorization of ``matrix``."""

    matrix: np.ndarray
    kind: str
    factors: tuple
    condition_estimate: float

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self.kind == "cholesky":
            return linalg.cho_solve(self.factors, b)
        return linalg.lu_solve(self.factors, b)


def factorize(matrix: np.ndarray, symmetric_positive: bool = False,
              cond_limit: float = NEAR_EIGENVALUE_CONDITION) -> Factorization:
    if symmetric_positive:
        try:
            factors = linalg.cho_factor(matrix, lower=True, check_finite=False)
        except linalg.LinAlgError:
            symmetric_positive = False
        else:
            return _checked(matrix, "cholesky", factors, cond_limit)
    with np.errstate(all="ignore"):
        getrf = linalg.get_lapack_funcs("getrf", (matrix,))
        lu, piv, info = getrf(matrix)
    if info > 0:
        raise SingularSystemError(f"exactly singular pivot at row {info - 1}")
    return _checked(matrix, "lu", (lu, piv), cond_limit)


def _checked(matrix, kind, factors, cond_limit):
    # xPOCON/xGECON return run-to-run jittered estimates; the exact 1-norm
    # through level-3 solves is reproducible bit for bit
    fac = Factorization(matrix, kind, factors, np.inf)
    with np.errstate(all="ignore"):
        inv_norm = np.abs(fac.solve(np.eye(matrix.shape[0], dtype=matrix.dtype))).sum(axis=0).max()
    cond = float(np.linalg.norm(matrix, 1) * inv_norm)
    if not np.isfinite(cond) or cond > cond_limit:
        raise NearEigenvalueError(f"condition number {cond:.3g} exceeds {cond_limit:g}")
    return Factorization(matrix, kind, factors, cond)


def _residual(matrix, u, b):
    bn = np.max(np.abs(b))
    r = np.max(np.abs(matrix @ u - b))
    return float(r / bn) if bn > 0 else float(r)


def _matrix(spec: ProblemSpec, A: Optional[FracLapMatrix]) -> FracLapMatrix:
    if A is None:
        return assemble(spec.a, spec.grid)
    if A.a != spec.a or not A.grid.same_as(spec.grid):
        raise ValueError("assembled matrix does not match the problem")
    return A


def _direct(spec, matrix, symmetric_positive, method):
    b = spec.rhs.values
    fac = factorize(matrix, symmetric_positive)
    u = fac.solve(b)
    return Solution(spec=spec, u=GridFunction(spec.grid, u), residual_norm=_residual(matrix, u, b),
                    solver_report=SolverReport(method, fac.kind, fac.condition_estimate))


def solve_dirichlet(spec: ProblemSpec, A: Optional[FracLapMatrix] = None) -> Solution:
    """Solve ``A u = g`` with Cholesky."""
    A = _matrix(spec, A)
    return _direct(spec, A.entries, True, "dirichlet")


def solve_resolvent(spec: ProblemSpec, A: Optional[FracLapMatrix] = None) -> Solution:
    """Solve ``(A - lam I) u = g``; ``lam = 0`` reproduces :func:`solve_dirichlet` exactly."""
    lam = complex(spec.lam)
    if lam == 0:
        sol = solve_dirichlet(spec, A)
        return Solution(spec, sol.u, sol.residual_norm,
                        SolverReport("resolvent", sol.solver_report.factorization,
                                     sol.solver_report.condition_estimate))
    A = _matrix(spec, A)
    if lam.imag == 0:
        matrix = A.entries - lam.real * np.eye(A.n)
        # below the spectrum the shifted matrix stays symmetric positive definite
        return _direct(spec, matrix, lam.real < 0, "resolvent")
    matrix = A.entries.astype(complex) - lam * np.eye(A.n)
    b = spec.rhs.values.astype(complex)
    fac = factorize(matrix)
    u = fac.solve(b)
    return Solution(spec, GridFunction(spec.grid, u), _residual(matrix, u, b),
                    SolverReport("resolvent", fac.kind, fac.condition_estimate))


def solve_schrodinger(spec: ProblemSpec, A: Optional[FracLapMatrix] = None) -> Solution:
    """Solve ``(A + diag V) u = f``."""
    A = _matrix(spec, A)
    V = spec.potential.values
    matrix = A.entries + np.diag(V)
    return _direct(spec, matrix, bool(np.all(V >= 0)), "schrodinger")


def solve_heat(spec: ProblemSpec, A: Optional[FracLapMatrix] = None) -> Solution:
    """March ``du/dt + A u = f`` from ``spec.initial`` (zero by default).

    Implicit Euler samples ``f`` at the new time level; Crank-Nicolson uses
    the average of the two levels.  Snapshots are kept every
    ``time.save_every`` steps and at the final time.
    """
    A = _matrix(spec, A)
    tg = spec.time
    n, dt = A.n, tg.dt
    eye = np.eye(n)
    u = np.zeros(n) if spec.initial is None else np.array(spec.initial.values, dtype=float)
    if tg.scheme is TimeStepping.IMPLICIT_EULER:
        lhs, rhs_op = eye + dt * A.entries, None
    else:
        lhs, rhs_op = eye + 0.5 * dt * A.entries, eye - 0.5 * dt * A.entries
    fac = factorize(lhs, True)
    times, snaps = [0.0], [GridFunction(spec.grid, u)]
    steps = tg.steps
    f_old = spec.rhs_at(0.0)
    residual = 0.0
    for m in range(1, steps + 1):
        t = m * dt
        f_new = spec.rhs_at(t)
        if rhs_op is None:
            b = u + dt * f_new
        else:
            b = rhs_op @ u + 0.5 * dt * (f_old + f_new)
        u = fac.solve(b)
        residual = max(residual, _residual(lhs, u, b))
        f_old = f_new
        if m % tg.save_every == 0 or m == steps:
            times.append(t)
            snaps.append(GridFunction(spec.grid, u))
    return Solution(spec=spec, u=snaps[-1], residual_norm=residual,
                    solver_report=SolverReport("heat-" + tg.scheme.value, fac.kind,
                                               fac.condition_estimate, steps),
                    times=np.array(times), snapshots=tuple(snaps))


_DISPATCH = {
    ProblemKind.STATIONARY: solve_dirichlet,
    ProblemKind.RESOLVENT: solve_resolvent,
    ProblemKind.SCHRODINGER: solve_schrodinger,
    ProblemKind.HEAT: solve_heat,
}


def solve(spec: ProblemSpec, A: Optional[FracLapMatrix] = None) -> Solution:
    return _DISPATCH[spec.kind](spec, A)
