"""Fractional Laplacian on an interval: solvers, boundary traces and regularity probes."""

__version__ = "0.1.0"

from .errors import FracregError
from .grid1d import Endpoint, Grid, GridFunction, make_grid, sample_closed_form
from .fraclap import assemble, calibrate_constant, closed_form_constant, getoor_constant
from .solvers import (ProblemSpec, Solution, TimeGrid, TimeStepping, solve, solve_dirichlet,
                      solve_heat, solve_resolvent, solve_schrodinger)
from .traces import decompose, extract_traces, poisson_K0, poisson_Kj, poisson_Kj_mu, trace_matrix
from .probe import (estimate_holder_exponent, fit_boundary_expansion, higher_trace_verdict,
                    limited_regularity_verdict)
from .formula import parse_formula
