import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracreg.errors import ExponentCollisionError, IncompatibleGridsError, InsufficientScalesError
from fracreg.formula import bump
from fracreg.fraclap import assemble
from fracreg.grid1d import Endpoint, GridFunction, make_grid, sample_closed_form
from fracreg.probe import (MISFIT_THRESHOLD, adaptive_expansion, check_basis, estimate_holder_exponent,
                           fit_boundary_expansion, higher_trace_verdict, limited_regularity_verdict,
                           trace_time_series, trace_vanishing_report, vanishing_order, verdict_basis)
from fracreg.solvers import (ProblemSpec, TimeGrid, solve_dirichlet, solve_heat, solve_resolvent,
                             solve_schrodinger)
from fracreg.traces import FitWindow

LEFT, RIGHT = Endpoint.LEFT, Endpoint.RIGHT


def const(g, c):
    return GridFunction(g, np.full(g.n, float(c)))


def synthetic(a, n=1024):
    g = make_grid(0.0, 1.0, n)
    d = g.nodes
    return GridFunction(g, d ** a * (2 + 3 * d ** (2 * a)))


@pytest.fixture(scope="module")
def runs03():
    a = 0.3
    g = make_grid(-1.0, 1.0, 1024)
    A = assemble(a, g)
    one = const(g, 1)
    control = solve_dirichlet(ProblemSpec(a, g, one), A)
    resolvent = solve_resolvent(ProblemSpec(a, g, one, lam=-1.0), A)
    V = GridFunction(g, bump(g.nodes, 0.0, 0.5))
    interior = solve_schrodinger(ProblemSpec(a, g, one, potential=V), A)
    schrod = solve_schrodinger(ProblemSpec(a, g, one, potential=one), A)
    return dict(g=g, A=A, control=control, resolvent=resolvent, interior=interior, schrod=schrod)


@pytest.mark.parametrize("a", [0.25, 0.3, 0.75])
def test_synthetic_model_class(a):
    exp = fit_boundary_expansion(synthetic(a), a, [0.0, 2 * a], LEFT)
    np.testing.assert_allclose(exp.coefficients, [2.0, 3.0], atol=1e-3)
    assert not exp.misfit


def test_reference_profile_has_no_2a_term():
    a = 0.3
    g = make_grid(-1.0, 1.0, 1024)
    u = sample_closed_form(g, lambda x: (1 - x * x) ** a)
    for ep in (LEFT, RIGHT):
        exp = fit_boundary_expansion(u, a, [0.0, 1.0, 2 * a], ep)
        c, s = exp.coefficient(2 * a)
        assert abs(c) <= 3 * s
        c0, s0 = exp.coefficient(0.0)
        assert abs(c0 - 2 ** a) <= 3 * s0
        assert not exp.misfit


def test_log_misfit_flagged():
    a = 0.3
    g = make_grid(0.0, 1.0, 1024)
    d = g.nodes
    exp = fit_boundary_expansion(GridFunction(g, d ** a * np.log(d)), a, [0.0, 2 * a], LEFT)
    assert exp.misfit
    assert exp.relative_residual > MISFIT_THRESHOLD


def test_basis_validation():
    assert check_basis([0.6, 0.0, 1.0]) == (0.0, 0.6, 1.0)
    with pytest.raises(ExponentCollisionError):
        check_basis([0.0, 0.03])
    with pytest.raises(ExponentCollisionError):
        check_basis([])
    with pytest.raises(ExponentCollisionError):
        verdict_basis(0.5)
    assert verdict_basis(0.3) == (0.0, 0.6, 1.0, 2.0)
    with pytest.raises(KeyError):
        fit_boundary_expansion(synthetic(0.3), 0.3, [0.0, 0.6], LEFT).coefficient(1.0)


def test_window_robustness():
    a = 0.3
    u = synthetic(a)
    wide = fit_boundary_expansion(u, a, [0.0, 2 * a], LEFT, FitWindow(d_max=0.2))
    narrow = fit_boundary_expansion(u, a, [0.0, 2 * a], LEFT, FitWindow(d_max=0.1))
    c0, s0 = wide.coefficient(0.0)
    assert abs(narrow.coefficient(0.0)[0] - c0) <= max(3 * s0, 1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_scale_equivariance(s):
    a = 0.3
    u = synthetic(a, 512)
    base = fit_boundary_expansion(u, a, [0.0, 2 * a], LEFT)
    scaled = fit_boundary_expansion(GridFunction(u.grid, s * u.values), a, [0.0, 2 * a], LEFT)
    np.testing.assert_allclose(scaled.coefficients, s * base.coefficients, rtol=1e-9)
    assert scaled.misfit == base.misfit
    tb = trace_vanishing_report(u, a, 0)
    ts = trace_vanishing_report(GridFunction(u.grid, s * u.values), a, 0)
    np.testing.assert_allclose(ts.gamma0_a[LEFT][0], s * tb.gamma0_a[LEFT][0], rtol=1e-9)
    assert ts.verdicts == tb.verdicts


def test_verdict_scale_equivariance(runs03):
    s = 7.5
    base = limited_regularity_verdict(runs03["resolvent"], runs03["control"], 0.3)
    sol = runs03["resolvent"]
    scaled_sol = dataclasses.replace(sol, u=GridFunction(sol.u.grid, s * sol.u.values))
    scaled = limited_regularity_verdict(scaled_sol, runs03["control"], 0.3)
    assert scaled.verdicts == base.verdicts
    assert scaled.c_2a[LEFT][0] == pytest.approx(s * base.c_2a[LEFT][0], rel=1e-9)


@pytest.mark.parametrize("a", [0.25, 0.5, 0.75])
def test_holder_pure_power(a):
    g = make_grid(0.0, 1.0, 2048)
    h = estimate_holder_exponent(GridFunction(g, g.nodes ** a), g.x_lo)
    assert h.exponent == pytest.approx(a, abs=0.05)
    assert 0 <= h.r_squared <= 1


def test_holder_smooth_interior():
    g = make_grid(-1.0, 1.0, 1024)
    h = estimate_holder_exponent(sample_closed_form(g, np.cos), 0.3)
    assert h.exponent == pytest.approx(1.0, abs=0.05)


def test_holder_reference_profile():
    g = make_grid(-1.0, 1.0, 1024)
    u = sample_closed_form(g, lambda x: (1 - x * x) ** 0.25)
    assert estimate_holder_exponent(u, g.x_hi).exponent == pytest.approx(0.25, abs=0.05)


def test_holder_errors():
    g = make_grid(-1.0, 1.0, 64)
    u = sample_closed_form(g, np.cos)
    with pytest.raises(InsufficientScalesError):
        estimate_holder_exponent(u, 0.0)
    with pytest.raises(ValueError):
        estimate_holder_exponent(sample_closed_form(make_grid(-1, 1, 1024), np.cos), 2.0)


@pytest.mark.parametrize("sigma", [0.25, 0.5, 0.75])
def test_vanishing_order_pure_power(sigma):
    g = make_grid(0.0, 1.0, 1024)
    order, r2 = vanishing_order(GridFunction(g, g.nodes ** sigma), LEFT)
    assert order == pytest.approx(sigma, abs=1e-6)
    assert r2 == pytest.approx(1.0)


def test_resolvent_verdict(runs03):
    rep = limited_regularity_verdict(runs03["resolvent"], runs03["control"], 0.3)
    assert rep.verdicts["limited-regularity-exhibited"]
    assert rep.verdicts["control-smooth"]
    assert rep.passed
    assert rep.control_ratio == min(rep.ratios.values()) > 10
    for ep in (LEFT, RIGHT):
        g0, s0 = rep.gamma0_a[ep]
        assert g0 == pytest.approx(0.7907907775365179, rel=1e-9)
        # the plain trace fit of the same solution
        assert abs(g0 - 0.79091455662755) <= max(3 * s0, 1e-3 * g0)


def test_interior_potential_verdict(runs03):
    rep = limited_regularity_verdict(runs03["interior"], runs03["control"], 0.3)
    assert not rep.verdicts["limited-regularity-exhibited"]
    assert all(r <= 3 for r in rep.ratios.values())


def test_control_against_itself(runs03):
    rep = limited_regularity_verdict(runs03["control"], runs03["control"], 0.3)
    assert not rep.verdicts["limited-regularity-exhibited"]
    assert rep.control_ratio == pytest.approx(1.0)


def test_verdict_incompatible(runs03):
    g = make_grid(-1.0, 1.0, 512)
    other = solve_dirichlet(ProblemSpec(0.3, g, const(g, 1)))
    with pytest.raises(IncompatibleGridsError):
        limited_regularity_verdict(runs03["resolvent"], other, 0.3)


def test_manufactured_vanishing_traces():
    a = 0.3
    g = make_grid(-1.0, 1.0, 1024)
    u = sample_closed_form(g, lambda x: (1 - x * x) ** (a + 2) * np.cos(x))
    rep = trace_vanishing_report(u, a, 1)
    for ep in (LEFT, RIGHT):
        assert rep.verdicts[f"gamma0-zero-{ep.value}"]
        assert rep.verdicts[f"gamma1-zero-{ep.value}"]
    assert rep.verdicts["traces-vanish-through-k"]


def test_schrodinger_higher_traces(runs03):
    rep = higher_trace_verdict(runs03["schrod"], 0.3, 1)
    for ep in (LEFT, RIGHT):
        g0, s0 = rep.gamma0_a[ep]
        assert abs(g0) > 3 * s0
        assert not rep.verdicts[f"gamma0-zero-{ep.value}"]
        assert g0 == pytest.approx(0.79091, abs=5e-4)
    assert not rep.passed


def test_dirichlet_traces_not_flagged(runs03):
    rep = higher_trace_verdict(runs03["control"], 0.3, 0)
    exact = math.gamma(1.3) * 2 ** 0.3 / (4 ** 0.3 * math.gamma(1.3) * math.gamma(0.8) / math.gamma(0.5))
    for ep in (LEFT, RIGHT):
        assert rep.gamma0_a[ep][0] == pytest.approx(exact, rel=1e-3)
    assert not rep.verdicts["traces-vanish-through-k"]
    with pytest.raises(ValueError):
        higher_trace_verdict(runs03["control"], 0.3, 4)


def test_heat_trace_series():
    a, dt = 0.3, 0.05
    g = make_grid(-1.0, 1.0, 512)
    A = assemble(a, g)
    stat = solve_dirichlet(ProblemSpec(a, g, const(g, 1)), A)
    heat = solve_heat(ProblemSpec(a, g, lambda x, t: np.ones_like(x), time=TimeGrid(dt, 3.0)), A)
    times, vals, errs = trace_time_series(heat, a, RIGHT)
    assert times[0] > 0
    late = times >= 5 * dt - 1e-12
    assert np.all(np.abs(vals[late]) > 3 * errs[late])
    assert np.all(np.diff(vals) >= 0)
    target = adaptive_expansion(stat.u, a, verdict_basis(a), RIGHT, 2 * a).coefficient(0.0)[0] * math.gamma(1 + a)
    assert vals[-1] <= target * (1 + 1e-2)
    with pytest.raises(ValueError):
        trace_time_series(stat, a)
