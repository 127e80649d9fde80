import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from fracreg.errors import AliasingRiskError, BranchError
from fracreg.grid1d import GridFunction, make_grid, sample_closed_form
from fracreg.symbolcalc import (MultiplierSymbol, Parity, PeriodizationConfig, apply_multiplier,
                                apply_multiplier_box, check_evenness, embed, check_strong_ellipticity, fractional_laplacian_symbol,
                                xi_plus_apply, xi_plus_apply_box, xi_symbol)

orders = st.floats(0.05, 0.95)


def _gaussian_fl_quadrature(a, x):
    # (1/pi) int_0^inf xi^{2a} sqrt(pi) e^{-xi^2/4} cos(x xi) dxi
    f = lambda k: k ** (2 * a) * np.exp(-k * k / 4) * np.cos(x * k)
    return integrate.quad(f, 0, np.inf, limit=400, epsabs=1e-14)[0] / np.sqrt(np.pi)


def test_evenness_examples():
    assert check_evenness(fractional_laplacian_symbol(0.3))
    assert not check_evenness(xi_symbol(0.5))
    assert not check_evenness(xi_symbol(1.0))

    def perturbed(xi, a=0.4):
        ax = np.maximum(np.abs(xi), 1.0)
        return np.abs(xi) ** (2 * a) + 0.1 * np.cos(xi) * ax ** (2 * a - 2)

    assert check_evenness(MultiplierSymbol(perturbed, 0.8))


def test_evenness_needs_samples():
    with pytest.raises(ValueError):
        check_evenness(fractional_laplacian_symbol(0.3), 8)


def test_ellipticity_examples():
    sym = fractional_laplacian_symbol(0.4)
    assert check_strong_ellipticity(sym, 1.0)
    assert not check_strong_ellipticity(sym, 1.5)
    neg = MultiplierSymbol(lambda xi: -np.abs(xi) ** 0.8, 0.8)
    assert not check_strong_ellipticity(neg, 0.01)
    with pytest.raises(ValueError):
        check_strong_ellipticity(sym, 0.0)


def test_eager_validation():
    with pytest.raises(ValueError):
        MultiplierSymbol(lambda xi: 1j * xi, 1.0, parity=Parity.EVEN)
    with pytest.raises(ValueError):
        MultiplierSymbol(lambda xi: np.abs(xi) ** 0.5, 0.5, ellipticity_constant=2.0)


def test_branch_error():
    with pytest.raises(BranchError):
        xi_symbol(0.5, bracket=0.0)


def test_identity_symbols():
    g = make_grid(-1, 1, 63)
    u = sample_closed_form(g, lambda x: (1 - x ** 2) * np.cos(3 * x))
    one = MultiplierSymbol(lambda xi: np.ones_like(xi), 0.0, parity=Parity.EVEN)
    np.testing.assert_allclose(apply_multiplier(one, u).values, u.values, atol=1e-13)
    np.testing.assert_allclose(apply_multiplier(xi_symbol(0.0), u).values, u.values, atol=1e-13)


def test_aliasing_risk():
    g = make_grid(-1, 1, 63)
    cfg = PeriodizationConfig.for_grid(g)
    small = PeriodizationConfig(cfg.box_halfwidth, 8, cfg.m)
    with pytest.raises(AliasingRiskError):
        apply_multiplier(fractional_laplacian_symbol(0.5), sample_closed_form(g, np.cos), small)
    with pytest.raises(ValueError):
        PeriodizationConfig(10.0, 4, 1000)
    with pytest.raises(ValueError):
        PeriodizationConfig(10.0, 1, 1024)


@pytest.mark.parametrize("a", [0.25, 0.5, 0.75])
def test_gaussian_against_quadrature(a):
    g = make_grid(-4, 4, 255)
    u = sample_closed_form(g, lambda x: np.exp(-x ** 2))
    cfg = PeriodizationConfig.for_grid(g, min_halfwidth=1e4)
    out = apply_multiplier(fractional_laplacian_symbol(a), u, cfg).values
    x = g.nodes
    pick = np.flatnonzero(np.abs(x) <= 2)[::8]
    ref = np.array([_gaussian_fl_quadrature(a, x[i]) for i in pick])
    closed = 4 ** a * special.gamma(a + 0.5) / special.gamma(0.5) * special.hyp1f1(a + 0.5, 0.5, -x[pick] ** 2)
    np.testing.assert_allclose(ref, closed, rtol=0, atol=1e-10)
    assert np.max(np.abs(out[pick] - ref)) <= 1e-6 * np.max(np.abs(ref))


def test_xi_minus_one_inverts_one_plus_derivative():
    g = make_grid(0.0, 10.0, 8191)
    m = 1 << int(np.ceil(np.log2(80 / g.h)))
    cfg = PeriodizationConfig(0.5 * m * g.h, 4, m)
    x, v = xi_plus_apply_box(-1.0, GridFunction(g, np.ones(g.n)), cfg)
    inside = (x >= 0.1) & (x < 10)
    assert np.abs(v[inside] - (1 - np.exp(-x[inside]))).max() <= 1e-3
    assert np.abs(v[x < -0.1]).max() <= 1e-3


def test_xi_plus_requires_half_line():
    with pytest.raises(ValueError):
        xi_plus_apply(-1.0, sample_closed_form(make_grid(-1, 1, 15), np.cos))


def test_support_preservation_improves_with_resolution():
    leaks = []
    for n in (1023, 2047):
        g = make_grid(0.0, 4.0, n)
        u = sample_closed_form(g, lambda x: np.where(x > 1, (x - 1) ** 2 * np.exp(-x), 0.0))
        x, v = xi_plus_apply_box(-0.5, u, PeriodizationConfig.for_grid(g, min_halfwidth=64))
        leaks.append(np.abs(v[x < 0]).max())
    assert leaks[1] <= leaks[0]


def _smooth_bump(g):
    return sample_closed_form(g, lambda x: np.where(np.abs(x - 2) < 1,
                                                    np.exp(-1 / np.maximum(1 - (x - 2) ** 2, 1e-300)), 0.0))


@settings(max_examples=25, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_composition(s, t):
    g = make_grid(0.0, 4.0, 511)
    u = _smooth_bump(g)
    cfg = PeriodizationConfig.for_grid(g)
    # compose on the whole box: restricting in between would drop the exterior tail
    _, box_s = xi_plus_apply_box(s, u, cfg)
    box_st = apply_multiplier_box(xi_symbol(t), box_s, g.h).real
    _, box_direct = xi_plus_apply_box(s + t, u, cfg)
    assert np.abs(box_st - box_direct).max() <= 1e-6 * np.abs(box_direct).max()


@settings(max_examples=25, deadline=None)
@given(orders)
def test_realness(a):
    g = make_grid(-1, 1, 127)
    u = sample_closed_form(g, lambda x: (1 - x ** 2) ** 2)
    cfg = PeriodizationConfig.for_grid(g)
    _, vals, _ = embed(u, cfg)
    out = apply_multiplier_box(fractional_laplacian_symbol(a), vals, g.h)
    assert np.abs(out.imag).max() <= 1e-10 * np.abs(out.real).max()
    assert apply_multiplier(fractional_laplacian_symbol(a), u, cfg).values.dtype == float


def test_minus_one_then_plus_one():
    g = make_grid(0.0, 4.0, 1023)
    u = _smooth_bump(g)
    cfg = PeriodizationConfig.for_grid(g)
    x, v = xi_plus_apply_box(-1.0, u, cfg)
    back = apply_multiplier_box(xi_symbol(1.0), v, g.h).real
    _, orig, _ = embed(u, cfg)
    far = x > 0.05
    assert np.abs(back[far] - orig[far]).max() <= 1e-6 * np.abs(orig).max()
