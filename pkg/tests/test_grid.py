import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from consumax import Field, GridSpec, InputError, MeasureSpec, integrate, lp_norm, pair_with_test_function
from consumax.functionals import TestFunction
from consumax.regularize import mollify_measure


def test_gridspec_geometry():
    g = GridSpec(2.0, 1.0, 40, 20)
    assert g.hx == pytest.approx(0.05) and g.hy == pytest.approx(0.05)
    assert g.shape == (40, 20)
    X, Y = g.centers()
    assert X.shape == g.shape
    assert X[0, 0] == pytest.approx(0.025) and Y[0, -1] == pytest.approx(0.975)
    assert g.refined().nx == 80


@pytest.mark.parametrize("kw", [dict(nx=2), dict(Lx=0.0), dict(Ly=-1.0)])
def test_gridspec_rejects_bad_input(kw):
    with pytest.raises(InputError):
        GridSpec(**kw)


def test_field_is_immutable_and_finite():
    g = GridSpec(nx=8, ny=8)
    arr = np.ones(g.shape)
    f = Field(g, arr)
    arr[0, 0] = 5.0
    assert f.values[0, 0] == 1.0
    with pytest.raises(ValueError):
        f.values[0, 0] = 2.0
    with pytest.raises(InputError):
        Field(g, np.full(g.shape, np.nan))
    with pytest.raises(InputError):
        Field(g, np.ones((4, 4)))


def test_integrate_constant():
    g = GridSpec(nx=16, ny=16)
    assert integrate(Field.constant(g, 2.5)) == pytest.approx(2.5, rel=1e-15)


def test_integrate_unit_mass_cell():
    g = GridSpec(nx=16, ny=12)
    a = np.zeros(g.shape)
    a[3, 7] = 1.0 / g.cell_area
    assert integrate(Field(g, a)) == pytest.approx(1.0, rel=1e-15)


def test_integrate_x_coordinate_against_summation_oracle():
    g = GridSpec(nx=64, ny=64)
    f = Field.from_function(g, lambda x, y: x + 0 * y)
    oracle = math.fsum((i + 0.5) * g.hx * g.hx * g.hy for i in range(64) for _ in range(64))
    assert abs(oracle - 0.5) < 1e-14
    assert abs(integrate(f) - oracle) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.integers(0, 2**32 - 1))
def test_integrate_linear(a, b, seed):
    g = GridSpec(nx=16, ny=16)
    rng = np.random.default_rng(seed)
    f, h = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
    lhs = integrate(Field(g, a * f + b * h))
    rhs = a * integrate(Field(g, f)) + b * integrate(Field(g, h))
    scale = abs(a) * np.abs(f).sum() * g.cell_area + abs(b) * np.abs(h).sum() * g.cell_area
    assert abs(lhs - rhs) <= 1e-13 * max(scale, 1e-300)


def test_lp_norm_examples():
    g = GridSpec(nx=8, ny=8)
    assert lp_norm(Field.constant(g, -3.0), 2) == pytest.approx(3.0, rel=1e-15)
    a = np.full(g.shape, 2.0)
    a[0, 0] = -3.0
    assert lp_norm(Field(g, a), np.inf) == 3.0
    X, _ = g.centers()
    assert lp_norm(Field(g, (X < 0.5).astype(float)), 1) == pytest.approx(0.5, rel=1e-15)
    with pytest.raises(InputError):
        lp_norm(Field(g, a), 0.5)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1.0, 1.5, 2.0, 3.0, np.inf]))
def test_lp_norm_triangle_inequality(seed, p):
    g = GridSpec(nx=12, ny=10)
    rng = np.random.default_rng(seed)
    f, h = Field(g, rng.standard_normal(g.shape)), Field(g, rng.standard_normal(g.shape))
    total = lp_norm(f.with_values(f.values + h.values), p)
    assert total <= (lp_norm(f, p) + lp_norm(h, p)) * (1 + 1e-12)


def test_lp_norm_large_values_do_not_overflow():
    g = GridSpec(nx=8, ny=8)
    f = Field.constant(g, 1e200)
    assert lp_norm(f, 4) == pytest.approx(1e200, rel=1e-12)


def test_pairing_examples():
    g = GridSpec(nx=16, ny=16)
    a = np.zeros(g.shape)
    a[8, 8] = 1.0 / g.cell_area
    f = Field(g, a)
    assert pair_with_test_function(f, 1.0) == pytest.approx(1.0, rel=1e-15)
    assert pair_with_test_function(Field.constant(g, 0.0), TestFunction(1, 1)) == 0.0
    rng = np.random.default_rng(3)
    r = Field(g, rng.random(g.shape))
    assert pair_with_test_function(r, 1.0) == integrate(r)
    assert pair_with_test_function(r, TestFunction(0, 0)) == integrate(r)


def test_pairing_mollified_dirac_converges_to_point_value():
    x0, y0 = 0.3, 0.6
    tf = TestFunction(1, 0)
    exact = math.cos(math.pi * x0)
    errs = []
    for n, eps in [(32, 1e-2), (64, 3e-3), (128, 1e-3)]:
        g = GridSpec(nx=n, ny=n)
        u = mollify_measure(MeasureSpec([(x0, y0, 1.0)]), eps, g)
        errs.append(abs(pair_with_test_function(u, tf) - exact))
    assert errs[0] > errs[1] > errs[2]
    # the heat kernel at time eps shifts the pairing by about eps * |lap phi|
    assert errs[-1] < 2 * 1e-3 * math.pi**2


def test_measure_validation():
    g = GridSpec(nx=8, ny=8)
    with pytest.raises(InputError):
        MeasureSpec([(0.5, 0.5, -1.0)])
    with pytest.raises(InputError):
        MeasureSpec([])
    m = MeasureSpec([(0.5, 0.5, 1.0)], density=Field.constant(g, 2.0))
    assert m.mass == pytest.approx(3.0)
    with pytest.raises(InputError):
        MeasureSpec([(1.5, 0.5, 1.0)]).check_inside(g)
