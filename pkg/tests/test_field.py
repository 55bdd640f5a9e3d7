import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate

from ljreact import ModelParams, DimensionMismatchError
from ljreact import _kernels
from ljreact.field import (FieldGrid, Mollifier, apply_depletion, density_on_grid,
                           deplete_with_density, empirical_density, field_at, field_step,
                           gypsum, m0_at, mollifier_eval)
from ljreact.integrator import initial_state


@pytest.mark.parametrize("d", [1, 2, 3])
def test_mollifier_has_unit_mass(d):
    K = Mollifier(0.2, 0.8, d)
    # radial integral of the truncated kernel; surface area of the unit sphere
    area = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
    mass, _ = integrate.quad(lambda r: mollifier_eval(K, np.array([r] + [0.0] * (d - 1))) *
                             area * r ** (d - 1), 0, K.cutoff, epsabs=1e-13)
    assert mass == pytest.approx(1.0, abs=1e-10)


def test_mollifier_grid_midpoint_mass():
    K = Mollifier(0.2, 0.8, 2)
    h = 0.005
    t = np.arange(-0.8 + h / 2, 0.8, h)
    X, Y = np.meshgrid(t, t, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], 1)
    assert float(np.sum(mollifier_eval(K, pts)) * h * h) == pytest.approx(1.0, abs=1e-4)


def test_mollifier_support_and_symmetry():
    K = Mollifier(0.2, 0.8, 2)
    assert mollifier_eval(K, np.array([0.81, 0.0])) == 0.0
    assert mollifier_eval(K, np.array([0.3, -0.2])) == mollifier_eval(K, np.array([-0.3, 0.2]))
    assert mollifier_eval(K, np.zeros(2)) == pytest.approx(K.norm_const)


def _grid(lo=-3.0, hi=3.0, h=1.0 / 14.0, **kw):
    return FieldGrid.build((lo, lo), (hi, hi), h, **kw)


def test_node_density_matches_direct_sum():
    p = ModelParams(N=8)
    s = initial_state(p)
    g = FieldGrid.from_params(p)
    K = Mollifier.from_params(p)
    u = density_on_grid(g, K, s.positions, p.norm)
    nodes = g.nodes()
    rng = np.random.default_rng(0)
    for q in rng.choice(len(nodes), 200, replace=False):
        assert u.ravel()[q] == pytest.approx(empirical_density(K, s, nodes[q], p.norm),
                                             rel=1e-12, abs=1e-15)


def test_empirical_density_excludes_self():
    p = ModelParams(N=3)
    s = initial_state(p)
    K = Mollifier.from_params(p)
    x = s.positions[0]
    full = empirical_density(K, s, x, p.norm)
    own = mollifier_eval(K, np.zeros(2)) / p.norm
    assert empirical_density(K, s, x, p.norm, exclude=0) == pytest.approx(full - own, abs=1e-15)


def test_depletion_is_exact_exponential():
    g = _grid(m0=1.0)
    K = Mollifier(0.2, 0.8, 2)
    X = np.array([[0.1, 0.2], [-0.5, 0.3]])
    u = density_on_grid(g, K, X, 2)
    g2 = g.copy()
    deplete_with_density(g2, K, X, 2, 0.01, 3.0)
    np.testing.assert_allclose(g2.c, np.exp(-3.0 * 0.01 * u), rtol=2e-16, atol=0)


@given(st.floats(0, 2.0 ** -10), st.floats(2.0 ** -10, 50))
def test_exp_neg_against_mpmath(z_small, z_big):
    for z in (z_small, z_big):
        exact = float(mp.exp(-mp.mpf(z)))
        assert abs(_kernels.exp_neg(z) - exact) <= 2 * np.spacing(exact)


@given(arrays(np.float64, 5, elements=st.floats(0, 20)), st.floats(1e-6, 1e-2))
def test_field_stays_in_bounds(u, lam_dt):
    g = FieldGrid.build((0.0,), (4.0,), 1.0, m0=0.7)
    for _ in range(50):
        apply_depletion(g, u, lam_dt, 1.0)
    assert np.all(g.c >= 0) and np.all(g.c <= g.m0)
    assert np.all(gypsum(g) + g.c == g.m0)


def test_semigroup_with_frozen_density():
    g = _grid(m0=1.0)
    rng = np.random.default_rng(1)
    u = rng.random(g.shape) * 5
    a, b = g.copy(), g.copy()
    apply_depletion(a, u, 0.02, 1.0)
    apply_depletion(b, u, 0.01, 1.0)
    apply_depletion(b, u, 0.01, 1.0)
    # equal up to rounding of one extra product
    assert np.max(np.abs(a.c - b.c) / a.c) <= 4 * np.finfo(float).eps


def test_field_step_copy_and_inplace(small_params):
    s = initial_state(small_params)
    K = Mollifier.from_params(small_params)
    g0 = s.field.c.copy()
    out = field_step(s.field, K, s, 1e-3, 1.0, small_params.norm)
    np.testing.assert_array_equal(s.field.c, g0)
    assert np.any(out.c < g0)
    same = field_step(s.field, K, s, 1e-3, 0.0, small_params.norm, inplace=True)
    assert same is s.field
    np.testing.assert_array_equal(same.c, g0)
    with pytest.raises(ValueError):
        field_step(s.field, K, s, 0.0, 1.0, small_params.norm)


@pytest.mark.parametrize("X", [
    [[1e6, 0.0]],
    [[3.5, 3.5]],
    [[-3.4, 3.6]],
    [[2.9, 3.7], [-3.9, -2.9]],
    [[0.0, -1e9]],
])
def test_particles_outside_the_grid(X):
    g = _grid(m0=1.0)
    K = Mollifier(0.2, 0.8, 2)
    u = density_on_grid(g, K, np.array(X, dtype=float), 1)
    assert np.all(np.isfinite(u)) and np.all(u >= 0)
    far = np.all(np.abs(np.array(X)) > 3.0 + 0.8, axis=1)
    if far.all():
        assert np.all(u == 0)


def test_interpolation_is_exact_for_affine_fields():
    g = _grid(m0=10.0, c0=lambda z: 5.0 + 0.5 * z[:, 0] - 0.25 * z[:, 1], c_outside=5.0)
    rng = np.random.default_rng(3)
    P = rng.uniform(-2.9, 2.9, (100, 2))
    c, m0 = g.values_at(P)
    np.testing.assert_allclose(c, 5.0 + 0.5 * P[:, 0] - 0.25 * P[:, 1], rtol=1e-13)
    np.testing.assert_allclose(m0, 10.0, rtol=4e-16)


def test_outside_rule():
    g = _grid(m0=1.0, c0=0.25)
    assert field_at(g, np.array([10.0, 0.0])) == 0.25
    assert m0_at(g, np.array([10.0, 0.0])) == 1.0
    with pytest.raises(DimensionMismatchError):
        g.values_at(np.zeros((2, 3)))


def test_build_rejects_inadmissible_field():
    with pytest.raises(ValueError):
        _grid(m0=1.0, c0=1.5)


def test_profile_dip():
    p = ModelParams(m0_min=0.5, m0_max=1.0)
    g = FieldGrid.from_params(p)
    assert g.m0.min() >= 0.5 - 1e-12 and g.m0.max() <= 1.0
    assert g.constant_m0 == 0.0
    assert FieldGrid.from_params(ModelParams()).constant_m0 == 1.0


def test_serial_and_parallel_depletion_agree():
    p = ModelParams()
    s = initial_state(p)
    g = FieldGrid.from_params(p)
    K = Mollifier.from_params(p)
    args = lambda c, u: (c, u, s.positions, g.lo, g.spacing, g._shape_arr, g._strides,
                         K.inv2bw2, K.norm_const, K.cutoff, 1.0 / p.norm, 1e-4)
    c1, c2 = g.c.ravel().copy(), g.c.ravel().copy()
    u1, u2 = np.empty_like(c1), np.empty_like(c2)
    _kernels.deplete.serial(*args(c1, u1))
    _kernels.deplete.parallel(*args(c2, u2))
    np.testing.assert_array_equal(u1, u2)
    np.testing.assert_array_equal(c1, c2)
