import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ljreact import ModelParams, RandomStreams, SingularError, sample_initial_positions
from ljreact import _kernels
from ljreact.pair import (LJKernel, lj_force, lj_laplacian, lj_value, pairwise_drift,
                          pairwise_drifts, regularized_force, regularized_hessian,
                          regularized_value, tail_cutoff)
from ljreact.verification import brute_force_pair_drift

KERNELS = [LJKernel(1.0, 1.0, 12.0, 6.0, 0.05), LJKernel(2.0, 0.5, 9.0, 4.5, 0.2),
           LJKernel(1.0, 1.0, 2.0, 1.0, 0.1)]


def _mp_value(k, x):
    r = mp.sqrt(sum(mp.mpf(v) ** 2 for v in x))
    return k.A * r ** (-k.alpha) - k.B * r ** (-k.beta)


@pytest.mark.parametrize("k", KERNELS)
@pytest.mark.parametrize("x", [[1.0, 0.0], [0.3, -0.9], [2.5, 1.5], [0.05, 0.02]])
def test_lj_value_and_force_against_mpmath(k, x):
    mp.mp.dps = 40
    assert lj_value(k, np.array(x)) == pytest.approx(float(_mp_value(k, x)), rel=1e-13)
    grad = [float(mp.diff(lambda t, a=a: _mp_value(k, [x[b] + (t if b == a else 0)
                                                      for b in range(2)]), 0))
            for a in range(2)]
    np.testing.assert_allclose(lj_force(k, np.array(x)), -np.array(grad), rtol=1e-11)


@pytest.mark.parametrize("k", KERNELS)
@pytest.mark.parametrize("d", [1, 2, 3])
def test_lj_laplacian_against_mpmath(k, d):
    mp.mp.dps = 40
    x = [0.9, -0.4, 0.7][:d]
    lap = 0.0
    for a in range(d):
        f = lambda t, a=a: _mp_value(k, [x[b] + (t if b == a else 0) for b in range(d)])
        lap += mp.diff(f, 0, 2)
    assert lj_laplacian(k, np.array(x)) == pytest.approx(float(lap), rel=1e-11)


def test_singular_at_overlap():
    k = KERNELS[0]
    with pytest.raises(SingularError):
        lj_value(k, np.zeros(2))
    with pytest.raises(SingularError):
        lj_force(k, np.zeros(3))


@pytest.mark.parametrize("k", KERNELS)
def test_regularization_is_c2_across_epsilon(k):
    e = np.array([k.epsilon, 0.0])
    inner, outer = e * (1 - 1e-9), e * (1 + 1e-9)
    assert regularized_value(k, inner) == pytest.approx(regularized_value(k, outer), rel=1e-7)
    np.testing.assert_allclose(regularized_force(k, inner), regularized_force(k, outer),
                               rtol=1e-6)
    np.testing.assert_allclose(regularized_hessian(k, inner), regularized_hessian(k, outer),
                               rtol=1e-6, atol=1e-6 * abs(k.W2) * k.epsilon**2)


@pytest.mark.parametrize("k", KERNELS)
def test_regularized_equals_lj_outside(k):
    x = np.array([1.3 * k.epsilon, 0.4 * k.epsilon])
    assert regularized_value(k, x) == pytest.approx(lj_value(k, x), rel=1e-14)
    np.testing.assert_allclose(regularized_force(k, x), lj_force(k, x), rtol=1e-13)


def test_regularized_force_is_zero_at_origin_and_finite_inside():
    k = KERNELS[0]
    np.testing.assert_array_equal(regularized_force(k, np.zeros(2)), 0.0)
    f = regularized_force(k, np.array([0.01, 0.0]))
    assert np.all(np.isfinite(f))


@given(arrays(np.float64, 2, elements=st.floats(-2, 2)).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_regularized_force_matches_finite_differences(x):
    k = KERNELS[2]
    h = 1e-6
    fd = np.array([(regularized_value(k, x - h * e) - regularized_value(k, x + h * e)) / (2 * h)
                   for e in np.eye(2)])
    np.testing.assert_allclose(regularized_force(k, x), fd, rtol=1e-5,
                               atol=1e-6 * (1 + np.abs(fd).max()))


def test_tail_cutoff_bounds_force():
    k = KERNELS[0]
    rc = tail_cutoff(k, 1e-12)
    r = np.linspace(rc, 3 * rc, 50)
    assert np.all(np.abs(k._p1(r)) <= 1e-12 * (1 + 1e-9))
    assert abs(k._p1(0.99 * rc)) > 1e-12


def _configs(n, N, seed):
    p = ModelParams(N=N)
    for s in range(n):
        yield sample_initial_positions(p, RandomStreams(seed + s, N))


@pytest.mark.parametrize("N", [2, 7, 30])
def test_pair_drift_matches_brute_force(N):
    p = ModelParams(N=N)
    k = LJKernel.from_params(p)
    for X in _configs(5, N, 100):
        got = pairwise_drifts(k, X, p.norm).drift
        np.testing.assert_allclose(got, brute_force_pair_drift(k, X, p.norm), rtol=0, atol=1e-12)


def test_pair_drift_sums_to_zero():
    p = ModelParams(N=20)
    k = LJKernel.from_params(p)
    X = next(_configs(1, 20, 3))
    assert np.abs(pairwise_drifts(k, X, p.norm).drift.sum(0)).max() < 1e-13


def test_cell_list_equals_all_pairs_within_cutoff():
    p = ModelParams(N=40)
    k = LJKernel.from_params(p)
    X = next(_configs(1, 40, 8)) * 3.0
    rc = 2.0
    a = pairwise_drifts(k, X, p.norm, rc, use_cells=True)
    b = pairwise_drifts(k, X, p.norm, rc, use_cells=False)
    np.testing.assert_array_equal(a.drift, b.drift)
    # the cell list only sees neighbours within the cutoff
    close = b.nearest2 <= rc * rc
    np.testing.assert_array_equal(a.nearest2[close], b.nearest2[close])


def test_cell_list_survives_very_spread_configurations():
    X = np.array([[0.0, 0.0], [1e7, 0.0], [0.0, 1e7], [1.0, 1.0]])
    ptr, idx = _kernels.cell_neighbors(X, 0.5)
    assert ptr[-1] == len(idx)


def test_nearest_neighbour_report():
    k = KERNELS[0]
    X = np.array([[0.0, 0.0], [1.5, 0.0], [0.0, 1.2]])
    res = pairwise_drifts(k, X, 3)
    assert res.min_distance == pytest.approx(1.2)
    np.testing.assert_array_equal(res.nearest, [2, 0, 0])


def test_single_particle_drift_matches_vector_version(small_params):
    from ljreact.integrator import initial_state
    s = initial_state(small_params)
    k = LJKernel.from_params(small_params)
    full = pairwise_drifts(k, s.positions, small_params.norm).drift
    for i in range(s.n):
        np.testing.assert_allclose(pairwise_drift(k, i, s, small_params.norm), full[i],
                                   rtol=1e-14, atol=1e-16)


def test_serial_and_parallel_builds_agree():
    p = ModelParams(N=30)
    k = LJKernel.from_params(p)
    X = next(_configs(1, 30, 21))
    ptr = np.zeros(1, dtype=np.int64)
    idx = np.zeros(0, dtype=np.int64)
    args = (X, *k.kernel_args(), 1.0 / p.norm, np.inf, True, ptr, idx)
    a = _kernels.pair_drift.serial(*args)
    b = _kernels.pair_drift.parallel(*args)
    for u, v in zip(a, b):
        np.testing.assert_array_equal(u, v)
