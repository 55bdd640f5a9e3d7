import numpy as np
import pytest

from ljreact import (ModelParams, RandomStreams, SingularError, StepOverrunError,
                     ValidationError)
from ljreact.integrator import (Engine, em_step, initial_state, reduce_state,
                                run_coupled_epsilons, run_from_state, run_interlaced)


def test_two_particles_at_minimum_move_by_noise_only():
    p = ModelParams(N=2, T=0.01, dt=1e-3, lam=0.0, lam_tilde=0.0)
    X0 = np.array([[0.0, 0.0], [p.r_star, 0.0]])
    s = initial_state(p, init_positions=X0)
    streams = RandomStreams(p.seed, 2)
    s, g, rep = em_step(s, s.field, p, streams)
    # the pair force vanishes at r_star up to rounding, the field is undepleted
    expected = X0 + p.sigma * np.sqrt(p.dt) * streams.brownian(0, 2)
    np.testing.assert_allclose(s.positions, expected, rtol=0, atol=1e-15)
    assert rep.min_pair_distance == pytest.approx(p.r_star)


def test_runs_are_reproducible():
    p = ModelParams(N=10, T=0.05, dt=1e-3, lam_tilde=20.0, seed=4)
    a = run_interlaced(p, record_every=5)
    b = run_interlaced(p, record_every=5)
    np.testing.assert_array_equal(a.state.positions, b.state.positions)
    np.testing.assert_array_equal(a.field.c, b.field.c)
    assert a.events.events == b.events.events
    c = run_interlaced(p.replace(seed=5))
    assert not np.array_equal(a.state.positions, c.state.positions, equal_nan=True)


def test_deaths_are_consistent():
    p = ModelParams(N=10, T=0.2, dt=1e-3, lam_tilde=30.0, seed=2)
    counts = []
    res = run_interlaced(p, monitor=lambda st, rep, c: counts.append(st.n_active))
    ev = res.events
    assert len(ev) <= p.N
    assert np.all(np.diff(counts) <= 0)
    assert np.all(np.diff(ev.times) >= 0)
    dead = ~res.state.active
    assert dead.sum() == len(ev)
    assert np.all(np.isnan(res.state.positions[dead]))
    # hazard is frozen at death and at least the clock
    assert np.all(res.state.hazard[dead] >= res.state.clock[dead])
    np.testing.assert_array_equal(np.sort(res.state.death_time[dead]), np.sort(ev.times))


def test_no_killing_without_hazard_scale():
    p = ModelParams(N=5, T=0.02, dt=1e-3, lam_tilde=0.0)
    res = run_interlaced(p)
    assert len(res.events) == 0 and res.state.n_active == 5


def test_step_past_horizon():
    p = ModelParams(N=2, T=0.002, dt=1e-3)
    e = Engine(p)
    s = initial_state(p, e.streams)
    e.step(s)
    e.step(s)
    with pytest.raises(StepOverrunError):
        e.step(s)


def test_initial_overlap_is_singular():
    p = ModelParams(N=2, T=0.01, dt=1e-3)
    with pytest.raises((SingularError, ValidationError)):
        initial_state(p, init_positions=np.zeros((2, 2)))


def test_stop_after_deaths_and_continuation():
    p = ModelParams(N=8, T=0.3, dt=1e-3, lam_tilde=40.0, seed=3)
    e = Engine(p)
    s = initial_state(p, e.streams)
    first = run_from_state(e, s, stop_after_deaths=1)
    assert first.stopped_early and len(s.events) >= 1
    snap = s.copy()
    run_from_state(e, s)
    rp, reduced = reduce_state(snap, p)
    assert rp.N == snap.n_active and rp.norm == p.N
    run_from_state(Engine(rp, RandomStreams(p.seed, p.N)), reduced)
    rows = np.flatnonzero(snap.active)
    np.testing.assert_array_equal(s.positions[rows], reduced.positions)
    np.testing.assert_array_equal(s.field.c, reduced.field.c)


def test_reduce_needs_two_survivors():
    p = ModelParams(N=2, T=0.01, dt=1e-3)
    s = initial_state(p)
    s.active[1] = False
    with pytest.raises(ValidationError):
        reduce_state(s, p)


def test_coupled_branching_matches_independent_runs():
    p = ModelParams(alpha=2.0, beta=1.0, sigma=3.0, N=5, dt=1e-3, T=0.3, init_min_gap=1.0,
                    lam_tilde=0.0, seed=4)
    eps = [f * p.r_star for f in (0.1, 0.05, 0.025)]
    a = run_coupled_epsilons(p.replace(epsilon=eps[0]), eps, branching=True, keep_paths=True)
    b = run_coupled_epsilons(p.replace(epsilon=eps[0]), eps, branching=False, keep_paths=True)
    for pa, pb in zip(a.paths, b.paths):
        np.testing.assert_array_equal(pa, pb)
    assert a.sup_distance == b.sup_distance
    assert a.min_gap == b.min_gap


def test_coupled_levels_preconditions():
    p = ModelParams(N=3, T=0.01, dt=1e-3, lam_tilde=0.0)
    with pytest.raises(ValidationError):
        run_coupled_epsilons(p, [0.05, 0.1])
    with pytest.raises(ValidationError):
        run_coupled_epsilons(p.replace(lam_tilde=1.0), [0.1, 0.05])


def test_identical_levels_when_radius_never_reached():
    p = ModelParams(N=4, T=0.02, dt=1e-3, lam_tilde=0.0, seed=1)
    eps = [0.1, 0.05]
    r = run_coupled_epsilons(p.replace(epsilon=0.1), eps, branching=False)
    assert r.min_gap[0] > eps[0]
    assert r.sup_distance[0] == 0.0
    assert r.branch_steps[1] == 0
