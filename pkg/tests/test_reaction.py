import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ljreact import AlreadyDeadError, CEMETERY, InactiveError, ModelParams, ParticleState
from ljreact import RandomStreams
from ljreact.field import FieldGrid
from ljreact.integrator import initial_state
from ljreact.reaction import (DeathEvent, EventLog, accumulate_hazard, acceptance_deaths,
                              check_crossing, crossing_time, kill, prm_step_acceptance)


def _const_grid(c=0.5):
    return FieldGrid.build((-2.0, -2.0), (2.0, 2.0), 0.25, m0=1.0, c0=c)


def test_accumulate_hazard_constant_field():
    p = ParticleState(np.zeros(2), True, 0.1, 1.0)
    q = accumulate_hazard(p, _const_grid(0.5), 0.01, 4.0)
    assert q.hazard == pytest.approx(0.1 + 4.0 * 0.5 * 0.01, rel=1e-15)
    with pytest.raises(InactiveError):
        accumulate_hazard(ParticleState(CEMETERY, False, 0.0, 1.0, 0.2), _const_grid(), 0.01, 1.0)


@pytest.mark.parametrize("clock, before, after, frac", [
    (1.0, 0.5, 1.5, 0.5), (1.0, 1.0, 2.0, 0.0), (2.0, 1.0, 2.0, 1.0), (1.25, 1.0, 2.0, 0.25)])
def test_crossing_time_is_linear(clock, before, after, frac):
    assert crossing_time(3.0, 0.1, clock, before, after) == pytest.approx(3.0 + 0.1 * frac)


def test_check_crossing():
    p = ParticleState(np.zeros(2), True, 0.9, 1.0)
    assert check_crossing(p, 0.0, 0.1, 0.8) is None
    q = ParticleState(np.zeros(2), True, 1.2, 1.0)
    ev = check_crossing(q, 0.0, 0.1, 0.8, particle=3, step=7)
    assert ev == DeathEvent(3, pytest.approx(0.05), 7, 1.2)


def test_kill_moves_to_cemetery():
    s = initial_state(ModelParams(N=3, T=0.01, dt=1e-3))
    kill(s, DeathEvent(1, 0.004, 3, 0.7))
    assert not s.active[1] and np.all(np.isnan(s.positions[1]))
    assert s.particle(1).position is CEMETERY
    assert s.particle(1).death_time == 0.004
    with pytest.raises(AlreadyDeadError):
        kill(s, DeathEvent(1, 0.005, 4, 0.8))


def test_event_log():
    log = EventLog()
    log.append(DeathEvent(2, 0.1, 1, 0.5))
    log.append(DeathEvent(0, 0.3, 3, 1.5))
    with pytest.raises(AlreadyDeadError):
        log.append(DeathEvent(2, 0.4, 4, 2.0))
    assert log.strictly_increasing()
    np.testing.assert_array_equal(log.particles, [2, 0])
    assert log.to_csv().splitlines() == ["step,particle,time,hazard_at_death",
                                         "1,2,0.1,0.5", "3,0,0.3,1.5"]


@given(st.floats(0.0, 1.0, exclude_max=True), st.floats(0.0, 100.0), st.floats(1e-4, 1e-1))
def test_acceptance_rule(u, r, dt):
    die, off = acceptance_deaths(np.array([u]), np.array([r]), dt)
    assert bool(die[0]) == bool(r > 0 and u < -np.expm1(-r * dt))
    if die[0]:
        assert 0.0 <= off[0] <= dt
    else:
        assert off[0] == dt


def test_acceptance_probability():
    U = RandomStreams(3, 200_000).acceptance(0)
    die, _ = acceptance_deaths(U, np.full(len(U), 5.0), 0.02)
    p = -np.expm1(-0.1)
    assert abs(die.mean() - p) < 4 * np.sqrt(p * (1 - p) / len(U))


def test_prm_step_leaves_state_alone():
    s = initial_state(ModelParams(N=20, T=1.0, dt=0.01, lam_tilde=50.0))
    before = s.copy()
    evs = prm_step_acceptance(s, s.field, 0.01, 50.0, RandomStreams(0, 20))
    np.testing.assert_array_equal(s.active, before.active)
    assert len(s.events) == 0
    assert [e.time for e in evs] == sorted(e.time for e in evs)
    assert prm_step_acceptance(s, s.field, 0.01, 0.0, RandomStreams(0, 20)) == []
