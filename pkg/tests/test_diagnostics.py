import json
import math

import numpy as np
import pytest
from scipy import stats

from ljreact import InsufficientSamplesError, ModelParams, RandomStreams, SingularError
from ljreact import sample_initial_positions
from ljreact.diagnostics import (Check, DiagnosticsReport, collision_path, collision_statistics,
                                 drift_estimates_suite, hazard_timechange_test, lyapunov_probe,
                                 potential_energy, potential_gradient, random_admissible_fields)
from ljreact.envdrift import build_stencil
from ljreact.field import FieldGrid
from ljreact.verification import lyapunov_fd


def _check(passed=True, **measured):
    return Check("demo", passed, measured or {"x": 1.0}, {"tol": 0.1}, 10, "a property", 3, 0.5)


def test_report_serialization_is_deterministic():
    r = DiagnosticsReport([_check(x=float("inf")), _check(False, y=np.float64(2.5))])
    doc = json.loads(r.to_json())
    assert doc["passed"] is False
    assert [c["name"] for c in doc["checks"]] == ["demo", "demo"]
    assert "runtime_s" not in doc["checks"][0]
    assert doc["checks"][0]["measured"]["x"] == "inf"
    assert json.loads(r.to_json(runtimes=True))["checks"][0]["runtime_s"] == 0.5
    assert r.summary().splitlines()[1].startswith("FAIL demo: y=2.5")


def test_gradient_matches_finite_differences():
    p = ModelParams(N=6, init_min_gap=0.9)
    X = sample_initial_positions(p, RandomStreams(1, 6))
    g = potential_gradient(X, p)
    h = 1e-6
    for i in range(6):
        for a in range(2):
            Xp, Xm = X.copy(), X.copy()
            Xp[i, a] += h
            Xm[i, a] -= h
            fd = (potential_energy(Xp, p) - potential_energy(Xm, p)) / (2 * h)
            assert g[i, a] == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_two_particles_at_minimum():
    p = ModelParams(N=2, sigma=0.7)
    X = np.array([[0.0, 0.0], [p.r_star, 0.0]])
    total, parts = lyapunov_probe(X, p, parts=True)
    assert abs(parts["grad_sq"]) < 1e-28
    assert parts["drift"] == 0.0
    grid = FieldGrid.from_params(p)
    ref = lyapunov_fd(X, p, grid, build_stencil(1.0, 28, 2))
    assert total == pytest.approx(ref, rel=1e-5)
    assert total == pytest.approx(parts["diffusion"], rel=1e-12)


def test_probe_matches_finite_differences_with_drift():
    p = ModelParams(N=5, init_min_gap=0.7, m0_min=0.5)
    grid = random_admissible_fields(FieldGrid.from_params(p), 3, 1)[2]
    st = build_stencil(1.0, 28, 2)
    for seed in range(5):
        X = sample_initial_positions(p, RandomStreams(seed, 5))
        v, parts = lyapunov_probe(X, p, grid, st, parts=True)
        assert parts["drift"] != 0.0
        assert v == pytest.approx(lyapunov_fd(X, p, grid, st), rel=1e-4)


def test_collision_path_diverges():
    p = ModelParams(N=2)
    vals = [lyapunov_probe(c, p) for c in collision_path(p, (0.5, 0.3, 0.2, 0.15))]
    assert np.all(np.diff(vals) < 0)
    assert vals[-1] < -1e6


def test_overlap_is_singular():
    with pytest.raises(SingularError):
        potential_energy(np.zeros((2, 2)), ModelParams(N=2))


def test_collision_frequencies():
    gaps = np.linspace(0.01, 0.5, 40)
    cs = collision_statistics(list(gaps), [1.0, 0.2, 1e-9])
    assert cs.frequency[0] == 1.0 and cs.frequency[2] == 0.0
    assert cs.counts[1] == int(np.sum(gaps <= 0.2))
    assert cs.nonincreasing
    # Wilson score interval
    k, n, z = cs.counts[1], 40, stats.norm.ppf(0.975)
    ph = k / n
    centre = (ph + z * z / (2 * n)) / (1 + z * z / n)
    half = z / (1 + z * z / n) * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n))
    assert cs.ci_low[1] == pytest.approx(centre - half, rel=1e-9)
    assert cs.ci_high[1] == pytest.approx(centre + half, rel=1e-9)
    with pytest.raises(InsufficientSamplesError):
        collision_statistics([0.1] * 29, [0.1])


def test_ks_pass_rate_under_the_null():
    rng = np.random.default_rng(8)
    passes = sum(hazard_timechange_test(rng.exponential(size=1000)).passed for _ in range(300))
    # binomial(300, 0.99): at least 292 with probability about 0.99
    assert passes >= 292


def test_ks_rejects_degenerate_hazards():
    assert not hazard_timechange_test(np.ones(1000)).passed
    with pytest.raises(InsufficientSamplesError):
        hazard_timechange_test(np.ones(999))


def test_random_fields_are_admissible():
    t = FieldGrid.from_params(ModelParams(m0_min=0.5))
    for f in random_admissible_fields(t, 9, 2):
        assert np.all(f.c >= 0) and np.all(f.c <= f.m0)
        assert 0 <= f.c_outside <= f.m0_outside


def test_drift_suite_on_undepleted_fields():
    t = FieldGrid.from_params(ModelParams(box_lo=(-3.0, -3.0), box_hi=(3.0, 3.0)))
    st = build_stencil(1.0, 28, 2)
    rep = drift_estimates_suite(st, [t, t.copy()], np.zeros((2, 2)), 1.0, space_pairs=3)
    assert rep["drift_bound"].measured["max_norm"] == 0.0
    assert rep["drift_bound"].passed and rep["field_lipschitz"].passed
