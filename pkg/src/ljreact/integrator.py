"""Euler-Maruyama stepping, the interlaced run across killing times and the
shared-noise runner over a ladder of regularization radii.

One step, in this fixed order:

1. move every active particle with the pair drift, the environmental drift
   and its Brownian increment, all evaluated at the start-of-step state;
2. deplete the field with the density of the start-of-step positions;
3. accumulate hazard at the new positions using the updated field, then
   detect and apply deaths.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, List, Optional

import numpy as np

from . import _kernels
from .envdrift import environmental_drifts, stencil_from_params, stencil_lattice
from .errors import SingularError, StepOverrunError, ValidationError
from .field import FieldGrid, Mollifier, deplete_with_density
from .model import (ModelParams, RandomStreams, SystemState, draw_clocks,
                    sample_initial_positions, validate_params)
from .pair import LJKernel, pairwise_drifts, tail_cutoff
from .reaction import DeathEvent, EventLog, acceptance_deaths, crossing_time, kill

KILLING_MODES = ("clock", "acceptance")


@dataclass
class StepReport:
    """Summary of one step.  ``min_pair_distance`` is measured on the
    start-of-step configuration (``inf`` with fewer than two active)."""

    step: int
    time: float
    min_pair_distance: float
    deaths: List[DeathEvent]
    max_drift_norm: float
    nearest_pair: tuple = (-1, -1)
    snapshot: Optional[SystemState] = None


class Engine:
    """Precomputed operators for one parameter set.

    Parameters
    ----------
    params : ModelParams
    streams : RandomStreams, optional
        Defaults to streams of ``params.seed`` with one slot per particle.
    epsilon : float, optional
        Regularization radius overriding ``params.epsilon``.
    killing : {"clock", "acceptance"}
    """

    def __init__(self, params: ModelParams, streams: Optional[RandomStreams] = None,
                 epsilon: Optional[float] = None, killing: str = "clock"):
        if killing not in KILLING_MODES:
            raise ValidationError("killing", f"must be one of {KILLING_MODES}")
        self.params = validate_params(params)
        self.streams = streams or RandomStreams(params.seed, params.N)
        self.kernel = LJKernel.from_params(params, epsilon)
        self.mollifier = Mollifier.from_params(params)
        self.stencil = stencil_from_params(params)
        self.cutoff = tail_cutoff(self.kernel, params.tail_tolerance)
        self.killing = killing
        self.dt = float(params.dt)
        self.sqrt_dt = math.sqrt(self.dt)
        self.n_steps = params.n_steps
        self._kargs = self.kernel.kernel_args()
        self._inv_norm = 1.0 / params.norm
        self._lattice_key = None
        self._lattice = None

    def with_epsilon(self, epsilon: float) -> "Engine":
        return Engine(self.params, self.streams, epsilon, self.killing)

    def with_streams(self, streams: RandomStreams) -> "Engine":
        """Same operators, different noise; cheap enough for one call per run."""
        out = copy.copy(self)
        out.streams = streams
        return out

    # -- drift pieces --------------------------------------------------------

    def pair_phase(self, X: np.ndarray):
        """Pair drift and nearest-gap data for the active rows ``X``."""
        n = X.shape[0]
        if n < 2:
            return np.zeros_like(X), np.inf, (-1, -1)
        use_cells = _kernels.extent(X) >= self.cutoff
        res = pairwise_drifts(self.kernel, X, self.params.norm, self.cutoff, use_cells)
        k = int(np.argmin(res.nearest2))
        return res.drift, float(math.sqrt(res.nearest2[k])), (k, int(res.nearest[k]))

    def env_phase(self, X: np.ndarray, grid: FieldGrid) -> np.ndarray:
        key = (tuple(grid.lo), grid.spacing, grid.shape)
        if self._lattice_key != key:
            self._lattice = stencil_lattice(self.stencil, grid)
            self._lattice_key = key
        return environmental_drifts(self.stencil, grid, X, self._lattice)

    # -- one step ------------------------------------------------------------

    def step(self, state: SystemState, snapshot_below: Optional[float] = None) -> StepReport:
        """Advance ``state`` (in place) by one step.

        If ``snapshot_below`` is given and the start-of-step gap is below it,
        a copy of the untouched start-of-step state is attached to the report.
        """
        p = self.params
        k = state.step
        if k >= self.n_steps:
            raise StepOverrunError(f"step {k} is past the horizon T={p.T} (dt={p.dt})")
        grid = state.field
        t0 = state.time
        rows = np.flatnonzero(state.active)
        X = np.ascontiguousarray(state.positions[rows])
        ids = state.ids[rows]

        pair, gap, near = self.pair_phase(X)
        if gap == 0.0:
            a, b = near
            raise SingularError("exact overlap of two active particles", step=k,
                                pair=(rows[a], rows[b]), distance=0.0)
        snap = None
        if snapshot_below is not None and gap < snapshot_below:
            snap = state.copy()

        env = self.env_phase(X, grid)
        xi = self.streams.brownian(k, p.d)[ids]
        Xn, dn, ok = _kernels.advance(X, pair, env, xi, self.dt, p.sigma * self.sqrt_dt)
        if not ok:
            bad = int(np.flatnonzero(~np.all(np.isfinite(Xn), axis=1))[0])
            raise SingularError("non-finite position after step", step=k,
                                pair=(rows[bad], rows[bad]), distance=gap)

        if p.lam > 0.0 and len(rows):
            deplete_with_density(grid, self.mollifier, X, p.norm, self.dt, p.lam)
        state.positions[rows] = Xn

        deaths: List[DeathEvent] = []
        if len(rows):
            cv, _ = grid.values_at(Xn)
            rate = p.lam_tilde * np.maximum(cv, 0.0)
            hb = state.hazard[rows]
            ha = hb + rate * self.dt
            state.hazard[rows] = ha
            if p.lam_tilde > 0.0:
                if self.killing == "clock":
                    clk = state.clock[rows]
                    hit = np.flatnonzero(ha >= clk)
                    if len(hit):
                        tc = crossing_time(t0, self.dt, clk[hit], hb[hit], ha[hit])
                        deaths = [DeathEvent(int(rows[h]), float(tc[q]), k, float(ha[h]))
                                  for q, h in enumerate(hit)]
                else:
                    U = self.streams.acceptance(k)[ids]
                    die, off = acceptance_deaths(U, rate, self.dt)
                    deaths = [DeathEvent(int(rows[h]), t0 + float(off[h]), k,
                                         float(hb[h] + rate[h] * off[h]))
                              for h in np.flatnonzero(die)]
        deaths.sort(key=lambda e: (e.time, e.particle))
        for ev in deaths:
            kill(state, ev)
        if len(deaths) > 1:
            state.events.tie_steps += 1

        state.step = k + 1
        state.time = (k + 1) * self.dt
        pair_idx = (int(rows[near[0]]), int(rows[near[1]])) if near[0] >= 0 else (-1, -1)
        return StepReport(k, state.time, gap, deaths, dn, pair_idx, snap)


@lru_cache(maxsize=8)
def _cached_engine(params: ModelParams, streams: RandomStreams) -> Engine:
    return Engine(params, streams)


def em_step(state: SystemState, grid: FieldGrid, params: ModelParams, streams: RandomStreams):
    """One Euler-Maruyama step of ``state`` with field ``grid``, both in place.

    Returns ``(state, grid, report)``.
    """
    state.field = grid
    rep = _cached_engine(params, streams).step(state)
    return state, state.field, rep


# ---------------------------------------------------------------------------
# initial data

def _check_distinct(X: np.ndarray) -> None:
    if len(X) < 2:
        return
    diff = X[:, None, :] - X[None, :, :]
    d2 = np.sum(diff * diff, axis=-1)
    np.fill_diagonal(d2, np.inf)
    if np.min(d2) == 0.0:
        raise ValidationError("init_positions", "initial positions must be pairwise distinct")


def initial_state(params: ModelParams, streams: Optional[RandomStreams] = None,
                  init_positions=None, c0=None) -> SystemState:
    """Time-zero state: all particles active, zero hazard, fresh clocks.

    ``init_positions`` defaults to a gap-constrained uniform sample; ``c0``
    is a constant or a function of node coordinates (default
    ``c0_fraction * m0``).
    """
    p = validate_params(params)
    streams = streams or RandomStreams(p.seed, p.N)
    if init_positions is None:
        X = sample_initial_positions(p, streams)
    else:
        X = np.array(init_positions, dtype=float).reshape(-1, p.d)
        if len(X) != p.N:
            raise ValidationError("init_positions", f"expected {p.N} positions, got {len(X)}")
        if not np.all(np.isfinite(X)):
            raise ValidationError("init_positions", "positions must be finite")
        _check_distinct(X)
    try:
        grid = FieldGrid.from_params(p, c0)
    except ValueError as exc:
        raise ValidationError("c0", str(exc)) from exc
    return SystemState(
        time=0.0, step=0, positions=X.copy(), active=np.ones(p.N, dtype=bool),
        hazard=np.zeros(p.N), clock=draw_clocks(streams, p.N),
        death_time=np.full(p.N, np.nan), ids=np.arange(p.N, dtype=np.int64),
        field=grid, events=EventLog(),
    )


def reduce_state(state: SystemState, params: ModelParams):
    """The surviving particles of ``state`` as a system of their own.

    Returns ``(params, state)`` for the reduced system: ``N`` is the number
    of survivors, the normalization stays at the original ``N_tilde``,
    stream slots are kept and the event log starts empty.  Running it with
    streams of the original width reproduces the continuation of ``state``.
    """
    rows = np.flatnonzero(state.active)
    if len(rows) < 2:
        raise ValidationError("N", "a reduced system needs at least two survivors")
    reduced = state.subset(rows)
    reduced.events = EventLog()
    return params.replace(N=len(rows), N_tilde=params.norm), reduced


# ---------------------------------------------------------------------------
# trajectory recording

@dataclass
class Trajectory:
    """Positions, activity and hazard every ``every`` steps, plus per-step
    gap and drift series."""

    every: int
    steps: List[int] = field(default_factory=list)
    times: List[float] = field(default_factory=list)
    positions: List[np.ndarray] = field(default_factory=list)
    active: List[np.ndarray] = field(default_factory=list)
    hazard: List[np.ndarray] = field(default_factory=list)
    min_gap: List[float] = field(default_factory=list)
    max_drift: List[float] = field(default_factory=list)

    def record(self, state: SystemState) -> None:
        self.steps.append(state.step)
        self.times.append(state.time)
        self.positions.append(state.positions.copy())
        self.active.append(state.active.copy())
        self.hazard.append(state.hazard.copy())

    def observe(self, state: SystemState, rep: StepReport) -> None:
        self.min_gap.append(rep.min_pair_distance)
        self.max_drift.append(rep.max_drift_norm)
        if self.every > 0 and state.step % self.every == 0:
            self.record(state)

    def position_array(self) -> np.ndarray:
        return np.stack(self.positions) if self.positions else np.zeros((0, 0, 0))

    def to_csv_rows(self):
        """Rows ``(step, time, particle, x..., active, hazard)``."""
        for s, t, X, a, h in zip(self.steps, self.times, self.positions, self.active,
                                 self.hazard):
            for i in range(len(a)):
                yield (s, t, i, *X[i], int(a[i]), h[i])


def min_gap_of(state: SystemState) -> float:
    X = state.positions[state.active]
    if len(X) < 2:
        return np.inf
    diff = X[:, None, :] - X[None, :, :]
    d2 = np.sum(diff * diff, axis=-1)
    np.fill_diagonal(d2, np.inf)
    return float(np.sqrt(np.min(d2)))


@dataclass
class RunResult:
    state: SystemState
    trajectory: Trajectory
    stopped_early: bool = False
    segments: List[SystemState] = field(default_factory=list)

    @property
    def events(self) -> EventLog:
        return self.state.events

    @property
    def field(self) -> FieldGrid:
        return self.state.field

    @property
    def min_gap(self) -> float:
        """Smallest active gap over all start-of-step and final configurations."""
        g = min(self.trajectory.min_gap) if self.trajectory.min_gap else np.inf
        return min(g, min_gap_of(self.state))


def run_from_state(engine: Engine, state: SystemState, record_every: int = 0,
                   stop_after_deaths: Optional[int] = None, until_step: Optional[int] = None,
                   monitor: Optional[Callable] = None, keep_segments: bool = False,
                   trajectory: Optional[Trajectory] = None) -> RunResult:
    """Step ``state`` in place until the horizon (or ``until_step``).

    Stops early once ``stop_after_deaths`` deaths have been logged in total
    or no particle is left.  ``monitor(state, report, c_before)`` is called
    after each step with the field values from before the step.
    """
    traj = trajectory if trajectory is not None else Trajectory(record_every)
    if trajectory is None and record_every > 0:
        traj.record(state)
    end = engine.n_steps if until_step is None else min(until_step, engine.n_steps)
    segments = []
    early = False
    while state.step < end:
        if not state.active.any():
            early = True
            break
        c_before = state.field.c.copy() if monitor is not None else None
        rep = engine.step(state)
        traj.observe(state, rep)
        if monitor is not None:
            monitor(state, rep, c_before)
        if rep.deaths and keep_segments:
            segments.append(state.copy())
        if stop_after_deaths is not None and len(state.events) >= stop_after_deaths:
            early = True
            break
    return RunResult(state, traj, early, segments)


def run_interlaced(params: ModelParams, init_positions=None, c0=None, killing: str = "clock",
                   record_every: int = 0, stop_after_deaths: Optional[int] = None,
                   monitor: Optional[Callable] = None, keep_segments: bool = False,
                   streams: Optional[RandomStreams] = None) -> RunResult:
    """Run from time zero to ``T`` across all killing times.

    After each death the remaining particles continue as the reduced system
    with the same normalization ``N_tilde`` and the same noise slots.
    """
    engine = Engine(params, streams, killing=killing)
    state = initial_state(params, engine.streams, init_positions, c0)
    return run_from_state(engine, state, record_every, stop_after_deaths, monitor=monitor,
                          keep_segments=keep_segments)


# ---------------------------------------------------------------------------
# shared-noise runs over decreasing regularization radii

@dataclass
class CoupledResult:
    """Per-level outcomes of a shared-noise study.

    ``branch_steps[j]`` is the step from which level ``j`` differs from
    level ``j - 1`` (``None`` if never), ``sup_distance[j-1]`` the largest
    particle displacement between those two levels over all steps.
    """

    eps_levels: List[float]
    min_gap: List[float]
    attained: List[bool]
    sup_distance: List[float]
    branch_steps: List[Optional[int]]
    final_positions: List[np.ndarray]
    paths: Optional[List[np.ndarray]] = None


def _level_run(engine: Engine, state: SystemState, watch: float, path: np.ndarray,
               gaps: np.ndarray) -> Optional[SystemState]:
    """Run to the horizon writing every configuration into ``path`` and every
    start-of-step gap into ``gaps``.  Returns the first start-of-step state
    whose gap is below ``watch`` (``None`` if there is none)."""
    snap = None
    path[state.step] = state.positions
    while state.step < engine.n_steps:
        k = state.step
        rep = engine.step(state, snapshot_below=watch if snap is None else None)
        if rep.snapshot is not None:
            snap = rep.snapshot
        gaps[k] = rep.min_pair_distance
        path[state.step] = state.positions
    return snap


def _sup_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.sqrt(np.sum((a - b) ** 2, axis=-1))))


def run_coupled_epsilons(params: ModelParams, eps_levels, init_positions=None, c0=None,
                         branching: bool = True, keep_paths: bool = False,
                         streams: Optional[RandomStreams] = None) -> CoupledResult:
    """Identical initial data and Brownian increments at every ``eps`` level.

    With ``branching`` a level restarts from the previous level's state at
    the first step whose start configuration has a gap below the previous
    radius.  Before that step both regularized potentials agree on every
    realized pair, so the result is bit-identical to independent runs.
    """
    eps = [float(e) for e in eps_levels]
    if len(eps) < 1 or any(e <= 0 for e in eps):
        raise ValidationError("eps_levels", "levels must be positive")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValidationError("eps_levels", "levels must be strictly decreasing")
    if params.lam_tilde != 0.0:
        raise ValidationError("lam_tilde", "coupled regularization runs require lam_tilde = 0")
    for e in eps:
        validate_params(params.replace(epsilon=e))
    base = Engine(params.replace(epsilon=eps[0]), streams)
    start = initial_state(base.params, base.streams, init_positions, c0)
    n = base.n_steps
    paths, gap_series, snaps, branch = [], [], [], []
    for j, e in enumerate(eps):
        eng = base if j == 0 else base.with_epsilon(e)
        if j == 0 or not branching:
            path = np.empty((n + 1,) + start.positions.shape)
            gaps = np.empty(n)
            snaps.append(_level_run(eng, start.copy(), e, path, gaps))
            branch.append(None if j == 0 else 0)
        elif snaps[-1] is None:
            # the previous level never came within its radius: same path
            path, gaps = paths[-1], gap_series[-1]
            snaps.append(None)
            branch.append(None)
        else:
            b = snaps[-1].step
            path = np.empty_like(paths[-1])
            gaps = np.empty(n)
            path[:b + 1] = paths[-1][:b + 1]
            gaps[:b] = gap_series[-1][:b]
            snaps.append(_level_run(eng, snaps[-1].copy(), e, path, gaps))
            branch.append(b)
        paths.append(path)
        gap_series.append(gaps)
    min_gap = []
    for path, gaps in zip(paths, gap_series):
        last = path[-1]
        diff = last[:, None, :] - last[None, :, :]
        d2 = np.sum(diff * diff, axis=-1)
        np.fill_diagonal(d2, np.inf)
        min_gap.append(float(min(np.min(gaps), np.sqrt(np.min(d2)))))
    sup = [_sup_distance(a, b) for a, b in zip(paths, paths[1:])]
    return CoupledResult(eps, min_gap, [g <= e for g, e in zip(min_gap, eps)], sup, branch,
                         [p[-1].copy() for p in paths], paths if keep_paths else None)
