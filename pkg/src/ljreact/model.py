"""Shared domain types, parameter validation and the random-stream policy."""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import ValidationError

#: Default nodes per axis of the ball quadrature, by dimension.  Each value
#: reproduces the ball volume to better than 1e-3 relative error.
DEFAULT_QUAD_RES = {1: 64, 2: 28, 3: 60}

_MAX_SEED = 2**64


@dataclass(frozen=True)
class ModelParams:
    """Physical and numerical constants of one simulation.

    Optional fields left at ``None`` are derived: ``N_tilde`` defaults to
    ``N``, the box is sized from ``N`` and ``d``, the quadrature resolution
    comes from :data:`DEFAULT_QUAD_RES` and the minimum initial gap is the
    Lennard-Jones minimum radius.
    """

    A: float = 1.0
    B: float = 1.0
    alpha: float = 12.0
    beta: float = 6.0
    R: float = 1.0
    lam: float = 1.0
    lam_tilde: float = 1.0
    sigma: float = 0.2
    kernel_bandwidth: float = 0.2
    kernel_cutoff: float = 4.0
    epsilon: float = 0.05
    N: int = 50
    N_tilde: Optional[int] = None
    T: float = 1.0
    dt: float = 1e-4
    d: int = 2
    box_lo: Optional[tuple] = None
    box_hi: Optional[tuple] = None
    grid_spacing: float = 1.0 / 14.0
    drift_quadrature_res: Optional[int] = None
    m0_min: float = 1.0
    m0_max: float = 1.0
    c0_fraction: float = 1.0
    init_min_gap: Optional[float] = None
    tail_tolerance: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        for name in ("box_lo", "box_hi"):
            value = getattr(self, name)
            if value is not None and not isinstance(value, tuple):
                object.__setattr__(self, name, tuple(float(v) for v in np.atleast_1d(value)))

    # derived quantities -------------------------------------------------

    @property
    def r_star(self) -> float:
        """Radius of the Lennard-Jones minimum, (alpha A / (beta B))^(1/(alpha-beta))."""
        return (self.alpha * self.A / (self.beta * self.B)) ** (1.0 / (self.alpha - self.beta))

    @property
    def norm(self) -> int:
        """Normalization constant of the counting measure."""
        return self.N if self.N_tilde is None else self.N_tilde

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.T / self.dt - 1e-9))

    @property
    def quad_res(self) -> int:
        if self.drift_quadrature_res is not None:
            return self.drift_quadrature_res
        return DEFAULT_QUAD_RES.get(self.d, 28)

    @property
    def init_gap(self) -> float:
        return self.r_star if self.init_min_gap is None else self.init_min_gap

    def _default_half_width(self) -> float:
        # room for N particles at roughly 1.5 r* spacing, plus twice the drift
        # radius so balls of particles that drift outward stay on the grid
        side = (self.N * (1.5 * self.r_star) ** self.d) ** (1.0 / self.d)
        return float(math.ceil(0.5 * side + 2.0 * self.R))

    @property
    def lo(self) -> np.ndarray:
        if self.box_lo is not None:
            return np.asarray(self.box_lo, dtype=float)
        return np.full(self.d, -self._default_half_width())

    @property
    def hi(self) -> np.ndarray:
        if self.box_hi is not None:
            return np.asarray(self.box_hi, dtype=float)
        return np.full(self.d, self._default_half_width())

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        """Plain-value dict with ``None`` entries dropped."""
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out


def _require(cond, name, reason):
    if not cond:
        raise ValidationError(name, reason)


def validate_params(p: ModelParams) -> ModelParams:
    """Check every invariant of ``p`` and return it unchanged.

    Raises
    ------
    ValidationError
        Naming the first violated field.
    """
    for name in ("A", "B", "alpha", "beta"):
        _require(getattr(p, name) > 0, name, f"{name} must be positive")
    _require(p.alpha > p.beta, "alpha", "alpha must exceed beta")
    _require(p.R > 0, "R", "interaction radius must be positive")
    _require(p.lam >= 0, "lam", "depletion rate must be nonnegative")
    _require(p.lam_tilde >= 0, "lam_tilde", "hazard scale must be nonnegative")
    _require(p.sigma > 0, "sigma", "diffusion coefficient must be positive")
    _require(p.kernel_bandwidth > 0, "kernel_bandwidth", "bandwidth must be positive")
    _require(p.kernel_cutoff > 0, "kernel_cutoff", "cutoff must be positive")
    _require(p.epsilon > 0, "epsilon", "epsilon must be positive")
    r_star = p.r_star
    _require(p.epsilon < r_star, "epsilon",
             f"epsilon={p.epsilon!r} exceeds LJ minimum radius {r_star!r}")
    _require(isinstance(p.N, (int, np.integer)) and p.N >= 2, "N", "N must be an integer >= 2")
    if p.N_tilde is not None:
        _require(isinstance(p.N_tilde, (int, np.integer)) and p.N_tilde >= p.N,
                 "N_tilde", "N_tilde must be an integer >= N")
    _require(p.T > 0, "T", "horizon must be positive")
    _require(p.dt > 0, "dt", "step size must be positive")
    _require(p.dt < p.T, "dt", "step size must be smaller than the horizon")
    _require(p.d in (1, 2, 3), "d", "dimension must be 1, 2 or 3")
    for name in ("box_lo", "box_hi"):
        value = getattr(p, name)
        if value is not None:
            _require(len(value) == p.d, name, f"{name} must have {p.d} components")
    _require(bool(np.all(p.lo < p.hi)), "box_lo", "box_lo must be below box_hi componentwise")
    _require(p.grid_spacing > 0, "grid_spacing", "grid spacing must be positive")
    _require(bool(np.all(p.hi - p.lo >= p.grid_spacing)), "grid_spacing",
             "grid spacing exceeds the box width")
    _require(p.quad_res >= 8, "drift_quadrature_res", "quadrature resolution must be >= 8")
    _require(p.m0_min > 0, "m0_min", "reference profile must be uniformly positive")
    _require(p.m0_max >= p.m0_min, "m0_max", "m0_max must be >= m0_min")
    _require(0.0 <= p.c0_fraction <= 1.0, "c0_fraction", "c0_fraction must lie in [0, 1]")
    _require(p.init_gap >= 2 * p.epsilon, "init_min_gap", "initial gap must be at least 2 epsilon")
    _require(p.tail_tolerance > 0, "tail_tolerance", "tail tolerance must be positive")
    _require(isinstance(p.seed, (int, np.integer)) and 0 <= p.seed < _MAX_SEED,
             "seed", "seed must be an integer in [0, 2**64)")
    return p


# ---------------------------------------------------------------------------
# particle state


class _Cemetery:
    """Sentinel position of a removed particle."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "CEMETERY"

    def __reduce__(self):
        return (_Cemetery, ())


CEMETERY = _Cemetery()


@dataclass(frozen=True)
class ParticleState:
    """Snapshot of one particle: position (or CEMETERY), label and hazard."""

    position: object
    active: bool
    hazard: float
    clock: float
    death_time: Optional[float] = None

    def __post_init__(self):
        dead = self.position is CEMETERY
        if dead == self.active or dead != (self.death_time is not None):
            raise ValueError("active=False must coincide with CEMETERY position and a death time")


@dataclass
class SystemState:
    """Mutable state of the particle system, owned by one driver.

    Per-particle quantities are stored as arrays; dead particles carry NaN
    positions.  ``ids`` maps each row to its random-stream slot, which lets a
    reduced system reuse the noise of the full one.
    """

    time: float
    step: int
    positions: np.ndarray
    active: np.ndarray
    hazard: np.ndarray
    clock: np.ndarray
    death_time: np.ndarray
    ids: np.ndarray
    field: object
    events: object

    @property
    def n(self) -> int:
        return len(self.active)

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.active))

    def particle(self, i: int) -> ParticleState:
        if self.active[i]:
            return ParticleState(self.positions[i].copy(), True, float(self.hazard[i]),
                                 float(self.clock[i]))
        return ParticleState(CEMETERY, False, float(self.hazard[i]), float(self.clock[i]),
                             float(self.death_time[i]))

    @property
    def particles(self) -> list:
        return [self.particle(i) for i in range(self.n)]

    def copy(self) -> "SystemState":
        return SystemState(
            time=self.time,
            step=self.step,
            positions=self.positions.copy(),
            active=self.active.copy(),
            hazard=self.hazard.copy(),
            clock=self.clock.copy(),
            death_time=self.death_time.copy(),
            ids=self.ids.copy(),
            field=None if self.field is None else self.field.copy(),
            events=None if self.events is None else self.events.copy(),
        )

    def subset(self, rows) -> "SystemState":
        """A new state holding only ``rows`` (stream slots preserved)."""
        rows = np.asarray(rows)
        out = self.copy()
        for name in ("positions", "active", "hazard", "clock", "death_time", "ids"):
            setattr(out, name, getattr(self, name)[rows].copy())
        return out


# ---------------------------------------------------------------------------
# random streams


class Purpose(enum.IntEnum):
    BROWNIAN = 0
    CLOCK = 1
    INIT = 2
    ACCEPTANCE = 3


@lru_cache(maxsize=4096)
def _stream_key(master_seed: int, purpose: int) -> tuple:
    ss = np.random.SeedSequence(master_seed, spawn_key=(purpose,))
    return tuple(int(k) for k in ss.generate_state(2, np.uint64))


@dataclass(frozen=True)
class RandomStreams:
    """Counter-based streams derived from one master seed.

    Every ``(purpose, step, slot)`` triple addresses a fixed position of a
    Philox stream, so a variate never depends on evaluation order or on how
    many workers share the computation.  Per-step particle draws come in one
    block of ``width`` rows, row ``k`` belonging to stream slot ``k``.
    """

    master_seed: int
    width: int = 1
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def generator(self, purpose, step: int = 0, slot: int = 0) -> np.random.Generator:
        """A fresh generator positioned at ``(purpose, step, slot)``."""
        key = np.array(_stream_key(int(self.master_seed), int(purpose)), dtype=np.uint64)
        counter = np.array([0, slot, step, 0], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key, counter=counter))

    def _positioned(self, purpose, step: int) -> np.random.Generator:
        # reuse one bit generator per purpose; resetting the full state makes
        # the draws identical to those of a fresh generator()
        entry = self._cache.get(int(purpose))
        if entry is None:
            g = self.generator(purpose, step)
            self._cache[int(purpose)] = (g, g.bit_generator.state)
            return g
        g, st = entry
        st["state"]["counter"] = np.array([0, 0, step, 0], dtype=np.uint64)
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        st["uinteger"] = 0
        g.bit_generator.state = st
        return g

    def brownian(self, step: int, d: int) -> np.ndarray:
        """Standard normal increments of shape ``(width, d)`` for one step."""
        return self._positioned(Purpose.BROWNIAN, step).standard_normal((self.width, d))

    def acceptance(self, step: int) -> np.ndarray:
        """Uniforms on ``[0, 1)``, one per slot, for the per-step acceptance rule."""
        return self._positioned(Purpose.ACCEPTANCE, step).random(self.width)


def draw_clocks(streams: RandomStreams, N: int) -> np.ndarray:
    """``N`` unit-exponential clocks, entry ``i`` belonging to particle ``i``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    z = streams.generator(Purpose.CLOCK).standard_exponential(N)
    # a zero clock would kill at t=0; Exp(1) puts no mass there
    return np.where(z > 0.0, z, np.finfo(float).tiny)


def sample_initial_positions(p: ModelParams, streams: RandomStreams,
                             max_attempts: int = 200_000) -> np.ndarray:
    """Uniform positions in the box shrunk by ``2R`` (by ``R``, then not at
    all, when the box is too small for that) with a minimum pair gap."""
    rng = streams.generator(Purpose.INIT)
    for margin in (2.0 * p.R, p.R, 0.0):
        lo = p.lo + margin
        hi = p.hi - margin
        if np.all(hi > lo):
            break
    gap2 = p.init_gap ** 2
    pts = np.empty((p.N, p.d))
    count = 0
    for _ in range(max_attempts):
        cand = lo + (hi - lo) * rng.random(p.d)
        if count == 0 or np.min(np.sum((pts[:count] - cand) ** 2, axis=1)) >= gap2:
            pts[count] = cand
            count += 1
            if count == p.N:
                return pts
    raise ValidationError("init_min_gap", f"could not place {p.N} particles with gap "
                          f"{p.init_gap} in the box after {max_attempts} draws")
