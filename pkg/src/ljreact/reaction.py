"""Field-dependent killing by exponential clocks, with a per-step acceptance
variant kept for distributional cross-checks.

Particle ``i`` carries a unit-exponential clock ``zeta_i`` and the cumulative
hazard ``Lambda_i(t) = lam_tilde * int_0^t c(s, X_s^i) ds``.  It dies the
first time ``Lambda_i`` reaches ``zeta_i``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import AlreadyDeadError, InactiveError
from .model import ParticleState, RandomStreams, SystemState


@dataclass(frozen=True)
class DeathEvent:
    """One killing: particle index, interpolated time, step and hazard."""

    particle: int
    time: float
    step: int
    hazard_at_death: float


@dataclass
class EventLog:
    """Ordered record of killings.  ``tie_steps`` counts steps with more than
    one death, which can only happen because time is discrete."""

    events: List[DeathEvent] = field(default_factory=list)
    tie_steps: int = 0

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def __getitem__(self, k):
        return self.events[k]

    def append(self, ev: DeathEvent) -> None:
        if any(e.particle == ev.particle for e in self.events):
            raise AlreadyDeadError(f"particle {ev.particle} already has a death event")
        self.events.append(ev)

    def copy(self) -> "EventLog":
        return EventLog(list(self.events), self.tie_steps)

    @property
    def times(self) -> np.ndarray:
        return np.array([e.time for e in self.events])

    @property
    def hazards(self) -> np.ndarray:
        return np.array([e.hazard_at_death for e in self.events])

    @property
    def particles(self) -> np.ndarray:
        return np.array([e.particle for e in self.events], dtype=np.int64)

    def strictly_increasing(self) -> bool:
        t = self.times
        return bool(np.all(np.diff(t) > 0))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "particle", "time", "hazard_at_death"])
        for e in self.events:
            w.writerow([e.step, e.particle, repr(float(e.time)), repr(float(e.hazard_at_death))])
        return buf.getvalue()


# --- single-particle operations ------------------------------------------


def accumulate_hazard(p: ParticleState, grid, dt: float, lambda_tilde: float) -> ParticleState:
    """Add ``lambda_tilde * c(X) * dt`` to the particle's hazard."""
    if not p.active:
        raise InactiveError("cannot accumulate hazard on a dead particle")
    cv, _ = grid.values_at(np.asarray(p.position, dtype=float)[None, :])
    inc = lambda_tilde * max(float(cv[0]), 0.0) * dt
    return ParticleState(p.position, True, p.hazard + inc, p.clock)


def crossing_time(t_start: float, dt: float, clock, h_before, h_after):
    """Linear interpolation of the time at which the hazard reaches the clock."""
    span = h_after - h_before
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(span > 0, (clock - h_before) / span, 0.0)
    return t_start + dt * np.clip(frac, 0.0, 1.0)


def check_crossing(p: ParticleState, t_step_start: float, dt: float, hazard_before: float,
                   particle: int = 0, step: int = 0) -> Optional[DeathEvent]:
    """Death event if the hazard accumulated this step reached the clock."""
    if not p.active or p.hazard < p.clock:
        return None
    t = float(crossing_time(t_step_start, dt, p.clock, hazard_before, p.hazard))
    return DeathEvent(int(particle), t, int(step), float(p.hazard))


def kill(state: SystemState, ev: DeathEvent) -> SystemState:
    """Move particle ``ev.particle`` to the cemetery, in place, and log the event."""
    i = ev.particle
    if not state.active[i]:
        raise AlreadyDeadError(f"particle {i} is already dead")
    state.active[i] = False
    state.positions[i] = np.nan
    state.death_time[i] = ev.time
    state.hazard[i] = ev.hazard_at_death
    state.events.append(ev)
    return state


# --- per-step acceptance (Poisson random measure view) -------------------


def acceptance_deaths(uniforms, rates, dt: float):
    """Which particles die in a step of length ``dt`` and the offset of each
    death inside the step.

    A particle with rate ``r`` dies when ``U < 1 - exp(-r dt)``; the offset
    ``-log(1 - U)/r`` is then the first point of a rate-``r`` Poisson process,
    conditioned to fall in the step.
    """
    U = np.asarray(uniforms, dtype=float)
    r = np.asarray(rates, dtype=float)
    die = (r > 0) & (U < -np.expm1(-r * dt))
    with np.errstate(divide="ignore", invalid="ignore"):
        offset = np.where(die, -np.log1p(-U) / np.where(r > 0, r, 1.0), np.inf)
    return die, np.minimum(offset, dt)


def prm_step_acceptance(state: SystemState, grid, dt: float, lambda_tilde: float,
                        streams: RandomStreams) -> List[DeathEvent]:
    """Deaths of the current step under the per-step acceptance rule.

    Each active particle dies independently with probability
    ``1 - exp(-lambda_tilde * c(X) * dt)``.  The state is not modified.
    """
    rows = np.flatnonzero(state.active)
    if lambda_tilde == 0.0 or len(rows) == 0:
        return []
    cv, _ = grid.values_at(state.positions[rows])
    rates = lambda_tilde * np.maximum(cv, 0.0)
    U = streams.acceptance(state.step)[state.ids[rows]]
    die, offset = acceptance_deaths(U, rates, dt)
    out = []
    for k in np.flatnonzero(die):
        i = int(rows[k])
        out.append(DeathEvent(i, state.time + float(offset[k]), state.step,
                              float(state.hazard[i] + rates[k] * offset[k])))
    out.sort(key=lambda e: (e.time, e.particle))
    return out


__all__ = [
    "DeathEvent", "EventLog", "accumulate_hazard", "check_crossing", "crossing_time", "kill",
    "acceptance_deaths", "prm_step_acceptance",
]
