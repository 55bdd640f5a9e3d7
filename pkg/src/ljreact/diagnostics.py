"""Numerical and statistical checks of the model's structural properties.

Every check records its measured values, its tolerance and its sample size
in a :class:`Check`; a :class:`DiagnosticsReport` collects them and
serializes to JSON.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from .envdrift import BallStencil, ball_volume, build_stencil, environmental_drifts
from .errors import InsufficientSamplesError, SingularError
from .field import FieldGrid
from .model import ModelParams
from .pair import LJKernel, lj_force, lj_laplacian


# ---------------------------------------------------------------------------
# report types

def _plain(x):
    """JSON-safe copy of ``x``: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


@dataclass
class Check:
    """Outcome of one check.

    ``tolerance`` must always be given explicitly; ``property`` says in
    plain words what is being tested.
    """

    name: str
    passed: bool
    measured: Dict[str, object]
    tolerance: Dict[str, object]
    sample_size: int
    property: str
    seed: Optional[int] = None
    runtime_s: Optional[float] = None

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        shown = ", ".join(f"{k}={_short(v)}" for k, v in self.measured.items())
        return f"{verdict} {self.name}: {shown} (n={self.sample_size})"


def _short(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    if isinstance(v, (list, tuple, np.ndarray)) and len(v) <= 6:
        return "[" + ", ".join(str(_short(u)) for u in v) + "]"
    if isinstance(v, (list, tuple, np.ndarray)):
        return f"<{len(v)} values>"
    return str(v)


@dataclass
class DiagnosticsReport:
    checks: List[Check] = field(default_factory=list)

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def extend(self, other: "DiagnosticsReport") -> None:
        self.checks.extend(other.checks)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self, runtimes: bool = False) -> dict:
        """Plain-value form.  Runtimes are left out unless asked for, so a
        fixed seed gives identical documents."""
        checks = []
        for c in self.checks:
            entry = _plain(asdict(c))
            if not runtimes:
                entry.pop("runtime_s")
            checks.append(entry)
        return {"passed": self.passed, "checks": checks}

    def to_json(self, indent: int = 2, runtimes: bool = False) -> str:
        return json.dumps(self.to_dict(runtimes), indent=indent, sort_keys=False)

    def summary(self) -> str:
        return "\n".join(c.line() for c in self.checks)


# ---------------------------------------------------------------------------
# generator of the interaction potential

def _pair_terms(X: np.ndarray, kernel: LJKernel):
    n = len(X)
    iu, ju = np.triu_indices(n, 1)
    diff = X[iu] - X[ju]
    if np.any(np.sum(diff * diff, axis=1) == 0.0):
        raise SingularError("configuration has two coincident particles", distance=0.0)
    return iu, ju, diff


def potential_energy(config, params: ModelParams) -> float:
    """``Phi(x) = (1/N_tilde) sum_{i<j} V(x^i - x^j)``."""
    X = np.asarray(config, dtype=float).reshape(-1, params.d)
    k = LJKernel.from_params(params)
    _, _, diff = _pair_terms(X, k)
    r2 = np.sum(diff * diff, axis=1)
    V = k.A * r2 ** (-k.alpha / 2) - k.B * r2 ** (-k.beta / 2)
    return float(np.sum(V) / params.norm)


def potential_gradient(config, params: ModelParams) -> np.ndarray:
    """``grad Phi`` as an ``(n, d)`` array, row ``i`` being ``d Phi / d x^i``."""
    X = np.asarray(config, dtype=float).reshape(-1, params.d)
    k = LJKernel.from_params(params)
    iu, ju, diff = _pair_terms(X, k)
    gV = -lj_force(k, diff)
    grad = np.zeros_like(X)
    np.add.at(grad, iu, gV)
    np.add.at(grad, ju, -gV)
    return grad / params.norm


def lyapunov_probe(config, params: ModelParams, grid: Optional[FieldGrid] = None,
                   stencil: Optional[BallStencil] = None, parts: bool = False):
    """Generator of the interaction potential at one configuration,
    ``L Phi = -|grad Phi|^2 + (sigma^2 / 2) Lap Phi + mu . grad Phi``.

    ``mu`` stacks the environmental drifts at the particle positions for the
    field ``grid`` (by default the initial field of ``params``, on which it
    vanishes when ``c0_fraction`` is 1).  With ``parts`` the three terms are
    returned as a dict alongside the total.
    """
    X = np.asarray(config, dtype=float).reshape(-1, params.d)
    k = LJKernel.from_params(params)
    iu, ju, diff = _pair_terms(X, k)
    grad = potential_gradient(X, params)
    # each pair enters the Laplacian through both of its particles
    lap = 2.0 * float(np.sum(lj_laplacian(k, diff))) / params.norm
    if grid is None:
        grid = FieldGrid.from_params(params)
    if stencil is None:
        stencil = build_stencil(params.R, params.quad_res, params.d)
    mu = environmental_drifts(stencil, grid, X)
    terms = {
        "grad_sq": -float(np.sum(grad * grad)),
        "diffusion": 0.5 * params.sigma**2 * lap,
        "drift": float(np.sum(mu * grad)),
    }
    total = terms["grad_sq"] + terms["diffusion"] + terms["drift"]
    return (total, terms) if parts else total


def collision_path(params: ModelParams, fractions=(0.5, 0.3, 0.2, 0.15, 0.1),
                   others=None) -> list:
    """Configurations in which particles 0 and 1 sit at ``f * r_star`` for
    each ``f`` in ``fractions`` and the remaining particles stay fixed."""
    d = params.d
    e = np.zeros(d)
    e[0] = 1.0
    rest = np.zeros((0, d)) if others is None else np.asarray(others, dtype=float).reshape(-1, d)
    out = []
    for f in fractions:
        r = f * params.r_star
        pair = np.stack([-0.5 * r * e, 0.5 * r * e])
        out.append(np.concatenate([pair, rest]))
    return out


# ---------------------------------------------------------------------------
# collision frequencies

@dataclass
class CollisionStats:
    """Per-level fraction of runs whose smallest active gap reached the level."""

    eps_levels: List[float]
    counts: List[int]
    n_runs: int
    frequency: List[float]
    ci_low: List[float]
    ci_high: List[float]
    singular: int = 0
    confidence: float = 0.95

    @property
    def nonincreasing(self) -> bool:
        """Frequencies never grow as the level shrinks."""
        order = np.argsort(self.eps_levels)[::-1]
        f = np.asarray(self.frequency)[order]
        return bool(np.all(np.diff(f) <= 0))


def _gaps_per_level(item, n_levels: int) -> np.ndarray:
    if hasattr(item, "eps_levels") and hasattr(item, "min_gap"):
        gaps = np.asarray(item.min_gap, dtype=float)
        if len(gaps) != n_levels:
            raise ValueError("coupled result has a different number of levels")
        return gaps
    g = float(item.min_gap) if hasattr(item, "min_gap") else float(item)
    return np.full(n_levels, g)


def collision_statistics(trajectories: Sequence, eps_levels: Sequence[float],
                         confidence: float = 0.95, min_runs: int = 30,
                         singular: int = 0) -> CollisionStats:
    """Fraction of runs with smallest active gap ``<= eps`` for every level.

    ``trajectories`` holds one entry per independent run: a run result with
    a ``min_gap`` attribute, a coupled result (level ``j`` read from its own
    path) or a bare minimum gap.  Runs that ended in an exact overlap are
    counted in ``singular`` and not included in the frequencies.  Intervals
    are Wilson score intervals.
    """
    eps = [float(e) for e in eps_levels]
    n = len(trajectories)
    if n < min_runs:
        raise InsufficientSamplesError(min_runs, n)
    gaps = np.stack([_gaps_per_level(t, len(eps)) for t in trajectories])
    counts, freq, lo, hi = [], [], [], []
    for j, e in enumerate(eps):
        k = int(np.count_nonzero(gaps[:, j] <= e))
        ci = stats.binomtest(k, n).proportion_ci(confidence_level=confidence, method="wilson")
        counts.append(k)
        freq.append(k / n)
        lo.append(float(ci.low))
        hi.append(float(ci.high))
    return CollisionStats(eps, counts, n, freq, lo, hi, int(singular), confidence)


# ---------------------------------------------------------------------------
# hazard at death against the unit exponential

@dataclass
class KSResult:
    statistic: float
    pvalue: float
    n: int
    alpha: float

    @property
    def passed(self) -> bool:
        return self.pvalue > self.alpha


def _hazards(events) -> np.ndarray:
    if isinstance(events, np.ndarray):
        return events.astype(float).ravel()
    if hasattr(events, "hazards"):
        return np.asarray(events.hazards, dtype=float)
    parts = [_hazards(e) if not isinstance(e, (float, int, np.floating)) else np.array([e])
             for e in events]
    return np.concatenate(parts) if parts else np.zeros(0)


def hazard_timechange_test(events, alpha: float = 0.01, min_deaths: int = 1000) -> KSResult:
    """One-sample KS test of the hazards recorded at death against Exp(1).

    ``events`` is an event log, a list of logs or an array of hazards.
    """
    h = _hazards(events)
    if len(h) < min_deaths:
        raise InsufficientSamplesError(min_deaths, len(h))
    res = stats.kstest(h, "expon")
    return KSResult(float(res.statistic), float(res.pvalue), len(h), alpha)


# ---------------------------------------------------------------------------
# estimates of the environmental drift

def random_admissible_fields(template: FieldGrid, n: int, seed: int) -> List[FieldGrid]:
    """``n`` fields on the nodes of ``template`` with ``0 <= c <= m0``.

    Cycles through independent nodewise values, sharp half-space depletion
    in a random direction and smooth sums of random bumps, so that both
    rough and structured fields are covered.
    """
    rng = np.random.default_rng(seed)
    nodes = template.nodes()
    m0 = template.m0.reshape(-1)
    centre = 0.5 * (template.lo + template.hi)
    span = float(np.min(template.hi - template.lo))
    out = []
    for k in range(n):
        kind = k % 3
        if kind == 0:
            frac = rng.random(len(nodes))
        elif kind == 1:
            v = rng.standard_normal(template.d)
            v /= np.linalg.norm(v)
            off = centre + (rng.random(template.d) - 0.5) * 0.5 * span
            frac = np.where((nodes - off) @ v > 0, rng.random() * 0.1, 1.0 - rng.random() * 0.1)
        else:
            frac = np.zeros(len(nodes))
            for _ in range(4):
                c = template.lo + rng.random(template.d) * (template.hi - template.lo)
                w = 0.3 + rng.random() * 1.5
                frac += rng.random() * np.exp(-np.sum((nodes - c) ** 2, axis=1) / (2 * w * w))
            frac = np.clip(1.0 - frac, 0.0, 1.0)
        c_out = float(rng.random() * template.m0_outside)
        out.append(FieldGrid(template.lo, template.spacing, template.shape, frac * m0,
                             template.m0, c_out, template.m0_outside, template.m0_bounds))
    return out


def _field_distance(a: FieldGrid, b: FieldGrid) -> float:
    return max(float(np.max(np.abs(a.c - b.c))), abs(a.c_outside - b.c_outside))


def drift_estimates_suite(stencil: BallStencil, fields: Sequence[FieldGrid], points: np.ndarray,
                          m0_lower: float, tol: float = 1e-3, space_pairs: int = 1000,
                          space_step: float = 0.05, stability_factor: float = 2.0,
                          seed: int = 0) -> DiagnosticsReport:
    """Uniform bound, Lipschitz continuity in the field and in space of the
    environmental drift.

    Parameters
    ----------
    stencil : BallStencil
    fields : sequence of FieldGrid
        Admissible fields; field ``k`` is evaluated at ``points[k % len(points)]``.
    points : (n, d) array
    m0_lower : float
        Lower bound of the reference profile entering the Lipschitz constant.
    tol : float
        Additive tolerance of the bound and field-Lipschitz checks.
    space_pairs, space_step : int, float
        Number of point pairs and their largest separation for the spatial ratio.
    stability_factor : float
        Allowed ratio between the spatial constants at the stencil resolution
        and at twice that resolution.
    """
    report = DiagnosticsReport()
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    vol = ball_volume(stencil.R, stencil.d)
    G = np.stack([environmental_drifts(stencil, f, pts[k % len(pts)][None, :])[0]
                  for k, f in enumerate(fields)])
    norms = np.sqrt(np.sum(G * G, axis=1))
    report.add(Check(
        "drift_bound", bool(np.max(norms) <= vol + tol),
        {"max_norm": float(np.max(norms)), "ball_volume": vol},
        {"bound": vol, "additive": tol}, len(fields),
        "environmental drift is bounded by the volume of the interaction ball", seed))

    ratios = []
    for k in range(len(fields) - 1):
        a, b = fields[k], fields[k + 1]
        x = pts[k % len(pts)][None, :]
        dist = _field_distance(a, b)
        if dist == 0.0:
            continue
        ga = environmental_drifts(stencil, a, x)[0]
        gb = environmental_drifts(stencil, b, x)[0]
        ratios.append(float(np.linalg.norm(ga - gb)) / dist)
    bound = vol / m0_lower
    rmax = max(ratios) if ratios else 0.0
    report.add(Check(
        "field_lipschitz", bool(rmax <= bound + tol),
        {"max_ratio": rmax, "constant": bound}, {"bound": bound, "additive": tol}, len(ratios),
        "drift is Lipschitz in the field with constant |B_R| / m0_lower", seed))

    rng = np.random.default_rng(seed)
    fine = build_stencil(stencil.R, 2 * stencil.resolution, stencil.d)
    consts = []
    n_eval = 0
    for st in (stencil, fine):
        best = 0.0
        for q in range(space_pairs):
            f = fields[q % len(fields)]
            x = pts[q % len(pts)]
            v = rng.standard_normal(len(x))
            y = x + v / np.linalg.norm(v) * space_step * (0.1 + 0.9 * rng.random())
            g = environmental_drifts(st, f, np.stack([x, y]))
            best = max(best, float(np.linalg.norm(g[0] - g[1]) / np.linalg.norm(x - y)))
            n_eval += 1
        consts.append(best)
        rng = np.random.default_rng(seed)
    stable = consts[0] > 0 and max(consts) / min(consts) <= stability_factor
    report.add(Check(
        "space_lipschitz", bool(np.all(np.isfinite(consts)) and stable),
        {"constant": consts[0], "constant_fine": consts[1]},
        {"resolution_ratio": stability_factor}, n_eval,
        "drift is Lipschitz in space; the empirical constant is finite and stable "
        "under doubling of the quadrature resolution", seed))
    return report


__all__ = [
    "Check", "CollisionStats", "DiagnosticsReport", "KSResult", "collision_path",
    "collision_statistics", "drift_estimates_suite", "hazard_timechange_test",
    "lyapunov_probe", "potential_energy", "potential_gradient", "random_admissible_fields",
]
