"""Mollifier, regularized empirical density and the depletable field.

The field ``c`` lives on a regular Cartesian grid.  Each step applies the
exact solution of the node ODE ``dc/dt = -lam * c * u`` with the density
frozen at its left-endpoint value, so ``0 <= c <= m0`` holds exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np
from scipy import special

from . import _kernels


@dataclass(frozen=True)
class Mollifier:
    """Truncated Gaussian bump with unit mass.

    Parameters
    ----------
    bandwidth : float
        Standard deviation ``delta`` of the Gaussian.
    cutoff : float
        Support radius (absolute units).
    d : int
        Space dimension.
    """

    bandwidth: float
    cutoff: float
    d: int

    @classmethod
    def from_params(cls, p) -> "Mollifier":
        return cls(p.kernel_bandwidth, p.kernel_cutoff * p.kernel_bandwidth, p.d)

    @cached_property
    def truncated_mass(self) -> float:
        """Mass of the untruncated Gaussian inside the support ball."""
        # P(chi^2_d <= (cutoff/bandwidth)^2)
        return float(special.gammainc(self.d / 2.0, 0.5 * (self.cutoff / self.bandwidth) ** 2))

    @cached_property
    def norm_const(self) -> float:
        gauss = (2.0 * math.pi * self.bandwidth**2) ** (-self.d / 2.0)
        return gauss / self.truncated_mass

    @cached_property
    def inv2bw2(self) -> float:
        return 1.0 / (2.0 * self.bandwidth**2)


def mollifier_eval(K: Mollifier, x) -> Union[float, np.ndarray]:
    """Kernel value ``K(x)``; ``x`` may be one point or an array of points."""
    y = np.asarray(x, dtype=float)
    single = y.ndim == 1
    y = np.atleast_2d(y)
    # same product order as the grid kernel so node values agree bitwise
    val = np.full(y.shape[0], K.norm_const)
    r2 = np.zeros(y.shape[0])
    for a in range(y.shape[1]):
        val = val * np.exp(-(y[:, a] * y[:, a]) * K.inv2bw2)
        r2 = r2 + y[:, a] * y[:, a]
    val = np.where(r2 <= K.cutoff**2, val, 0.0)
    return float(val[0]) if single else val


def empirical_density(K: Mollifier, state, x, norm: int, exclude: Optional[int] = None) -> float:
    """``(1/norm) * sum_j K(x - X^j)`` over active particles, ``j != exclude``."""
    if norm < 1:
        raise ValueError("norm must be >= 1")
    mask = state.active.copy()
    if exclude is not None:
        mask[exclude] = False
    if not mask.any():
        return 0.0
    diffs = np.asarray(x, dtype=float)[None, :] - state.positions[mask]
    return float(np.sum(mollifier_eval(K, diffs)) * (1.0 / norm))


ValueSpec = Union[float, Callable[[np.ndarray], np.ndarray]]


class FieldGrid:
    """Node values of the field ``c`` and the reference profile ``m0``.

    Nodes sit at ``lo + i * spacing``.  Outside the node box the field takes
    its undepleted value ``c_outside`` and the profile equals ``m0_outside``.
    """

    def __init__(self, lo, spacing: float, shape, c: np.ndarray, m0: np.ndarray,
                 c_outside: float, m0_outside: float, m0_bounds=None):
        self.lo = np.asarray(lo, dtype=float)
        self.spacing = float(spacing)
        self.shape = tuple(int(s) for s in shape)
        self.c = np.ascontiguousarray(c, dtype=float).reshape(self.shape)
        self.m0 = np.ascontiguousarray(m0, dtype=float).reshape(self.shape)
        self.c_outside = float(c_outside)
        self.m0_outside = float(m0_outside)
        if m0_bounds is None:
            m0_bounds = (min(float(self.m0.min()), self.m0_outside),
                         max(float(self.m0.max()), self.m0_outside))
        self.m0_bounds = tuple(float(b) for b in m0_bounds)
        # m0 is fixed for the lifetime of the grid
        m = self.m0
        same = m.size > 0 and m.min() == m.max() == self.m0_outside
        self.constant_m0 = float(self.m0_outside) if same else 0.0
        self._shape_arr = np.array(self.shape, dtype=np.int64)
        self._strides = np.array([int(np.prod(self.shape[a + 1:])) for a in range(self.d)],
                                 dtype=np.int64)

    @classmethod
    def build(cls, lo, hi, spacing: float, m0: ValueSpec = 1.0, c0: ValueSpec = None,
              c_outside: float = None, m0_outside: float = None, m0_bounds=None) -> "FieldGrid":
        """Grid over ``[lo, hi]`` with profile ``m0`` and initial field ``c0``.

        ``m0`` and ``c0`` are constants or functions of an ``(n, d)`` array of
        node coordinates.  ``c0`` defaults to ``m0``.
        """
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        shape = tuple(int(math.floor((h - l) / spacing + 1e-9)) + 1 for l, h in zip(lo, hi))
        axes = [l + np.arange(n) * spacing for l, n in zip(lo, shape)]
        pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        m0v = _evaluate(m0, pts)
        c0v = m0v.copy() if c0 is None else _evaluate(c0, pts)
        if np.any(c0v < 0) or np.any(c0v > m0v):
            raise ValueError("initial field must satisfy 0 <= c0 <= m0")
        if m0_outside is None:
            m0_outside = float(m0) if np.isscalar(m0) else float(m0v.max())
        if c_outside is None:
            if c0 is None:
                c_outside = m0_outside
            elif np.isscalar(c0):
                c_outside = float(c0)
            else:
                raise ValueError("c_outside is required when c0 is a function")
        return cls(lo, spacing, shape, c0v, m0v, c_outside, m0_outside, m0_bounds)

    @classmethod
    def from_params(cls, p, c0: ValueSpec = None) -> "FieldGrid":
        """Grid for the box of ``p``; ``c0`` defaults to ``c0_fraction * m0``."""
        m0 = reference_profile(p)
        if c0 is None:
            frac = p.c0_fraction
            c0 = p.m0_max * frac if np.isscalar(m0) else (lambda x: frac * m0(x))
            c_out = p.m0_max * frac
        else:
            c_out = float(c0) if np.isscalar(c0) else p.m0_max * p.c0_fraction
        return cls.build(p.lo, p.hi, p.grid_spacing, m0=m0, c0=c0, c_outside=c_out,
                         m0_outside=p.m0_max, m0_bounds=(p.m0_min, p.m0_max))

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def hi(self) -> np.ndarray:
        return self.lo + (np.array(self.shape) - 1) * self.spacing

    def axes(self) -> list:
        return [l + np.arange(n) * self.spacing for l, n in zip(self.lo, self.shape)]

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``(n_nodes, d)`` in C order."""
        grids = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def copy(self) -> "FieldGrid":
        return FieldGrid(self.lo, self.spacing, self.shape, self.c.copy(), self.m0.copy(),
                         self.c_outside, self.m0_outside, self.m0_bounds)

    def values_at(self, points) -> tuple:
        """Interpolated ``(c, m0)`` at an ``(n, d)`` array of points."""
        P = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
        if P.shape[1] != self.d:
            from .errors import DimensionMismatchError
            raise DimensionMismatchError(f"points have dimension {P.shape[1]}, grid {self.d}")
        return _kernels.field_values(P, self.c.ravel(), self.m0.ravel(), self.lo,
                                     self.spacing, self._shape_arr, self._strides,
                                     self.c_outside, self.m0_outside)


def _evaluate(spec: ValueSpec, pts: np.ndarray) -> np.ndarray:
    if callable(spec):
        return np.asarray(spec(pts), dtype=float).reshape(len(pts))
    return np.full(len(pts), float(spec))


def reference_profile(p) -> ValueSpec:
    """The profile ``m0``: constant when ``m0_min == m0_max``, otherwise a
    Gaussian dip from ``m0_max`` down to ``m0_min`` at the box centre."""
    if p.m0_min == p.m0_max:
        return float(p.m0_max)
    centre = 0.5 * (p.lo + p.hi)
    width = 0.25 * float(np.min(p.hi - p.lo))
    lo_v, hi_v = p.m0_min, p.m0_max

    def m0(x):
        r2 = np.sum((np.atleast_2d(x) - centre) ** 2, axis=1)
        return hi_v - (hi_v - lo_v) * np.exp(-r2 / (2.0 * width**2))

    return m0


def _deplete(grid: FieldGrid, K: Mollifier, positions, norm: int, lam_dt: float) -> np.ndarray:
    u = np.empty(grid.shape)
    X = _points(positions, grid.d)
    if len(X):
        _kernels.deplete(grid.c.reshape(-1), u.reshape(-1), X, grid.lo, grid.spacing,
                         grid._shape_arr, grid._strides, K.inv2bw2, K.norm_const, K.cutoff,
                         1.0 / norm, lam_dt)
    else:
        u[...] = 0.0
    return u


def density_on_grid(grid: FieldGrid, K: Mollifier, positions: np.ndarray, norm: int) -> np.ndarray:
    """Mollified density ``(1/norm) sum_j K(node - X^j)`` at every node."""
    return _deplete(grid, K, positions, norm, 0.0)


def deplete_with_density(grid: FieldGrid, K: Mollifier, positions: np.ndarray, norm: int,
                         dt: float, lam: float) -> np.ndarray:
    """Compute the node density of ``positions`` and apply one depletion step
    with it, in place.  Returns the density."""
    return _deplete(grid, K, positions, norm, lam * dt)


def apply_depletion(grid: FieldGrid, u: np.ndarray, dt: float, lam: float) -> None:
    """In place ``c <- c * exp(-lam * u * dt)`` for a frozen node density ``u``."""
    if lam == 0.0:
        return
    u = np.ascontiguousarray(u, dtype=float).reshape(-1)
    if u.size != grid.c.size:
        raise ValueError("density does not match the grid")
    _kernels.scale_by_exp(grid.c.reshape(-1), u, lam * dt)


def field_step(grid: FieldGrid, K: Mollifier, state, dt: float, lam: float, norm: int,
               inplace: bool = False) -> FieldGrid:
    """Advance the field by ``dt`` using the density of ``state``'s active particles.

    Returns the updated grid (a copy unless ``inplace``).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    out = grid if inplace else grid.copy()
    if lam == 0.0 or not state.active.any():
        return out
    deplete_with_density(out, K, state.positions[state.active], norm, dt, lam)
    return out


def field_at(grid: FieldGrid, x) -> float:
    """Multilinear interpolation of ``c`` at one point (outside rule beyond the box)."""
    cv, _ = grid.values_at(np.asarray(x, dtype=float)[None, :])
    return float(cv[0])


def m0_at(grid: FieldGrid, x) -> float:
    _, mv = grid.values_at(np.asarray(x, dtype=float)[None, :])
    return float(mv[0])


def gypsum(grid: FieldGrid) -> np.ndarray:
    """Converted material ``g = m0 - c`` at every node."""
    return grid.m0 - grid.c


def _points(positions, d) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(positions, dtype=float).reshape(-1, d))
