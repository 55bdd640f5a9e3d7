"""Environmental drift by deterministic quadrature over the ball ``B_R(x)``.

The drift at ``x`` is the integral over ``|z - x| <= R`` of
``(z - x)/|z - x| * (1 - c(z)/m0(z)) * exp(-|z - x|)``.  It pulls active
particles toward regions where the field has been depleted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionMismatchError

_SKIP_RADIUS = 1e-12


@dataclass(frozen=True)
class BallStencil:
    """Cells of a tensor grid on ``[-R, R]^d`` that meet the ball.

    Each cell is represented by its centre ``offsets[k]``; ``weights[k]`` is
    the volume of the cell inside the ball and ``kernel_vectors[k]`` the
    integral of ``exp(-|y|) y / |y|`` over that part, both computed by a
    finer midpoint rule.  The field is sampled once per cell.
    """

    R: float
    d: int
    resolution: int
    offsets: np.ndarray
    weights: np.ndarray
    kernel_vectors: np.ndarray

    @property
    def kernel_vectors_T(self) -> np.ndarray:
        return self._kvT

    def __post_init__(self):
        object.__setattr__(self, "_kvT", np.ascontiguousarray(self.kernel_vectors.T))

    @property
    def volume(self) -> float:
        return float(np.sum(self.weights))


#: Per-axis subdivisions for cells inside the ball and cells cut by its surface.
_SUBDIVISIONS = {1: (8, 256), 2: (4, 32), 3: (2, 8)}


def _cell_integrals(centres: np.ndarray, h: float, R: float, sub: int):
    """Volume inside the ball and kernel integral for each cell, by a
    ``sub^d`` midpoint rule; returns ``(weights, kernel_vectors)``."""
    n, d = centres.shape
    t = (np.arange(sub) + 0.5) / sub - 0.5
    local = np.stack([g.ravel() for g in np.meshgrid(*([t * h] * d), indexing="ij")], axis=1)
    w_sub = (h / sub) ** d
    weights = np.empty(n)
    kvec = np.empty((n, d))
    chunk = max(1, 2_000_000 // len(local))
    for s0 in range(0, n, chunk):
        y = centres[s0:s0 + chunk, None, :] + local[None, :, :]
        r = np.sqrt(np.sum(y * y, axis=-1))
        inside = r <= R
        weights[s0:s0 + chunk] = w_sub * np.count_nonzero(inside, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where((inside & (r > _SKIP_RADIUS)), np.exp(-r) / r, 0.0)
        kvec[s0:s0 + chunk] = w_sub * np.einsum("ns,nsa->na", g, y)
    return weights, kvec


def build_stencil(R: float, res: int, d: int) -> BallStencil:
    """Cut-cell midpoint rule on ``[-R, R]^d`` for integrals over the ball."""
    if res < 8:
        raise ValueError("resolution must be >= 8")
    h = 2.0 * R / res
    t = -R + (np.arange(res) + 0.5) * h
    grids = np.meshgrid(*([t] * d), indexing="ij")
    offsets = np.stack([g.ravel() for g in grids], axis=1)
    # nearest and farthest points of each cell from the centre of the ball
    near = np.sqrt(np.sum(np.maximum(np.abs(offsets) - 0.5 * h, 0.0) ** 2, axis=1))
    far = np.sqrt(np.sum((np.abs(offsets) + 0.5 * h) ** 2, axis=1))
    keep = near < R
    offsets = np.ascontiguousarray(offsets[keep])
    full = far[keep] <= R
    s_in, s_cut = _SUBDIVISIONS.get(d, (2, 8))
    weights = np.empty(len(offsets))
    kvec = np.empty_like(offsets)
    for mask, sub in ((full, s_in), (~full, s_cut)):
        weights[mask], kvec[mask] = _cell_integrals(offsets[mask], h, R, sub)
    # drop cells whose sampled part of the ball is empty
    used = weights > 0
    return BallStencil(float(R), int(d), int(res), np.ascontiguousarray(offsets[used]),
                       weights[used], np.ascontiguousarray(kvec[used]))


def stencil_from_params(p, res=None) -> BallStencil:
    return build_stencil(p.R, p.quad_res if res is None else res, p.d)


def ball_volume(R: float, d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * R**d


def stencil_lattice(stencil: BallStencil, grid) -> tuple:
    """Index data that lets the compiled kernel reuse one set of
    interpolation weights for all quadrature points of a particle.

    Returns ``(lin_off, node_lo, node_hi, phase, aligned, seg_lo, seg_hi)``;
    ``aligned`` is false when the offsets do not sit on the node lattice of
    ``grid``, and ``[seg_lo[s], seg_hi[s])`` are the runs of offsets whose
    nodes are consecutive in memory.
    """
    d = grid.d
    v = stencil.offsets / grid.spacing
    phase = v[0] - np.floor(v[0])
    n_k = np.rint(v - phase).astype(np.int64)
    aligned = bool(np.max(np.abs(v - n_k - phase)) < 1e-9)
    if not aligned:
        n_k = np.zeros_like(n_k)
    lin_off = np.ascontiguousarray(n_k @ grid._strides)
    breaks = np.flatnonzero(np.diff(lin_off) != 1) + 1
    seg_lo = np.concatenate([[0], breaks]).astype(np.int64)
    seg_hi = np.concatenate([breaks, [len(lin_off)]]).astype(np.int64)
    return (lin_off, n_k.min(axis=0).astype(np.int64), n_k.max(axis=0).astype(np.int64),
            np.ascontiguousarray(phase, dtype=float).reshape(d), aligned, seg_lo, seg_hi)


def constant_profile(grid) -> float:
    """The value of ``m0`` if it is constant everywhere, else 0."""
    return grid.constant_m0


def _drift_kernel(stencil, grid, X, lattice):
    return _kernels.env_drift(X, stencil.offsets, stencil.kernel_vectors_T, grid.c.reshape(-1),
                              grid.m0.reshape(-1), grid.lo, grid.spacing, grid._shape_arr,
                              grid._strides, grid.c_outside, grid.m0_outside, *lattice,
                              constant_profile(grid))


def environmental_drifts(stencil: BallStencil, grid, X, lattice=None) -> np.ndarray:
    """Drift at every row of ``X`` (all rows treated as active)."""
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
    if stencil.d != grid.d or X.shape[1] != grid.d:
        raise DimensionMismatchError(
            f"stencil d={stencil.d}, grid d={grid.d}, points d={X.shape[1]}")
    if X.shape[0] == 0:
        return np.zeros_like(X)
    if lattice is None:
        lattice = stencil_lattice(stencil, grid)
    return _drift_kernel(stencil, grid, X, lattice)


def environmental_drift(stencil: BallStencil, grid, x, active: bool = True) -> np.ndarray:
    """Drift on a particle at ``x``; exactly zero when the particle is inactive."""
    x = np.asarray(x, dtype=float)
    if stencil.d != grid.d or x.shape[-1] != grid.d:
        raise DimensionMismatchError(
            f"stencil d={stencil.d}, grid d={grid.d}, point d={x.shape[-1]}")
    if not active:
        return np.zeros(grid.d)
    return environmental_drifts(stencil, grid, x[None, :])[0]
