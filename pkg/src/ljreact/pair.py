"""Lennard-Jones potential, its C^2 regularization and the pairwise drift."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import optimize

from . import _kernels
from .errors import InactiveError, SingularError


@dataclass(frozen=True)
class LJKernel:
    """Lennard-Jones pair kernel ``V(x) = A|x|^-alpha - B|x|^-beta``.

    Inside the ball of radius ``epsilon`` the regularized potential is the
    quadratic Taylor polynomial in ``s = |x|^2`` of ``W(s) = A s^(-alpha/2) -
    B s^(-beta/2)`` around ``s = epsilon^2``; it matches value, gradient and
    Hessian on the sphere ``|x| = epsilon`` and is smooth at the origin.
    """

    A: float
    B: float
    alpha: float
    beta: float
    epsilon: float
    W0: float = field(init=False)
    W1: float = field(init=False)
    W2: float = field(init=False)

    def __post_init__(self):
        s = self.epsilon**2
        a2, b2 = self.alpha / 2.0, self.beta / 2.0
        W0 = self.A * s**-a2 - self.B * s**-b2
        W1 = -a2 * self.A * s ** (-a2 - 1) + b2 * self.B * s ** (-b2 - 1)
        W2 = (a2 * (a2 + 1) * self.A * s ** (-a2 - 2)
              - b2 * (b2 + 1) * self.B * s ** (-b2 - 2))
        object.__setattr__(self, "W0", W0)
        object.__setattr__(self, "W1", W1)
        object.__setattr__(self, "W2", W2)

    @classmethod
    def from_params(cls, p, epsilon=None) -> "LJKernel":
        return cls(p.A, p.B, p.alpha, p.beta, p.epsilon if epsilon is None else epsilon)

    @property
    def r_star(self) -> float:
        return (self.alpha * self.A / (self.beta * self.B)) ** (1.0 / (self.alpha - self.beta))

    def kernel_args(self):
        """Positional constants for the compiled drift kernel."""
        return self._kernel_args

    @cached_property
    def _kernel_args(self):
        a2, b2 = self.alpha / 2.0, self.beta / 2.0
        use_int = a2 == int(a2) and b2 == int(b2) and a2 >= 0 and b2 >= 0
        return (float(self.A), float(self.B), a2, b2, int(a2) if use_int else 0,
                int(b2) if use_int else 0, bool(use_int), float(self.epsilon**2),
                float(self.W1), float(self.W2))

    # radial profile p(r) = A r^-alpha - B r^-beta and derivatives
    def _p1(self, r):
        return -self.alpha * self.A * r ** (-self.alpha - 1) + self.beta * self.B * r ** (-self.beta - 1)

    def _p2(self, r):
        return (self.alpha * (self.alpha + 1) * self.A * r ** (-self.alpha - 2)
                - self.beta * (self.beta + 1) * self.B * r ** (-self.beta - 2))

    def _W1(self, s):
        a2, b2 = self.alpha / 2.0, self.beta / 2.0
        return -a2 * self.A * s ** (-a2 - 1) + b2 * self.B * s ** (-b2 - 1)

    def _W2(self, s):
        a2, b2 = self.alpha / 2.0, self.beta / 2.0
        return a2 * (a2 + 1) * self.A * s ** (-a2 - 2) - b2 * (b2 + 1) * self.B * s ** (-b2 - 2)


def _sq(x):
    x = np.asarray(x, dtype=float)
    return x, np.sum(x * x, axis=-1)


def _nonzero(s):
    if np.any(s == 0.0):
        raise SingularError("Lennard-Jones kernel evaluated at exact overlap |x| = 0", distance=0.0)


def lj_value(k: LJKernel, x):
    """``A|x|^-alpha - B|x|^-beta``."""
    x, s = _sq(x)
    _nonzero(s)
    return k.A * s ** (-k.alpha / 2) - k.B * s ** (-k.beta / 2)


def lj_force(k: LJKernel, x):
    """``F(x) = -grad V(x) = (alpha A |x|^(-alpha-2) - beta B |x|^(-beta-2)) x``."""
    x, s = _sq(x)
    _nonzero(s)
    coef = k.alpha * k.A * s ** (-k.alpha / 2 - 1) - k.beta * k.B * s ** (-k.beta / 2 - 1)
    return np.asarray(coef)[..., None] * x


def lj_laplacian(k: LJKernel, x):
    """Laplacian of the radial potential, ``p''(r) + (d-1) p'(r) / r``."""
    x, s = _sq(x)
    _nonzero(s)
    d = x.shape[-1]
    r = np.sqrt(s)
    return k._p2(r) + (d - 1) * k._p1(r) / r


def _reg_gprime(k, s):
    inside = s < k.epsilon**2
    s_out = np.where(inside, k.epsilon**2, s)
    return np.where(inside, k.W1 + k.W2 * (s - k.epsilon**2), k._W1(s_out))


def regularized_value(k: LJKernel, x):
    """``V_eps(x)``: equal to ``V`` for ``|x| >= epsilon``, quadratic in ``|x|^2`` inside."""
    x, s = _sq(x)
    eps2 = k.epsilon**2
    inside = s < eps2
    s_out = np.where(inside, eps2, s)
    outer = k.A * s_out ** (-k.alpha / 2) - k.B * s_out ** (-k.beta / 2)
    ds = s - eps2
    inner = k.W0 + k.W1 * ds + 0.5 * k.W2 * ds * ds
    return np.where(inside, inner, outer)


def regularized_force(k: LJKernel, x):
    """``-grad V_eps(x)``; defined everywhere, zero at the origin."""
    x, s = _sq(x)
    return -2.0 * np.asarray(_reg_gprime(k, s))[..., None] * x


def regularized_hessian(k: LJKernel, x):
    """Hessian of ``V_eps`` at a single point ``x``."""
    x = np.asarray(x, dtype=float)
    s = float(x @ x)
    d = x.shape[0]
    if s < k.epsilon**2:
        g1 = k.W1 + k.W2 * (s - k.epsilon**2)
        g2 = k.W2
    else:
        g1 = k._W1(s)
        g2 = k._W2(s)
    return 2.0 * g1 * np.eye(d) + 4.0 * g2 * np.outer(x, x)


def tail_cutoff(k: LJKernel, tol: float) -> float:
    """Radius beyond which the pair force magnitude stays below ``tol``."""
    # |p'| decreases monotonically past the inflection point of p
    r_infl = ((k.alpha * (k.alpha + 1) * k.A) / (k.beta * (k.beta + 1) * k.B)) ** (
        1.0 / (k.alpha - k.beta))
    if abs(k._p1(r_infl)) <= tol:
        return r_infl
    hi = 2.0 * r_infl
    while abs(k._p1(hi)) > tol:
        hi *= 2.0
    return optimize.brentq(lambda r: abs(k._p1(r)) - tol, r_infl, hi, xtol=1e-12, rtol=1e-14)


@dataclass
class PairResult:
    drift: np.ndarray
    nearest2: np.ndarray
    nearest: np.ndarray

    @property
    def min_distance(self) -> float:
        if len(self.nearest2) == 0:
            return np.inf
        return float(np.sqrt(np.min(self.nearest2)))


def pairwise_drifts(k: LJKernel, X: np.ndarray, norm: int, cutoff: float = np.inf,
                    use_cells=None) -> PairResult:
    """Pairwise drift of every row of ``X`` (all rows treated as active).

    Neighbours come from a cell list of size ``cutoff`` unless the cutoff
    spans the whole configuration, in which case all pairs are visited.
    Either way each row sums its neighbours in ascending index order.
    """
    X = np.ascontiguousarray(X, dtype=float)
    n = X.shape[0]
    if n == 0:
        return PairResult(np.zeros_like(X), np.zeros(0), np.zeros(0, dtype=np.int64))
    if use_cells is None:
        extent = float(np.linalg.norm(X.max(axis=0) - X.min(axis=0))) if n > 1 else 0.0
        use_cells = np.isfinite(cutoff) and extent >= cutoff
    if use_cells:
        ptr, idx = _kernels.cell_neighbors(X, float(cutoff))
    else:
        ptr = np.zeros(1, dtype=np.int64)
        idx = np.zeros(0, dtype=np.int64)
    cut2 = float(cutoff) ** 2 if np.isfinite(cutoff) else np.inf
    drift, near2, near = _kernels.pair_drift(X, *k.kernel_args(), 1.0 / norm, cut2,
                                             not use_cells, ptr, idx)
    return PairResult(drift, near2, near)


def pairwise_drift(k: LJKernel, i: int, state, norm: int, cutoff: float = np.inf):
    """Drift ``-(1/norm) sum_{j active, j != i} grad V_eps(X^i - X^j)`` on particle ``i``."""
    if not state.active[i]:
        raise InactiveError(f"particle {i} is not active")
    rows = np.flatnonzero(state.active)
    res = pairwise_drifts(k, state.positions[rows], norm, cutoff)
    return res.drift[int(np.searchsorted(rows, i))]
