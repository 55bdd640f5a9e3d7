"""Compiled inner loops.

Each parallel loop writes only to its own output row and accumulates in a
fixed order, so results do not depend on the number of threads.  Every
kernel is compiled twice, serially and with ``parallel=True``; the serial
build is used when numba is configured with a single thread, where it
avoids the scheduling overhead.
"""

import math
import types

import numba
import numpy as np
from numba import njit, prange


_MULTI = numba.config.NUMBA_NUM_THREADS > 1


class _Dual:
    """Serial and parallel builds of one kernel, chosen by thread count."""

    def __init__(self, fn, **options):
        twin = types.FunctionType(fn.__code__, fn.__globals__, fn.__name__ + "_serial",
                                  fn.__defaults__, fn.__closure__)
        twin.__qualname__ = fn.__qualname__ + "_serial"
        self.serial = njit(cache=True, **options)(twin)
        self.parallel = njit(cache=True, parallel=True, **options)(fn)
        self.__doc__ = fn.__doc__
        self.__name__ = fn.__name__

    def __call__(self, *args):
        if _MULTI and numba.get_num_threads() > 1:
            return self.parallel(*args)
        return self.serial(*args)


def dual(**options):
    def wrap(fn):
        return _Dual(fn, **options)
    return wrap


@njit(cache=True, inline="always")
def _ipow(x, n):
    r = 1.0
    while n > 0:
        if n & 1:
            r *= x
        x *= x
        n >>= 1
    return r


@njit(cache=True, inline="always")
def _gprime(s, A, B, a2, b2, ia2, ib2, use_int, eps2, W1, W2):
    """Derivative in s=|x|^2 of the regularized potential."""
    if s >= eps2:
        inv = 1.0 / s
        if use_int:
            ta = _ipow(inv, ia2 + 1)
            tb = _ipow(inv, ib2 + 1)
        else:
            ta = inv ** (a2 + 1.0)
            tb = inv ** (b2 + 1.0)
        return -a2 * A * ta + b2 * B * tb
    return W1 + W2 * (s - eps2)


@njit(cache=True)
def cell_neighbors(X, rc):
    """CSR neighbour lists (ascending indices) from a cell list of size ``rc``."""
    n, d = X.shape
    lo = np.empty(d)
    span = np.empty(d)
    ncell = np.empty(d, dtype=np.int64)
    for a in range(d):
        mn = X[0, a]
        mx = X[0, a]
        for i in range(n):
            mn = min(mn, X[i, a])
            mx = max(mx, X[i, a])
        lo[a] = mn
        span[a] = mx - mn
    # cells larger than the cutoff still give a superset of the neighbours;
    # grow them when a sparse, spread-out configuration would need too many
    limit = max(4096, 8 * n)
    while True:
        total = 1
        for a in range(d):
            ncell[a] = max(1, int(min(span[a] / rc, 1e9)) + 1)
            total *= ncell[a]
        if total <= limit:
            break
        rc *= 2.0
    cell = np.empty(n, dtype=np.int64)
    coords = np.empty((n, d), dtype=np.int64)
    for i in range(n):
        lin = 0
        for a in range(d):
            ci = min(int((X[i, a] - lo[a]) / rc), ncell[a] - 1)
            coords[i, a] = ci
            lin = lin * ncell[a] + ci
        cell[i] = lin
    order = np.argsort(cell, kind="mergesort")
    start = np.zeros(total + 1, dtype=np.int64)
    for i in range(n):
        start[cell[i] + 1] += 1
    for c in range(total):
        start[c + 1] += start[c]
    nstencil = 3 ** d
    ptr = np.zeros(n + 1, dtype=np.int64)
    for sweep in range(2):
        if sweep == 1:
            for i in range(n):
                ptr[i + 1] += ptr[i]
            idx = np.empty(ptr[n], dtype=np.int64)
        else:
            idx = np.empty(0, dtype=np.int64)
        for i in range(n):
            m = 0
            for code in range(nstencil):
                lin = 0
                ok = True
                rem = code
                for a in range(d):
                    off = rem % 3 - 1
                    rem //= 3
                    ca = coords[i, a] + off
                    if ca < 0 or ca >= ncell[a]:
                        ok = False
                        break
                    lin = lin * ncell[a] + ca
                if not ok:
                    continue
                for q in range(start[lin], start[lin + 1]):
                    j = order[q]
                    if j != i:
                        if sweep == 1:
                            idx[ptr[i] + m] = j
                        m += 1
            if sweep == 0:
                ptr[i + 1] = m
            else:
                idx[ptr[i]:ptr[i + 1]] = np.sort(idx[ptr[i]:ptr[i + 1]])
    return ptr, idx


@dual()
def pair_drift(X, A, B, a2, b2, ia2, ib2, use_int, eps2, W1, W2, inv_norm, cut2,
               all_pairs, ptr, idx):
    """Drift -(1/norm) sum_j grad V_eps(X_i - X_j) and the nearest-neighbour
    squared distance of every row."""
    n, d = X.shape
    out = np.zeros((n, d))
    near2 = np.full(n, np.inf)
    near_j = np.full(n, -1, dtype=np.int64)
    for i in prange(n):
        x0 = X[i, 0]
        x1 = X[i, 1] if d > 1 else 0.0
        x2 = X[i, 2] if d > 2 else 0.0
        acc0 = 0.0
        acc1 = 0.0
        acc2 = 0.0
        best = np.inf
        bj = -1
        m = n if all_pairs else ptr[i + 1] - ptr[i]
        for q in range(m):
            if all_pairs:
                j = q
                if j == i:
                    continue
            else:
                j = idx[ptr[i] + q]
            dx0 = x0 - X[j, 0]
            s = dx0 * dx0
            dx1 = 0.0
            dx2 = 0.0
            if d > 1:
                dx1 = x1 - X[j, 1]
                s += dx1 * dx1
            if d > 2:
                dx2 = x2 - X[j, 2]
                s += dx2 * dx2
            if s < best:
                best = s
                bj = j
            if s >= cut2:
                continue
            g = _gprime(s, A, B, a2, b2, ia2, ib2, use_int, eps2, W1, W2)
            acc0 += dx0 * g
            acc1 += dx1 * g
            acc2 += dx2 * g
        out[i, 0] = -2.0 * inv_norm * acc0
        if d > 1:
            out[i, 1] = -2.0 * inv_norm * acc1
        if d > 2:
            out[i, 2] = -2.0 * inv_norm * acc2
        near2[i] = best
        near_j[i] = bj
    return out, near2, near_j


@njit(cache=True, inline="always")
def _interp(z, c, m0, lo, h, shape, strides, c_out, m_out, t):
    d = z.shape[0]
    base = 0
    for a in range(d):
        u = (z[a] - lo[a]) / h
        if not (u >= 0.0 and u <= shape[a] - 1):
            return c_out, m_out
        i = int(u)
        if i >= shape[a] - 1:
            i = shape[a] - 2
        t[a] = u - i
        base += i * strides[a]
    cv = 0.0
    mv = 0.0
    for corner in range(1 << d):
        w = 1.0
        k = base
        for a in range(d):
            if (corner >> a) & 1:
                w *= t[a]
                k += strides[a]
            else:
                w *= 1.0 - t[a]
        cv += w * c[k]
        mv += w * m0[k]
    return cv, mv


@dual()
def field_values(P, c, m0, lo, h, shape, strides, c_out, m_out):
    """Multilinear interpolation of (c, m0) at the rows of ``P``."""
    n, d = P.shape
    cv = np.empty(n)
    mv = np.empty(n)
    for p in prange(n):
        t = np.empty(d)
        cv[p], mv[p] = _interp(P[p], c, m0, lo, h, shape, strides, c_out, m_out, t)
    return cv, mv


@njit(cache=True)
def _env_sum_2d(c, base, t0, t1, s0, lin_off, seg_lo, seg_hi, kvT, inv_m0, f):
    """Aligned two-dimensional quadrature for a constant profile.

    The integrand is first written into the scratch row ``f``, then dotted
    with the kernel vectors using eight interleaved partial sums.  The order
    is explicit (no fastmath), so every build and every cache state gives the
    same bits."""
    w00 = (1.0 - t0) * (1.0 - t1)
    w10 = t0 * (1.0 - t1)
    w01 = (1.0 - t0) * t1
    w11 = t0 * t1
    for sg in range(seg_lo.shape[0]):
        k0 = seg_lo[sg]
        m = seg_hi[sg] - k0
        q = base + lin_off[k0]
        ca = c[q:q + m + 1]
        cb = c[q + s0:q + s0 + m + 1]
        fs = f[k0:k0 + m]
        for j in range(m):
            fs[j] = 1.0 - (w00 * ca[j] + w10 * cb[j] + w01 * ca[j + 1] + w11 * cb[j + 1]) * inv_m0
    kx = kvT[0]
    ky = kvT[1]
    M = kx.shape[0]
    x0 = x1 = x2 = x3 = x4 = x5 = x6 = x7 = 0.0
    y0 = y1 = y2 = y3 = y4 = y5 = y6 = y7 = 0.0
    j = 0
    while j + 8 <= M:
        x0 += kx[j] * f[j]
        x1 += kx[j + 1] * f[j + 1]
        x2 += kx[j + 2] * f[j + 2]
        x3 += kx[j + 3] * f[j + 3]
        x4 += kx[j + 4] * f[j + 4]
        x5 += kx[j + 5] * f[j + 5]
        x6 += kx[j + 6] * f[j + 6]
        x7 += kx[j + 7] * f[j + 7]
        y0 += ky[j] * f[j]
        y1 += ky[j + 1] * f[j + 1]
        y2 += ky[j + 2] * f[j + 2]
        y3 += ky[j + 3] * f[j + 3]
        y4 += ky[j + 4] * f[j + 4]
        y5 += ky[j + 5] * f[j + 5]
        y6 += ky[j + 6] * f[j + 6]
        y7 += ky[j + 7] * f[j + 7]
        j += 8
    while j < M:
        x0 += kx[j] * f[j]
        y0 += ky[j] * f[j]
        j += 1
    return (((x0 + x1) + (x2 + x3)) + ((x4 + x5) + (x6 + x7)),
            ((y0 + y1) + (y2 + y3)) + ((y4 + y5) + (y6 + y7)))


@dual()
def env_drift(X, offsets, kvT, c, m0, lo, h, shape, strides, c_out, m_out,
              lin_off, node_lo, node_hi, phase, aligned, seg_lo, seg_hi, m0_const):
    """Ball quadrature sum_k kvec_k (1 - c/m0)(X + offset_k) for every row.

    ``kvT`` holds the kernel vectors as a ``(d, M)`` array.  When the offsets
    sit on the node lattice (``aligned``) all quadrature points of a particle
    share one set of interpolation weights and offset ``k`` maps to node
    ``base + lin_off[k]``.  Particles whose ball leaves the grid fall back to
    per-point interpolation.  ``m0_const > 0`` marks a constant profile.
    ``seg_lo``/``seg_hi`` split the offsets into runs of consecutive nodes
    along the last axis, which the two-dimensional path reads as contiguous
    slices.
    """
    n, d = X.shape
    M = offsets.shape[0]
    out = np.zeros((n, d))
    ncorner = 1 << d
    inv_m0 = 1.0 / m0_const if m0_const > 0.0 else 0.0
    for p in prange(n):
        t = np.empty(d)
        z = np.empty(d)
        w = np.empty(ncorner)
        co = np.empty(ncorner, dtype=np.int64)
        acc0 = 0.0
        acc1 = 0.0
        acc2 = 0.0
        fast = aligned
        base = 0
        if fast:
            for a in range(d):
                u = (X[p, a] - lo[a]) / h + phase[a]
                if not (u > -1e9 and u < 1e9):
                    fast = False
                    break
                i = int(math.floor(u))
                if i + node_lo[a] < 0 or i + node_hi[a] + 1 > shape[a] - 1:
                    fast = False
                    break
                t[a] = u - i
                base += i * strides[a]
        if fast and d == 2 and m0_const > 0.0:
            acc0, acc1 = _env_sum_2d(c, base, t[0], t[1], strides[0], lin_off, seg_lo, seg_hi,
                                     kvT, inv_m0, np.empty(M))
        elif fast:
            for cidx in range(ncorner):
                wc = 1.0
                off = 0
                for a in range(d):
                    if (cidx >> a) & 1:
                        wc *= t[a]
                        off += strides[a]
                    else:
                        wc *= 1.0 - t[a]
                w[cidx] = wc
                co[cidx] = off
            for k in range(M):
                q = base + lin_off[k]
                cv = 0.0
                mv = 0.0
                for cidx in range(ncorner):
                    cv += w[cidx] * c[q + co[cidx]]
                    mv += w[cidx] * m0[q + co[cidx]]
                f = 1.0 - cv / mv
                acc0 += kvT[0, k] * f
                if d > 1:
                    acc1 += kvT[1, k] * f
                if d > 2:
                    acc2 += kvT[2, k] * f
        else:
            for k in range(M):
                for a in range(d):
                    z[a] = X[p, a] + offsets[k, a]
                cv, mv = _interp(z, c, m0, lo, h, shape, strides, c_out, m_out, t)
                f = 1.0 - cv / mv
                acc0 += kvT[0, k] * f
                if d > 1:
                    acc1 += kvT[1, k] * f
                if d > 2:
                    acc2 += kvT[2, k] * f
        out[p, 0] = acc0
        if d > 1:
            out[p, 1] = acc1
        if d > 2:
            out[p, 2] = acc2
    return out


@njit(cache=True)
def _axis_tables(X, lo, h, shape, inv2bw2, cutoff):
    """Per-particle node ranges along each axis with the squared node offsets
    and the matching 1-D Gaussian factors."""
    n, d = X.shape
    width = int(2.0 * cutoff / h) + 3
    first = np.zeros((n, d), dtype=np.int64)
    count = np.zeros((n, d), dtype=np.int64)
    ysq = np.zeros((n, d, width))
    table = np.zeros((n, d, width))
    for p in range(n):
        for a in range(d):
            # clamp in floating point first so far-away particles cannot overflow
            f0 = min(max(math.ceil((X[p, a] - cutoff - lo[a]) / h), 0.0), float(shape[a]))
            f1 = min(max(math.floor((X[p, a] + cutoff - lo[a]) / h), -1.0), shape[a] - 1.0)
            i0 = int(f0)
            i1 = int(f1)
            first[p, a] = i0
            m = min(max(0, i1 - i0 + 1), width)
            count[p, a] = m
            for k in range(m):
                y = (lo[a] + (i0 + k) * h) - X[p, a]
                ysq[p, a, k] = y * y
                table[p, a, k] = math.exp(-(y * y) * inv2bw2)
    return first, count, ysq, table


@njit(cache=True)
def _deposit3(u, p, base, r0, v0, first, count, ysq, table, strides, cut2):
    f1 = first[p, 1]
    f2 = first[p, 2]
    for k1 in range(count[p, 1]):
        r1 = r0 + ysq[p, 1, k1]
        if r1 > cut2:
            continue
        v1 = v0 * table[p, 1, k1]
        q1 = base + (f1 + k1) * strides[1] + f2
        for k2 in range(count[p, 2]):
            if r1 + ysq[p, 2, k2] <= cut2:
                u[q1 + k2] += v1 * table[p, 2, k2]


@njit(cache=True, inline="always")
def exp_neg(z):
    """``exp(-z)`` for ``z >= 0``.

    Below 2**-10 a degree-5 Taylor polynomial is used; its truncation error
    is under 1e-20, far below double rounding, and it is several times
    cheaper than the library call that handles larger arguments.
    """
    if z < 0.0009765625:
        return 1.0 - z * (1.0 - z * (0.5 - z * (1.0 / 6.0 - z * (1.0 / 24.0 - z * (1.0 / 120.0)))))
    return math.exp(-z)


@njit(cache=True, inline="always")
def _scale_span(c, u, start, stop, lam_dt):
    """``c *= exp_neg(lam_dt * u)`` on ``[start, stop)``.  When every argument
    is small the polynomial branch is taken for all nodes in one branch-free,
    vectorizable loop; the values are identical to the per-node form."""
    # zero-based views: a variable loop start defeats vectorization
    cs = c[start:stop]
    us = u[start:stop]
    m = stop - start
    # an integer count vectorizes where a floating max reduction does not
    big = 0
    for q in range(m):
        big += lam_dt * us[q] >= 0.0009765625
    if big == 0:
        for q in range(m):
            z = lam_dt * us[q]
            cs[q] *= 1.0 - z * (1.0 - z * (0.5 - z * (1.0 / 6.0 - z * (1.0 / 24.0 - z * (1.0 / 120.0)))))
    else:
        for q in range(m):
            cs[q] *= exp_neg(lam_dt * us[q])


@dual()
def scale_by_exp(c, u, lam_dt):
    """``c *= exp(-lam_dt * u)`` at every node (``u >= 0``)."""
    n = c.shape[0]
    chunk = 4096
    for b in prange((n + chunk - 1) // chunk):
        _scale_span(c, u, b * chunk, min(n, (b + 1) * chunk), lam_dt)


@njit(cache=True)
def _row_lists(first, count, n_rows):
    """For every node row along the first axis, the particles whose window
    covers it, in ascending particle order (compressed row storage)."""
    n = first.shape[0]
    start = np.zeros(n_rows + 1, dtype=np.int64)
    for p in range(n):
        for k in range(count[p, 0]):
            start[first[p, 0] + k + 1] += 1
    for i in range(n_rows):
        start[i + 1] += start[i]
    fill = start[:n_rows].copy()
    plist = np.empty(start[n_rows], dtype=np.int64)
    for p in range(n):
        for k in range(count[p, 0]):
            i = first[p, 0] + k
            plist[fill[i]] = p
            fill[i] += 1
    return start, plist


@dual()
def deplete(c, u, X, lo, h, shape, strides, inv2bw2, knorm, cutoff, inv_norm, lam_dt):
    """Mollified density of the rows of ``X`` at every node, written into the
    flat C-ordered array ``u``, followed by ``c *= exp(-lam_dt * u)`` when
    ``lam_dt > 0``.  Work is split into slabs along the first axis and every
    node adds the particles in row order."""
    n, d = X.shape
    first, count, ysq, table = _axis_tables(X, lo, h, shape, inv2bw2, cutoff)
    cut2 = cutoff * cutoff
    row = strides[0]
    start, plist = _row_lists(first, count, shape[0])
    for i0 in prange(shape[0]):
        base = i0 * row
        for q in range(row):
            u[base + q] = 0.0
        qlo = row
        qhi = 0
        for e in range(start[i0], start[i0 + 1]):
            p = plist[e]
            k0 = i0 - first[p, 0]
            r0 = ysq[p, 0, k0]
            if r0 > cut2:
                continue
            v0 = knorm * table[p, 0, k0]
            if d == 2:
                f1 = first[p, 1]
                m1 = count[p, 1]
                if m1 == 0:
                    continue
                qlo = min(qlo, f1)
                qhi = max(qhi, f1 + m1)
                us = u[base + f1:base + f1 + m1]
                ys = ysq[p, 1, :m1]
                ts = table[p, 1, :m1]
                for k1 in range(m1):
                    # nodes outside the disc receive an exact zero
                    us[k1] += v0 * ts[k1] if r0 + ys[k1] <= cut2 else 0.0
            elif d == 1:
                qlo = 0
                qhi = 1
                u[base] += v0
            else:
                qlo = 0
                qhi = row
                _deposit3(u, p, base, r0, v0, first, count, ysq, table, strides, cut2)
        # nodes outside [qlo, qhi) received nothing and stay exactly zero
        us = u[base + qlo:base + qhi]
        for q in range(qhi - qlo):
            us[q] *= inv_norm
        if lam_dt > 0.0:
            # exp_neg(0) == 1, so untouched nodes keep their value
            _scale_span(c, u, base + qlo, base + qhi, lam_dt)


@njit(cache=True)
def extent(X):
    """Length of the diagonal of the bounding box of the rows of ``X``."""
    n, d = X.shape
    s = 0.0
    for a in range(d):
        mn = X[0, a]
        mx = X[0, a]
        for i in range(1, n):
            mn = min(mn, X[i, a])
            mx = max(mx, X[i, a])
        s += (mx - mn) * (mx - mn)
    return math.sqrt(s)


@njit(cache=True)
def advance(X, pair, env, xi, dt, noise_scale):
    """Euler-Maruyama update ``X + (pair + env) dt + noise_scale xi``.

    Returns the new positions, the largest drift norm and whether every new
    coordinate is finite.
    """
    n, d = X.shape
    out = np.empty((n, d))
    dmax = 0.0
    ok = True
    for i in range(n):
        s = 0.0
        for a in range(d):
            b = pair[i, a] + env[i, a]
            s += b * b
            v = X[i, a] + b * dt + noise_scale * xi[i, a]
            if not math.isfinite(v):
                ok = False
            out[i, a] = v
        dmax = max(dmax, s)
    return out, math.sqrt(dmax), ok
