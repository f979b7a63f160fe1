"""Distance-minimizing projection onto the band |r - b.w| <= half_width.

Points already inside the band are returned unchanged.  Violators are
projected onto the nearer boundary surface b.w = c.  In the rotated
coordinates u = (b+w)/sqrt(2), v = (b-w)/sqrt(2) the boundary becomes
|u|^2 - |v|^2 = 2c and the stationarity conditions read u = u0/(1-lam),
v = v0/(1+lam).  The multiplier equation

    h(lam) = |u0|^2/(1-lam)^2 - |v0|^2/(1+lam)^2 - 2c

is strictly increasing on (-1, 1) with a sign change across the interval
whenever u0 and v0 are both nonzero, so the root is unique and bracketed
bisection with a Newton polish finds it reliably.  Inputs with u0 or v0
(numerically) zero are handled by closed forms; direction ties there are
broken toward the first coordinate axis so runs stay reproducible.
"""

from __future__ import annotations

import numpy as np

_SQRT_HALF = np.sqrt(0.5)
_LAMBDA_EDGE = 1.0 - 1e-9


class ProjectionError(RuntimeError):
    """Root-finder failed to meet tolerance; carries the offending inputs."""

    def __init__(self, message, b0=None, w0=None, r=None):
        super().__init__(message)
        self.b0 = b0
        self.w0 = w0
        self.r = r


def _solve_lambda(su, sv, c, tol, max_iter):
    """Vectorized root of h on (-1, 1); assumes a sign change exists.

    Every row is frozen the moment it converges, so a row's trajectory
    depends only on its own inputs and results are independent of how rows
    are batched together.
    """
    lo = np.full(su.shape, -_LAMBDA_EDGE)
    hi = np.full(su.shape, _LAMBDA_EDGE)

    def h(lam):
        return su / (1.0 - lam) ** 2 - sv / (1.0 + lam) ** 2 - 2.0 * c

    lam = 0.5 * (lo + hi)
    done = np.zeros(su.shape, dtype=bool)
    for _ in range(max_iter):
        val = h(lam)
        done |= np.abs(val) <= 2.0 * tol
        if np.all(done):
            break
        active = ~done
        below = val < 0.0
        lo = np.where(active & below, lam, lo)
        hi = np.where(active & ~below, lam, hi)
        # Newton step where it stays inside the bracket, bisection otherwise
        deriv = 2.0 * su / (1.0 - lam) ** 3 + 2.0 * sv / (1.0 + lam) ** 3
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = lam - val / deriv
        ok = np.isfinite(newton) & (newton > lo) & (newton < hi)
        lam = np.where(active, np.where(ok, newton, 0.5 * (lo + hi)), lam)
    return lam, np.abs(h(lam)) * 0.5


def _degenerate_uv(u0, v0, su, sv, c):
    """Closed-form projection when u0 or v0 vanishes (lam at +-1 limits)."""
    n = u0.shape[0]
    d = u0.shape[1]
    u1 = np.zeros_like(u0)
    v1 = np.zeros_like(v0)
    e1 = np.zeros(d)
    e1[0] = 1.0
    for i in range(n):
        ci = c[i]
        nu = np.sqrt(su[i])
        nv = np.sqrt(sv[i])
        if su[i] == 0.0 and sv[i] == 0.0:
            if ci >= 0.0:
                u1[i] = np.sqrt(2.0 * ci) * e1
            else:
                v1[i] = np.sqrt(-2.0 * ci) * e1
        elif su[i] == 0.0:
            # u free in direction; stationary v = v0/2 when reachable
            uhat = e1
            if sv[i] / 4.0 + 2.0 * ci >= 0.0:
                v1[i] = v0[i] / 2.0
                u1[i] = np.sqrt(sv[i] / 4.0 + 2.0 * ci) * uhat
            else:
                v1[i] = v0[i] * (np.sqrt(-2.0 * ci) / nv)
        else:
            vhat = e1
            if su[i] / 4.0 - 2.0 * ci >= 0.0:
                u1[i] = u0[i] / 2.0
                v1[i] = np.sqrt(su[i] / 4.0 - 2.0 * ci) * vhat
            else:
                u1[i] = u0[i] * (np.sqrt(2.0 * ci) / nu)
    return u1, v1


def project_band_batch(b, w, r, half_width=0.5, tol=1e-12, max_iter=200, pool=None):
    """Project each row of (b, w) onto {|r - b.w| <= half_width}.

    Parameters
    ----------
    b, w : (n, d) arrays of bit/weight replicas.
    r : (n,) target values.
    pool : optional concurrent.futures executor; violating rows are split
        into per-thread chunks whose results are bitwise independent of the
        chunking, so threaded runs reproduce sequential ones exactly.

    Returns new arrays; inputs are never mutated.
    """
    b = np.asarray(b, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    p = np.einsum("nd,nd->n", b, w)
    gap = r - p
    viol = np.abs(gap) > half_width
    b1 = b.copy()
    w1 = w.copy()
    if not np.any(viol):
        return b1, w1
    idx = np.flatnonzero(viol)
    c = np.where(p[idx] < r[idx] - half_width, r[idx] - half_width, r[idx] + half_width)
    if pool is None or idx.size < 2:
        nb, nw = _project_violators(b[idx], w[idx], r[idx], c, tol, max_iter)
    else:
        chunks = np.array_split(np.arange(idx.size), pool._max_workers)
        chunks = [ch for ch in chunks if ch.size]
        futures = [pool.submit(_project_violators, b[idx[ch]], w[idx[ch]], r[idx[ch]],
                               c[ch], tol, max_iter) for ch in chunks]
        parts = [f.result() for f in futures]
        nb = np.concatenate([pb for pb, _ in parts])
        nw = np.concatenate([pw for _, pw in parts])
    b1[idx] = nb
    w1[idx] = nw
    return b1, w1


def _project_violators(b0, w0, r, c, tol, max_iter):
    u0 = (b0 + w0) * _SQRT_HALF
    v0 = (b0 - w0) * _SQRT_HALF
    su = np.einsum("nd,nd->n", u0, u0)
    sv = np.einsum("nd,nd->n", v0, v0)
    u1 = np.empty_like(u0)
    v1 = np.empty_like(v0)

    # a bracket exists iff h changes sign across the clamped interval
    edge = _LAMBDA_EDGE
    h_lo = su / (1.0 + edge) ** 2 - sv / (1.0 - edge) ** 2 - 2.0 * c
    h_hi = su / (1.0 - edge) ** 2 - sv / (1.0 + edge) ** 2 - 2.0 * c
    generic = (h_lo < 0.0) & (h_hi > 0.0)
    deg = ~generic

    if np.any(generic):
        g = np.flatnonzero(generic)
        lam, resid = _solve_lambda(su[g], sv[g], c[g], tol, max_iter)
        if np.any(resid > tol):
            bad = g[int(np.argmax(resid))]
            raise ProjectionError(
                f"bilinear projection did not converge (residual {resid.max():.3e} > {tol:.1e})",
                b0=b0[bad].copy(), w0=w0[bad].copy(), r=float(r[bad]))
        u1[g] = u0[g] / (1.0 - lam)[:, None]
        v1[g] = v0[g] / (1.0 + lam)[:, None]
    if np.any(deg):
        gd = np.flatnonzero(deg)
        u1[gd], v1[gd] = _degenerate_uv(u0[gd], v0[gd], su[gd], sv[gd], c[gd])

    b1 = (u1 + v1) * _SQRT_HALF
    w1 = (u1 - v1) * _SQRT_HALF
    return b1, w1


def project_edge(b0, w0, r, half_width=0.5, tol=1e-12, max_iter=200):
    """Project a single (b, w) pair onto the rating band.

    Returns the nearest (b1, w1) with |r - b1.w1| <= half_width, measured by
    squared Euclidean distance on the concatenated pair.
    """
    b0 = np.atleast_1d(np.asarray(b0, dtype=np.float64))
    w0 = np.atleast_1d(np.asarray(w0, dtype=np.float64))
    if b0.shape != w0.shape:
        raise ValueError("b0 and w0 must have the same shape")
    b1, w1 = project_band_batch(b0[None, :], w0[None, :], np.array([r]),
                                half_width=half_width, tol=tol, max_iter=max_iter)
    return b1[0], w1[0]
