"""Cubic smoothing splines with GCV penalty selection in O(n).

Minimises ``sum (y_i - g(t_i))**2 + lam * integral g''(t)**2 dt`` over natural
cubic splines with knots at the samples (Reinsch form, Green & Silverman
ch. 2). The GCV trace uses the banded-inverse recursion of Hutchinson & de
Hoog, so every criterion evaluation is linear in the number of samples.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy.interpolate import PPoly
from scipy.optimize import minimize_scalar


@nb.njit(cache=True)
def _bands(h):
    m = h.size - 1
    qd = np.empty(m)   # Q[j, j]
    qm = np.empty(m)   # Q[j+1, j]
    qu = np.empty(m)   # Q[j+2, j]
    r0 = np.empty(m)
    r1 = np.zeros(max(m - 1, 0))
    for j in range(m):
        qd[j] = 1.0 / h[j]
        qu[j] = 1.0 / h[j + 1]
        qm[j] = -qd[j] - qu[j]
        r0[j] = (h[j] + h[j + 1]) / 3.0
        if j < m - 1:
            r1[j] = h[j + 1] / 6.0
    qq0 = qd * qd + qm * qm + qu * qu
    qq1 = np.zeros(max(m - 1, 0))
    qq2 = np.zeros(max(m - 2, 0))
    for j in range(m - 1):
        qq1[j] = qm[j] * qd[j + 1] + qu[j] * qm[j + 1]
    for j in range(m - 2):
        qq2[j] = qu[j] * qd[j + 2]
    return qd, qm, qu, r0, r1, qq0, qq1, qq2


@nb.njit(cache=True)
def _ldl(b0, b1, b2):
    m = b0.size
    d = np.empty(m)
    l1 = np.zeros(m)
    l2 = np.zeros(m)
    for i in range(m):
        di = b0[i]
        if i >= 1:
            di -= l1[i - 1] * l1[i - 1] * d[i - 1]
        if i >= 2:
            di -= l2[i - 2] * l2[i - 2] * d[i - 2]
        d[i] = di
        if i + 1 < m:
            v = b1[i]
            if i >= 1:
                v -= l2[i - 1] * l1[i - 1] * d[i - 1]
            l1[i] = v / di
        if i + 2 < m:
            l2[i] = b2[i] / di
    return d, l1, l2


@nb.njit(cache=True)
def _solve(d, l1, l2, rhs):
    m = d.size
    z = np.empty(m)
    for i in range(m):
        v = rhs[i]
        if i >= 1:
            v -= l1[i - 1] * z[i - 1]
        if i >= 2:
            v -= l2[i - 2] * z[i - 2]
        z[i] = v
    x = np.empty(m)
    for i in range(m - 1, -1, -1):
        v = z[i] / d[i]
        if i + 1 < m:
            v -= l1[i] * x[i + 1]
        if i + 2 < m:
            v -= l2[i] * x[i + 2]
        x[i] = v
    return x


@nb.njit(cache=True)
def _trace_inv_qq(d, l1, l2, qq0, qq1, qq2):
    """tr(B^-1 Q^T Q) from the central five bands of B^-1."""
    m = d.size
    s0 = np.zeros(m + 2)
    s1 = np.zeros(m + 2)
    tr = 0.0
    for i in range(m - 1, -1, -1):
        a = l1[i] if i + 1 < m else 0.0
        b = l2[i] if i + 2 < m else 0.0
        s1i = -(a * s0[i + 1] + b * s1[i + 1])
        s2i = -(a * s1[i + 1] + b * s0[i + 2])
        s0i = 1.0 / d[i] - a * s1i - b * s2i
        s0[i] = s0i
        s1[i] = s1i
        tr += s0i * qq0[i]
        if i + 1 < m:
            tr += 2.0 * s1i * qq1[i]
        if i + 2 < m:
            tr += 2.0 * s2i * qq2[i]
    return tr


@nb.njit(cache=True)
def _fit(h, y, lam, need_trace):
    qd, qm, qu, r0, r1, qq0, qq1, qq2 = _bands(h)
    m = r0.size
    b0 = r0 + lam * qq0
    b1 = r1 + lam * qq1
    b2 = lam * qq2
    rhs = np.empty(m)
    for j in range(m):
        rhs[j] = qd[j] * y[j] + qm[j] * y[j + 1] + qu[j] * y[j + 2]
    d, l1, l2 = _ldl(b0, b1, b2)
    gam = _solve(d, l1, l2, rhs)
    n = y.size
    qg = np.zeros(n)  # Q @ gamma
    for j in range(m):
        qg[j] += qd[j] * gam[j]
        qg[j + 1] += qm[j] * gam[j]
        qg[j + 2] += qu[j] * gam[j]
    tr = _trace_inv_qq(d, l1, l2, qq0, qq1, qq2) if need_trace else np.nan
    return gam, qg, tr


def _gcv(h, y, lam):
    _, qg, tr = _fit(h, y, lam, True)
    # n*RSS/(n - tr A)^2 with RSS = lam^2 |Q gamma|^2 and n - tr A = lam * tr
    return y.size * float(qg @ qg) / (tr * tr)


@dataclass(frozen=True, eq=False)
class SmoothedSeries:
    knots: np.ndarray
    fitted: np.ndarray
    second: np.ndarray  # second derivative at knots (zero at both ends)
    lam: float
    edf: float
    residual_rms: float
    poly: PPoly

    def __call__(self, t):
        return self.poly(t)

    def derivative(self, t):
        return self.poly(t, 1)


def _ppoly(t, g, gam):
    h = np.diff(t)
    c = np.empty((4, h.size))
    c[0] = (gam[1:] - gam[:-1]) / (6.0 * h)
    c[1] = gam[:-1] / 2.0
    c[2] = np.diff(g) / h - h * (2.0 * gam[:-1] + gam[1:]) / 6.0
    c[3] = g[:-1]
    return PPoly(c, t)


def select_penalty(t, y, log10_range=(-4.0, 10.0), grid_step=0.25) -> float:
    """Penalty minimising generalised cross-validation (coarse grid, then Brent)."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    h = np.diff(t)
    scale = 3.0 * np.log10(np.mean(h))
    lo, hi = log10_range[0] + scale, log10_range[1] + scale
    grid = np.arange(lo, hi + 1e-12, grid_step)
    scores = np.array([_gcv(h, y, 10.0 ** g) for g in grid])
    if not np.any(scores > 0):
        return float(10.0 ** grid[0])  # exact fit for every penalty (affine data)
    k = int(np.argmin(scores))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    res = minimize_scalar(lambda g: _gcv(h, y, 10.0 ** g), bounds=(a, b), method="bounded",
                          options={"xatol": 1e-3})
    best = res.x if res.fun <= scores[k] else grid[k]
    return float(10.0 ** best)


def smooth(t, y, penalty: str | float = "gcv", rms_cap: float | None = None) -> SmoothedSeries:
    """Fit a cubic smoothing spline to samples ``y`` at strictly increasing ``t``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("t and y must be 1-D arrays of equal length")
    if t.size < 4:
        raise ValueError(f"smoothing needs at least 4 samples, got {t.size}")
    if np.any(np.diff(t) <= 0):
        raise ValueError("sample times must be strictly increasing")
    if not np.all(np.isfinite(y)):
        raise ValueError("cannot smooth non-finite samples")
    lam = select_penalty(t, y) if penalty == "gcv" else float(penalty)
    if not lam > 0:
        raise ValueError("penalty must be positive")
    h = np.diff(t)
    gam, qg, tr = _fit(h, y, lam, True)
    g = y - lam * qg
    second = np.concatenate(([0.0], gam, [0.0]))
    rms = float(np.sqrt(np.mean((y - g) ** 2)))
    if rms_cap is not None and rms > rms_cap:
        raise ValueError(f"smoothing residual RMS {rms:.3g} exceeds cap {rms_cap:.3g}")
    return SmoothedSeries(t, g, second, lam, float(y.size - lam * tr), rms, _ppoly(t, g, second))
