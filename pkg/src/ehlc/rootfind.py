"""Bracketed root finding and scalar maximization helpers.

Brackets are located by a sign scan over a linear or log-spaced mesh and
refined with Brent's method.  The target equations have at most a handful
of roots, so scanning is robust and cheap.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import optimize

from .errors import NoRootInBracket

__all__ = ["all_roots", "first_root", "golden_max"]

_SCAN_POINTS = 512


def _mesh(lo: float, hi: float, n: int, log: bool) -> np.ndarray:
    if log:
        lo_ = max(lo, hi * 1e-16 if hi > 0 else 1e-300)
        return np.geomspace(lo_, hi, n)
    return np.linspace(lo, hi, n)


def all_roots(f, lo, hi, n=_SCAN_POINTS, log=False, xtol=1e-14, rtol=1e-12):
    """All roots of ``f`` on [lo, hi] found by sign scan plus Brent refine.

    Mesh points where ``f`` is non-finite are skipped.  Exact zeros at mesh
    points are returned directly.
    """
    if hi <= lo:
        return []
    xs = _mesh(lo, hi, n, log)
    fs = np.array([f(x) for x in xs], dtype=float)
    ok = np.isfinite(fs)
    roots = []
    for x, v in zip(xs[ok], fs[ok]):
        if v == 0.0:
            roots.append(float(x))
    idx = np.nonzero(ok)[0]
    for a_i, b_i in zip(idx[:-1], idx[1:]):
        fa, fb = fs[a_i], fs[b_i]
        if fa == 0.0 or fb == 0.0 or fa * fb > 0:
            continue
        try:
            r = optimize.brentq(f, xs[a_i], xs[b_i], xtol=xtol, rtol=rtol)
        except ValueError:
            continue
        roots.append(float(r))
    roots.sort()
    dedup = []
    span = max(abs(hi), abs(lo), 1.0)
    for r in roots:
        if not dedup or abs(r - dedup[-1]) > 1e-12 * span:
            dedup.append(r)
    return dedup


def first_root(f, lo, hi, n=_SCAN_POINTS, log=False, required=False):
    """Smallest root of ``f`` on [lo, hi]; raises if ``required`` and none."""
    roots = all_roots(f, lo, hi, n=n, log=log)
    if roots:
        return roots[0]
    if required:
        raise NoRootInBracket(
            f"no sign change for root on [{lo}, {hi}]", scanned=n
        )
    return None


def golden_max(f, lo, hi, tol=1e-10, coarse=64):
    """Maximize a scalar function on [lo, hi].

    A coarse scan locates the best cell, then golden-section search refines
    it.  Suitable for the unimodal-after-restriction profiles that arise
    here; the coarse scan guards against picking a minor local bump.
    Returns (argmax, max).
    """
    if hi <= lo:
        return lo, f(lo)
    xs = np.linspace(lo, hi, coarse)
    fs = np.array([f(x) for x in xs], dtype=float)
    fs[~np.isfinite(fs)] = -math.inf
    j = int(np.argmax(fs))
    a = xs[max(j - 1, 0)]
    b = xs[min(j + 1, coarse - 1)]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = c if fc >= fd else d
    fx = max(fc, fd)
    if fs[j] > fx:
        return float(xs[j]), float(fs[j])
    return float(x), float(fx)
