"""Scalar search helpers shared by the conjugate and speed computations."""

import math

import numpy as np

INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_min(fn, lo, hi, tol=1e-10, max_iter=500):
    """Golden-section minimisation of a unimodal ``fn`` on ``[lo, hi]``.

    Returns ``(argmin, fmin)``. The endpoints are compared against the
    interior estimate so a monotone ``fn`` returns the boundary point.
    """
    a, b = float(lo), float(hi)
    f_lo, f_hi = fn(a), fn(b)
    x1 = b - INVPHI * (b - a)
    x2 = a + INVPHI * (b - a)
    f1, f2 = fn(x1), fn(x2)
    it = 0
    while b - a > tol and it < max_iter:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - INVPHI * (b - a)
            f1 = fn(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + INVPHI * (b - a)
            f2 = fn(x2)
        it += 1
    x, fx = (x1, f1) if f1 <= f2 else (x2, f2)
    if f_lo < fx:
        return float(lo), f_lo
    if f_hi < fx:
        return float(hi), f_hi
    return x, fx


def scan_then_golden(fn, grid, tol=1e-10):
    """Minimise ``fn`` by a grid scan followed by golden refinement.

    ``grid`` must be sorted. The refinement bracket is the pair of grid
    neighbours around the best scanned point, so ``fn`` only needs to be
    unimodal on that bracket.
    """
    grid = np.asarray(grid, dtype=float)
    vals = np.array([fn(g) for g in grid])
    k = int(np.argmin(vals))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, len(grid) - 1)]
    x, fx = golden_min(fn, lo, hi, tol=tol)
    if vals[k] < fx:
        return float(grid[k]), float(vals[k])
    return x, fx


def bisect(fn, lo, hi, tol=1e-12, max_iter=400):
    """Bisection for a sign change of ``fn`` on ``[lo, hi]``."""
    f_lo = fn(lo)
    it = 0
    while hi - lo > tol and it < max_iter:
        mid = 0.5 * (lo + hi)
        f_mid = fn(mid)
        if (f_mid > 0) == (f_lo > 0) and f_mid != 0:
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        it += 1
    return 0.5 * (lo + hi)
