"""Deterministic one-dimensional quadrature used for all analytic moments.

Everything is composite Simpson: panel counts double until two successive
estimates agree to the requested tolerance.  Integrands with known kinks
(sieve cell edges, spline knots) are split at those breakpoints so each
piece is smooth.
"""

import numpy as np

DEFAULT_TOL = 1e-10
_START_PANELS = 64
_MAX_PANELS = 2**15


def simpson_nodes_weights(a, b, panels):
    """Nodes and weights of composite Simpson with ``panels`` (even) panels."""
    if panels % 2:
        panels += 1
    x = np.linspace(a, b, panels + 1)
    h = (b - a) / panels
    w = np.full(panels + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return x, w * (h / 3.0)


def composite_simpson(f, a, b, panels):
    x, w = simpson_nodes_weights(a, b, panels)
    return float(np.dot(w, f(x)))


def _simpson_piece(f, a, b, tol):
    panels = _START_PANELS
    prev = composite_simpson(f, a, b, panels)
    while panels < _MAX_PANELS:
        panels *= 2
        cur = composite_simpson(f, a, b, panels)
        if abs(cur - prev) <= tol:
            return cur
        prev = cur
    return prev


def split_points(a, b, breakpoints):
    """Sorted piece edges: a, b plus any interior breakpoints."""
    pts = [a, b]
    if breakpoints is not None:
        pts.extend(p for p in np.atleast_1d(breakpoints) if a < p < b)
    return np.unique(np.asarray(pts, dtype=float))

def integrate(f, a, b, tol=DEFAULT_TOL, breakpoints=None):
    """Integral of a vectorized ``f`` over [a, b], refined to ``tol``.

    ``breakpoints`` mark discontinuities of f or its derivatives; the
    interval is split there and each smooth piece refined separately with
    a per-piece share of the tolerance.
    """
    edges = split_points(a, b, breakpoints)
    npieces = len(edges) - 1
    if npieces == 0:
        return 0.0
    piece_tol = tol / npieces
    return sum(
        _simpson_piece(f, lo, hi, piece_tol)
        for lo, hi in zip(edges[:-1], edges[1:])
        if hi > lo
    )


def grid_nodes_weights(edges, panels_per_piece=16):
    """Global Simpson nodes/weights over consecutive pieces given by ``edges``.

    Used to turn matrix-valued integrands (e.g. Gram matrices) into a single
    weighted dot product over one shared grid.
    """
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        x, w = simpson_nodes_weights(lo, hi, panels_per_piece)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def cumulative_integral(f, a, b, resolution=4096):
    """Cumulative integral of ``f`` on a uniform grid of ``resolution`` cells.

    Returns (grid, F) with F[i] the integral from ``a`` to grid[i], computed
    by per-cell Simpson (midpoint refinement), so F is exact to O(h^4) for
    smooth f and monotone whenever f >= 0.
    """
    grid = np.linspace(a, b, resolution + 1)
    h = (b - a) / resolution
    mid = 0.5 * (grid[:-1] + grid[1:])
    cell = (h / 6.0) * (f(grid[:-1]) + 4.0 * f(mid) + f(grid[1:]))
    F = np.empty(resolution + 1)
    F[0] = 0.0
    np.cumsum(cell, out=F[1:])
    return grid, F
