"""Natural visibility graphs of real-valued series.

Two nodes ``a < b`` are linked when every intermediate sample lies strictly
below the segment joining ``(a, y[a])`` and ``(b, y[b])``.  Time stamps are
the integer sample indices, so the test is done on the division-free form

    (y[c] - y[b]) * (b - a) < (y[a] - y[b]) * (b - c)

Collinear or equal-height intermediates block the view.

``nvg_naive`` checks every pair against every intermediate sample and is the
reference.  ``nvg_fast`` splits at the segment maximum, sweeps outwards from
it keeping only the steepest point seen so far, and recurses on both sides.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .errors import InvalidInputError
from .graph import Graph


class VisibilityGraph(Graph):
    """Graph whose node ``i`` is sample ``i`` of the source series."""


def _as_series(series) -> np.ndarray:
    y = np.asarray(series, dtype=np.float64).ravel()
    if y.size < 1:
        raise InvalidInputError("series must contain at least one value")
    bad = np.flatnonzero(~np.isfinite(y))
    if bad.size:
        raise InvalidInputError(f"non-finite value at index {int(bad[0])}")
    return y


@njit(cache=True, inline="always")
def _sees_over(y, a, b, c):
    # True when intermediate c is strictly below the a-b segment.
    return (y[c] - y[b]) * (b - a) < (y[a] - y[b]) * (b - c)


@njit(cache=True)
def _naive_edges(y):
    n = y.shape[0]
    cap = max(n * (n - 1) // 2, 1)
    out = np.empty((cap, 2), dtype=np.int64)
    k = 0
    for a in range(n - 1):
        for b in range(a + 1, n):
            ok = True
            for c in range(a + 1, b):
                if not _sees_over(y, a, b, c):
                    ok = False
                    break
            if ok:
                out[k, 0] = a
                out[k, 1] = b
                k += 1
    return out[:k]


@njit(cache=True)
def _fast_edges(y):
    n = y.shape[0]
    cap = max(n * (n - 1) // 2, 1)
    out = np.empty((cap, 2), dtype=np.int64)
    k = 0
    stack = np.empty((n + 1, 2), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = n - 1
    top = 1
    while top > 0:
        top -= 1
        lo = stack[top, 0]
        hi = stack[top, 1]
        p = lo
        for i in range(lo + 1, hi + 1):
            if y[i] > y[p]:
                p = i
        # rightwards: the last visible node is always the steepest blocker
        blocker = -1
        for c in range(p + 1, hi + 1):
            if blocker < 0 or _sees_over(y, p, c, blocker):
                out[k, 0] = p
                out[k, 1] = c
                k += 1
                blocker = c
        blocker = -1
        for c in range(p - 1, lo - 1, -1):
            if blocker < 0 or _sees_over(y, c, p, blocker):
                out[k, 0] = c
                out[k, 1] = p
                k += 1
                blocker = c
        if p - 1 > lo:
            stack[top, 0] = lo
            stack[top, 1] = p - 1
            top += 1
        if hi > p + 1:
            stack[top, 0] = p + 1
            stack[top, 1] = hi
            top += 1
    return out[:k]


def nvg_naive(series) -> VisibilityGraph:
    """Reference construction, cubic in the worst case."""
    y = _as_series(series)
    return VisibilityGraph(y.size, _naive_edges(y))


def nvg_fast(series) -> VisibilityGraph:
    """Divide-and-conquer construction; same edge set as :func:`nvg_naive`."""
    y = _as_series(series)
    return VisibilityGraph(y.size, _fast_edges(y))
