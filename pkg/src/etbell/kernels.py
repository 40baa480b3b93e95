"""Hot inner loops of the event simulation.

Each kernel exists twice: a numba version and a pure-numpy version with the
same semantics. ``dead_time_mask`` and ``window_join`` dispatch on
``ETBELL_DISABLE_NUMBA`` (see ``_accel``); both variants stay importable so
tests and the benchmark can compare them directly.
"""
from __future__ import annotations

import numpy as np

from ._accel import njit, use_numba


@njit(cache=True)
def dead_time_mask_numba(times, detector, dead_time, n_detectors):
    keep = np.ones(times.size, dtype=np.bool_)
    last = np.full(n_detectors, -np.inf)
    for k in range(times.size):
        d = detector[k]
        if times[k] - last[d] < dead_time:
            keep[k] = False
        else:
            last[d] = times[k]
    return keep


def dead_time_mask_numpy(times, detector, dead_time, n_detectors):
    keep = np.ones(times.size, dtype=bool)
    if dead_time <= 0 or times.size == 0:
        return keep
    for d in range(n_detectors):
        idx = np.flatnonzero(detector == d)
        if idx.size < 2:
            continue
        t = times[idx]
        # a hit further than dead_time from its raw predecessor is always kept;
        # only the crowded ones need the sequential rule
        crowded = np.flatnonzero(np.diff(t) < dead_time) + 1
        if crowded.size == 0:
            continue
        local = np.ones(t.size, dtype=bool)
        last = -np.inf
        for k in crowded:
            if local[k - 1]:
                last = t[k - 1]
            if t[k] - last < dead_time:
                local[k] = False
        keep[idx] = local
    return keep


@njit(cache=True)
def window_join_numba(ta, tb, window):
    """Index pairs (i, j) with |ta[i] - tb[j]| <= window; both inputs sorted."""
    na = ta.size
    nb = tb.size
    lo = np.zeros(na, dtype=np.int64)
    hi = np.zeros(na, dtype=np.int64)
    j = 0
    total = 0
    for i in range(na):
        while j < nb and tb[j] < ta[i] - window:
            j += 1
        k = j
        while k < nb and tb[k] <= ta[i] + window:
            k += 1
        lo[i] = j
        hi[i] = k
        total += k - j
    ia = np.empty(total, dtype=np.int64)
    ib = np.empty(total, dtype=np.int64)
    p = 0
    for i in range(na):
        for k in range(lo[i], hi[i]):
            ia[p] = i
            ib[p] = k
            p += 1
    return ia, ib


def window_join_numpy(ta, tb, window):
    lo = np.searchsorted(tb, ta - window, side="left")
    hi = np.searchsorted(tb, ta + window, side="right")
    n = np.maximum(hi - lo, 0)
    ia = np.repeat(np.arange(ta.size, dtype=np.int64), n)
    starts = np.repeat(np.cumsum(n) - n, n)
    ib = np.repeat(lo, n) + (np.arange(ia.size, dtype=np.int64) - starts)
    return ia, ib.astype(np.int64)


def dead_time_mask(times, detector, dead_time, n_detectors=4):
    """Non-paralyzable dead time: drop hits closer than ``dead_time`` to the
    previous kept hit on the same detector. ``times`` must be sorted."""
    times = np.ascontiguousarray(times, dtype=np.float64)
    detector = np.ascontiguousarray(detector, dtype=np.int64)
    if use_numba():
        return dead_time_mask_numba(times, detector, float(dead_time), int(n_detectors))
    return dead_time_mask_numpy(times, detector, float(dead_time), int(n_detectors))


def window_join(ta, tb, window):
    ta = np.ascontiguousarray(ta, dtype=np.float64)
    tb = np.ascontiguousarray(tb, dtype=np.float64)
    if use_numba():
        return window_join_numba(ta, tb, float(window))
    return window_join_numpy(ta, tb, float(window))
