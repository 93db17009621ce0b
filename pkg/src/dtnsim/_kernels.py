"""Earliest-arrival relaxation kernel over contact arrays.

This is the hot inner loop of route computation: a label-correcting sweep
over the contact table until arrival times reach a fixpoint. Two
implementations are provided: a numba ``@njit`` kernel and a vectorized
pure-numpy fallback. Set ``DTNSIM_NO_NUMBA=1`` to force the numpy path
(the same flag the benchmark uses to compare both).

All times are int64 milliseconds; ``INF_MS`` marks "unreachable".
"""
from __future__ import annotations

import os

import numpy as np

INF_MS = np.int64(2 ** 62)

_FORCE_NUMPY = os.environ.get("DTNSIM_NO_NUMBA", "") not in ("", "0")


def _arrival_numpy(frm, to, start, end, dur, n, src, t0, deadline):
    arr = np.full(n, INF_MS, dtype=np.int64)
    arr[src] = t0
    while True:
        a = arr[frm]
        s = np.maximum(a, start)
        e = s + dur
        ok = (a < INF_MS) & (e <= end) & (e <= deadline)
        if not ok.any():
            break
        new = arr.copy()
        np.minimum.at(new, to[ok], e[ok])
        if np.array_equal(new, arr):
            break
        arr = new
    return arr


def _arrival_python(frm, to, start, end, dur, n, src, t0, deadline):
    arr = np.full(n, INF_MS, dtype=np.int64)
    arr[src] = t0
    m = frm.shape[0]
    changed = True
    while changed:
        changed = False
        for i in range(m):
            a = arr[frm[i]]
            if a >= INF_MS:
                continue
            s = a if a > start[i] else start[i]
            e = s + dur[i]
            if e <= end[i] and e <= deadline and e < arr[to[i]]:
                arr[to[i]] = e
                changed = True
    return arr


if _FORCE_NUMPY:
    BACKEND = "numpy"
    _arrival_impl = _arrival_numpy
else:
    try:
        from numba import njit

        _arrival_impl = njit(cache=True)(_arrival_python)
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a declared dependency
        BACKEND = "numpy"
        _arrival_impl = _arrival_numpy


def plan_arrays(plan, size: int):
    """Contact table as parallel int64 arrays for a bundle of ``size`` bytes."""
    from .contacts import transmission_ms

    m = len(plan.contacts)
    frm = np.empty(m, dtype=np.int64)
    to = np.empty(m, dtype=np.int64)
    start = np.empty(m, dtype=np.int64)
    end = np.empty(m, dtype=np.int64)
    dur = np.empty(m, dtype=np.int64)
    for i, c in enumerate(plan.contacts):
        frm[i] = c.frm
        to[i] = c.to
        start[i] = c.start_ms
        end[i] = c.end_ms
        dur[i] = transmission_ms(size, c.rate)
    return frm, to, start, end, dur


def earliest_arrival_ms(plan, size: int, src: int, t0_ms: int,
                        deadline_ms: int = int(INF_MS)) -> np.ndarray:
    """Earliest full-custody arrival time at every node, int64 ms.

    Unreachable nodes (within ``deadline_ms``) hold ``INF_MS``.
    """
    frm, to, start, end, dur = plan_arrays(plan, size)
    return _arrival_impl(frm, to, start, end, dur, plan.node_count, src,
                         np.int64(t0_ms), np.int64(deadline_ms))
