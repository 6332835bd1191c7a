"""Hot per-event scatter loops, JIT-compiled when numba is available.

Set EVTRACK_NUMBA=0 to force the pure-numpy fallbacks. Both paths produce
bit-identical arrays: accumulation order per output cell follows event
order in each implementation. benchmarks/bench_kernels.py times the two
paths against each other.

All kernels assume coordinates already validated against the grid and
timestamps sorted ascending.
"""

from __future__ import annotations

import os

import numpy as np


def _numba_requested() -> bool:
    return os.environ.get("EVTRACK_NUMBA", "1").strip().lower() not in (
        "0",
        "false",
        "no",
        "off",
    )


NUMBA_ENABLED = False
if _numba_requested():
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False


# ---------------------------------------------------------------------------
# pure-numpy reference implementations
# ---------------------------------------------------------------------------


def accumulate_histogram_numpy(x, y, p, out) -> None:
    np.add.at(out, (p, y, x), 1.0)


def accumulate_last_value_numpy(x, y, p, vals, out) -> None:
    # vals are non-decreasing per (p, y, x) cell because event time is
    # sorted, so a running maximum equals the last write.
    np.maximum.at(out, (p, y, x), vals)


def accumulate_volume_numpy(x, y, p, tstar, out) -> None:
    # out has shape (2, bins, H, W). Weight 1 - frac goes to the lower bin
    # and frac to the next one; mass that would spill past the last bin
    # edge is folded back so every event contributes exactly 1.0.
    bins = out.shape[1]
    b0 = np.minimum(tstar.astype(np.int64), bins - 1)
    frac = tstar - b0
    fold = b0 + 1 >= bins
    n = x.size
    # Interleave the two contributions per event so cell-level add order
    # matches the jit loop exactly (bitwise-identical floats).
    pp = np.repeat(p, 2)
    yy = np.repeat(y, 2)
    xx = np.repeat(x, 2)
    bb = np.empty(2 * n, np.int64)
    bb[0::2] = b0
    bb[1::2] = np.where(fold, b0, b0 + 1)
    ww = np.empty(2 * n, np.float64)
    ww[0::2] = np.where(fold, 1.0, 1.0 - frac)
    ww[1::2] = np.where(fold, 0.0, frac)
    np.add.at(out, (pp, bb, yy, xx), ww)


def mark_occupancy_numpy(x, y, out) -> None:
    out[y, x] = True


# ---------------------------------------------------------------------------
# numba loops (only compiled when enabled)
# ---------------------------------------------------------------------------

if NUMBA_ENABLED:

    @njit(cache=True)
    def _histogram_jit(x, y, p, out):  # pragma: no cover - thin jit wrapper
        for i in range(x.size):
            out[p[i], y[i], x[i]] += 1.0

    @njit(cache=True)
    def _last_value_jit(x, y, p, vals, out):  # pragma: no cover
        for i in range(x.size):
            out[p[i], y[i], x[i]] = vals[i]

    @njit(cache=True)
    def _volume_jit(x, y, p, tstar, out):  # pragma: no cover
        bins = out.shape[1]
        for i in range(x.size):
            b0 = int(tstar[i])
            if b0 > bins - 1:
                b0 = bins - 1
            if b0 + 1 >= bins:
                out[p[i], b0, y[i], x[i]] += 1.0
            else:
                frac = tstar[i] - b0
                out[p[i], b0, y[i], x[i]] += 1.0 - frac
                out[p[i], b0 + 1, y[i], x[i]] += frac

    @njit(cache=True)
    def _occupancy_jit(x, y, out):  # pragma: no cover
        for i in range(x.size):
            out[y[i], x[i]] = True

    accumulate_histogram = _histogram_jit
    accumulate_last_value = _last_value_jit
    accumulate_volume = _volume_jit
    mark_occupancy = _occupancy_jit
else:
    accumulate_histogram = accumulate_histogram_numpy
    accumulate_last_value = accumulate_last_value_numpy
    accumulate_volume = accumulate_volume_numpy
    mark_occupancy = mark_occupancy_numpy
